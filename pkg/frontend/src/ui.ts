import { describeStatus, polylinePoints, seriesFromStatus } from './dashboard';
import type { QueueStore, TaskCard } from './queueStore';
import type { Label, RunStatus } from './types';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface ViewCallbacks {
  onSelect: (recordId: string, label: Label) => void;
  onSubmit: (recordId: string) => void;
}

/** DOM renderer. Article text is always injected via textContent. */
export class View {
  private focusIndex = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly callbacks: ViewCallbacks,
  ) {
    root.innerHTML = `
      <header>
        <h1>veriloop annotation</h1>
        <div id="status-line" class="status-line"></div>
        <div id="banner" class="banner" hidden></div>
      </header>
      <main>
        <section id="queue"><h2>Review queue</h2><div id="cards"></div></section>
        <section id="dashboard">
          <h2>Run dashboard</h2>
          <div id="charts"></div>
        </section>
      </main>
      <footer class="hint">j/k: move — f/r: label — enter: submit</footer>
    `;
    document.addEventListener('keydown', (event) => this.onKey(event));
  }

  showBanner(message: string): void {
    const banner = this.root.querySelector<HTMLElement>('#banner')!;
    banner.hidden = false;
    banner.textContent = message;
  }

  clearBanner(): void {
    const banner = this.root.querySelector<HTMLElement>('#banner')!;
    banner.hidden = true;
    banner.textContent = '';
  }

  renderStatus(status: RunStatus): void {
    this.root.querySelector('#status-line')!.textContent = describeStatus(status);
    const charts = this.root.querySelector<HTMLElement>('#charts')!;
    charts.innerHTML = '';
    const series = seriesFromStatus(status);
    charts.appendChild(this.chart('macro F1 per round', series.rounds, series.macroF1, 'f1-chart'));
    charts.appendChild(this.chart('total cost (USD)', series.rounds, series.totalUsd, 'cost-chart'));
    const latest = status.metrics[status.metrics.length - 1];
    const summary = document.createElement('dl');
    summary.id = 'summary';
    summary.append(
      ...entry('labelled', String(status.labelled)),
      ...entry('pool remaining', String(status.pool_remaining)),
      ...entry('macro F1', latest?.macro_f1 == null ? '—' : latest.macro_f1.toFixed(4)),
      ...entry('total USD', status.cost.total_usd.toFixed(2)),
    );
    charts.appendChild(summary);
  }

  renderQueue(store: QueueStore, awaiting: boolean): void {
    const host = this.root.querySelector<HTMLElement>('#cards')!;
    host.innerHTML = '';
    const cards = store.visible;
    if (!awaiting || cards.length === 0) {
      const empty = document.createElement('p');
      empty.className = 'empty-state';
      empty.textContent = awaiting ? 'no tasks queued' : 'no tasks — the loop is not waiting on humans';
      host.appendChild(empty);
      return;
    }
    this.focusIndex = Math.min(this.focusIndex, cards.length - 1);
    cards.forEach((card, index) => host.appendChild(this.card(card, index === this.focusIndex)));
  }

  private card(card: TaskCard, focused: boolean): HTMLElement {
    const element = document.createElement('article');
    element.className = `task-card${focused ? ' focused' : ''} state-${card.state}`;
    element.dataset.recordId = card.task.record_id;

    const rank = document.createElement('span');
    rank.className = 'rank';
    rank.textContent = `#${card.task.flagged_rank + 1}`;
    element.appendChild(rank);

    const text = document.createElement('p');
    text.className = 'article-text';
    text.textContent = card.task.text;
    element.appendChild(text);

    const meta = document.createElement('p');
    meta.className = 'meta';
    const probe =
      card.task.probe_self_probability == null
        ? 'n/a'
        : card.task.probe_self_probability.toFixed(3);
    const llm = card.task.llm_label == null ? 'abstained' : card.task.llm_label === 1 ? 'Fake' : 'Real';
    meta.textContent = `LLM says ${llm} — probe confidence ${probe}`;
    element.appendChild(meta);

    const neighbors = document.createElement('ul');
    neighbors.className = 'neighbors';
    for (const demo of card.task.neighbors) {
      const item = document.createElement('li');
      item.textContent = `[${demo.label === 1 ? 'Fake' : 'Real'}] ${demo.text}`;
      neighbors.appendChild(item);
    }
    element.appendChild(neighbors);

    // reserved for model-generated rationales; intentionally empty for now
    const explanation = document.createElement('div');
    explanation.className = 'explanation-slot';
    element.appendChild(explanation);

    if (card.state === 'conflict' || card.state === 'error') {
      const badge = document.createElement('span');
      badge.className = `badge badge-${card.state}`;
      badge.textContent = card.message;
      element.appendChild(badge);
    }

    const controls = document.createElement('div');
    controls.className = 'controls';
    for (const label of ['fake', 'real'] as Label[]) {
      const button = document.createElement('button');
      button.textContent = label;
      button.className = `label-btn${card.selectedLabel === label ? ' selected' : ''}`;
      button.addEventListener('click', () => this.callbacks.onSelect(card.task.record_id, label));
      controls.appendChild(button);
    }
    const submit = document.createElement('button');
    submit.textContent = 'submit';
    submit.className = 'submit-btn';
    submit.disabled = card.selectedLabel === null;
    submit.addEventListener('click', () => this.callbacks.onSubmit(card.task.record_id));
    controls.appendChild(submit);
    element.appendChild(controls);
    return element;
  }

  private chart(title: string, rounds: number[], values: (number | null)[], id: string): HTMLElement {
    const wrap = document.createElement('figure');
    wrap.id = id;
    const caption = document.createElement('figcaption');
    caption.textContent = title;
    wrap.appendChild(caption);
    const svg = document.createElementNS(SVG_NS, 'svg');
    svg.setAttribute('viewBox', '0 0 240 120');
    svg.setAttribute('width', '240');
    svg.setAttribute('height', '120');
    const line = document.createElementNS(SVG_NS, 'polyline');
    line.setAttribute('fill', 'none');
    line.setAttribute('stroke', 'currentColor');
    line.setAttribute('stroke-width', '2');
    line.setAttribute('points', polylinePoints(values, 240, 120));
    svg.appendChild(line);
    wrap.appendChild(svg);
    const labels = document.createElement('small');
    labels.textContent = rounds.length ? `rounds ${rounds[0]}–${rounds[rounds.length - 1]}` : 'no rounds yet';
    wrap.appendChild(labels);
    return wrap;
  }

  private onKey(event: KeyboardEvent): void {
    const cards = this.root.querySelectorAll<HTMLElement>('.task-card');
    if (cards.length === 0) return;
    const current = cards[this.focusIndex];
    const recordId = current?.dataset.recordId;
    switch (event.key) {
      case 'j':
        this.focusIndex = Math.min(this.focusIndex + 1, cards.length - 1);
        this.refocus(cards);
        break;
      case 'k':
        this.focusIndex = Math.max(this.focusIndex - 1, 0);
        this.refocus(cards);
        break;
      case 'f':
        if (recordId) this.callbacks.onSelect(recordId, 'fake');
        break;
      case 'r':
        if (recordId) this.callbacks.onSelect(recordId, 'real');
        break;
      case 'Enter':
        if (recordId) this.callbacks.onSubmit(recordId);
        break;
    }
  }

  private refocus(cards: NodeListOf<HTMLElement>): void {
    cards.forEach((card, index) => card.classList.toggle('focused', index === this.focusIndex));
  }
}

function entry(term: string, value: string): [HTMLElement, HTMLElement] {
  const dt = document.createElement('dt');
  dt.textContent = term;
  const dd = document.createElement('dd');
  dd.textContent = value;
  return [dt, dd];
}
