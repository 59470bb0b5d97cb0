import { ApiClient, ApiError } from './api';
import type { AnnotationTask, Label } from './types';

export type CardState = 'idle' | 'submitting' | 'conflict' | 'error';

export interface TaskCard {
  task: AnnotationTask;
  state: CardState;
  selectedLabel: Label | null;
  message: string;
}

export type QueueListener = (store: QueueStore) => void;

/**
 * View-model for the annotation queue.
 *
 * Submissions are optimistic: the card leaves the list immediately and is
 * restored (with a conflict or error badge) when the server answers non-2xx.
 * The store never invents queue contents; `sync` reconciles against the
 * server's task list, keeping in-flight cards untouched.
 */
export class QueueStore {
  private cards: TaskCard[] = [];
  private inFlight = new Set<string>();
  private listeners: QueueListener[] = [];
  drainedAt: number | null = null;

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: QueueListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  get visible(): TaskCard[] {
    return this.cards.filter((c) => c.state !== 'submitting');
  }

  get size(): number {
    return this.visible.length;
  }

  cardFor(recordId: string): TaskCard | undefined {
    return this.cards.find((c) => c.task.record_id === recordId);
  }

  /** Replace contents from a server task list (ordered by flagged_rank). */
  sync(tasks: AnnotationTask[]): void {
    const keep = new Map(this.cards.map((c) => [c.task.record_id, c]));
    this.cards = tasks
      .slice()
      .sort((a, b) => a.flagged_rank - b.flagged_rank)
      .map((task) => keep.get(task.record_id) ?? { task, state: 'idle', selectedLabel: null, message: '' });
    if (tasks.length === 0 && this.inFlight.size === 0 && this.drainedAt === null) {
      this.drainedAt = Date.now();
    }
    this.notify();
  }

  select(recordId: string, label: Label): void {
    const card = this.cardFor(recordId);
    if (!card || card.state === 'submitting') return;
    card.selectedLabel = label;
    this.notify();
  }

  canSubmit(recordId: string): boolean {
    const card = this.cardFor(recordId);
    return !!card && card.selectedLabel !== null && card.state !== 'submitting';
  }

  /**
   * Optimistically remove the card and POST the label. On 409 the card is
   * restored with a conflict badge; on other failures with an error badge.
   */
  async submit(recordId: string, annotator: string): Promise<boolean> {
    const card = this.cardFor(recordId);
    if (!card || card.selectedLabel === null || card.state === 'submitting') return false;
    const label = card.selectedLabel;
    card.state = 'submitting';
    this.inFlight.add(recordId);
    this.notify();
    try {
      await this.api.submitLabel(recordId, label, annotator);
      this.cards = this.cards.filter((c) => c.task.record_id !== recordId);
      this.inFlight.delete(recordId);
      if (this.cards.length === 0 && this.inFlight.size === 0) {
        this.drainedAt = Date.now();
      }
      this.notify();
      return true;
    } catch (err) {
      this.inFlight.delete(recordId);
      if (err instanceof ApiError && err.status === 409) {
        card.state = 'conflict';
        card.message = 'already answered by another annotator';
      } else if (err instanceof ApiError) {
        card.state = 'error';
        card.message = `submit failed (${err.status}): ${err.message}`;
      } else {
        card.state = 'error';
        card.message = 'network failure, retry';
      }
      this.notify();
      return false;
    }
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this);
  }
}
