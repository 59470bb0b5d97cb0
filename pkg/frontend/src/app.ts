import { ApiClient, ApiError } from './api';
import { Poller } from './poller';
import { QueueStore } from './queueStore';
import { View } from './ui';
import type { RunStatus } from './types';

export interface AppOptions {
  baseUrl: string;
  runId: string;
  annotator: string;
  fetchFn?: typeof fetch;
  pollIntervalMs?: number;
}

/**
 * Wires API, queue store, poller, and view together. The app performs no
 * label inference or metric math of its own; everything rendered comes from
 * the service payloads.
 */
export class App {
  readonly api: ApiClient;
  readonly store: QueueStore;
  readonly view: View;
  readonly poller: Poller;
  lastStatus: RunStatus | null = null;

  constructor(root: HTMLElement, private readonly options: AppOptions) {
    this.api = new ApiClient({
      baseUrl: options.baseUrl,
      runId: options.runId,
      fetchFn: options.fetchFn,
    });
    this.store = new QueueStore(this.api);
    this.view = new View(root, {
      onSelect: (recordId, label) => this.store.select(recordId, label),
      onSubmit: (recordId) => void this.submit(recordId),
    });
    this.store.subscribe(() => this.renderQueue());
    this.poller = new Poller(() => this.tick(), options.pollIntervalMs);
  }

  start(): void {
    this.poller.start();
  }

  /** One poll cycle: status always, tasks only while the loop waits on humans. */
  async tick(): Promise<void> {
    try {
      const status = await this.api.getStatus();
      this.lastStatus = status;
      this.view.clearBanner();
      this.view.renderStatus(status);
      if (status.status === 'awaiting_human') {
        this.store.sync(await this.api.getTasks());
      } else {
        this.store.sync([]);
      }
      this.renderQueue();
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.view.showBanner(`unknown run ${this.options.runId}: ${err.message}`);
      } else if (err instanceof ApiError) {
        this.view.showBanner(`service error ${err.status}: ${err.message}`);
      } else {
        this.view.showBanner('cannot reach the annotation service — retrying');
      }
    }
  }

  private async submit(recordId: string): Promise<void> {
    if (!this.store.canSubmit(recordId)) return;
    const accepted = await this.store.submit(recordId, this.options.annotator);
    if (accepted) {
      // pull fresh telemetry right away so the round-progress widget updates
      await this.tick();
    } else {
      // conflict or failure: refetch the queue so ordering stays server-true
      try {
        if (this.lastStatus?.status === 'awaiting_human') {
          this.store.sync(await this.api.getTasks());
        }
      } catch {
        // banner already shown by the next poll
      }
    }
  }

  private renderQueue(): void {
    this.view.renderQueue(this.store, this.lastStatus?.status === 'awaiting_human');
  }
}
