export const POLL_INTERVAL_MS = 3000;

/**
 * Fixed-cadence poll loop. The tick callback runs immediately on start and
 * then every POLL_INTERVAL_MS; overlapping ticks are skipped rather than
 * queued (the queue changes at human timescales).
 */
export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private busy = false;

  constructor(
    private readonly tick: () => Promise<void>,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.run();
    this.timer = setInterval(() => void this.run(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async run(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      await this.tick();
    } finally {
      this.busy = false;
    }
  }
}
