import { ApiError } from './api.js';
import type { DecisionReply, ReviewDecision } from './types.js';

export type SubmitFn = (decision: ReviewDecision) => Promise<DecisionReply>;

export interface RejectedDecision {
  decision: ReviewDecision;
  reason: string;
}

export interface BufferOptions {
  // delay before retrying after a transport failure
  retryDelayMs?: number;
  onChange?: () => void;
}

/**
 * Client-side decision queue. Verdicts are appended here the moment the
 * reviewer issues them and only leave once the server acknowledges, so a
 * dead connection loses nothing: transport failures keep the decision at
 * the head of the queue and a retry timer flushes again. Server-side
 * rejections (4xx) are not retried; they move to `rejected` so the
 * reviewer can see what was refused and why.
 */
export class DecisionBuffer {
  readonly acknowledged: DecisionReply[] = [];
  readonly rejected: RejectedDecision[] = [];
  banner: string | null = null;

  private pending: ReviewDecision[] = [];
  private inflight: Promise<void> | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly retryDelayMs: number;
  private readonly onChange: () => void;

  constructor(
    private readonly submit: SubmitFn,
    options: BufferOptions = {},
  ) {
    this.retryDelayMs = options.retryDelayMs ?? 1500;
    this.onChange = options.onChange ?? (() => {});
  }

  get pendingCount(): number {
    return this.pending.length;
  }

  push(decision: ReviewDecision): void {
    this.pending.push(decision);
    this.onChange();
    void this.kick();
  }

  /** Start a flush unless one is already running. */
  kick(): Promise<void> {
    if (!this.inflight) {
      this.inflight = this.drain().finally(() => {
        this.inflight = null;
      });
    }
    return this.inflight;
  }

  private async drain(): Promise<void> {
    while (this.pending.length > 0) {
      const head = this.pending[0];
      try {
        const reply = await this.submit(head);
        this.pending.shift();
        this.acknowledged.push(reply);
        this.banner = null;
      } catch (err) {
        if (err instanceof ApiError) {
          // the server saw it and said no; retrying cannot help
          this.pending.shift();
          this.rejected.push({ decision: head, reason: err.message });
          this.banner = `rejected by server: ${err.message}`;
        } else {
          this.banner = `connection lost, ${this.pending.length} decision(s) queued; retrying`;
          this.scheduleRetry();
          this.onChange();
          return;
        }
      }
      this.onChange();
    }
  }

  private scheduleRetry(): void {
    if (this.timer) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.kick();
    }, this.retryDelayMs);
  }

  /**
   * Resolve once every queued decision is acknowledged or rejected.
   * Keeps nudging the flush loop so tests do not depend on timers.
   */
  async settle(deadlineMs = 30000): Promise<void> {
    const start = Date.now();
    while (this.pending.length > 0 || this.inflight) {
      if (Date.now() - start > deadlineMs) {
        throw new Error(`buffer did not settle: ${this.pending.length} still pending`);
      }
      await this.kick();
      if (this.pending.length > 0) {
        await new Promise((resolve) => setTimeout(resolve, Math.min(this.retryDelayMs, 50)));
      }
    }
  }
}
