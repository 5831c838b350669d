import type { ReviewApi } from './api.js';
import type { DecisionBuffer } from './buffer.js';
import type { AnnotationId, ItemDetail, Verdict } from './types.js';

export interface QueueEntry {
  id: AnnotationId;
  decided: boolean;
}

export type SessionMode = 'queue' | 'picker' | 'done';

// What a keystroke did, for callers that re-render selectively.
export type KeyOutcome =
  | 'decided'
  | 'picker-opened'
  | 'picker-closed'
  | 'moved'
  | 'done'
  | 'noop';

export interface SessionOptions {
  reviewer?: string;
}

/**
 * Triage state over the flagged queue: one current item, keyboard verdicts,
 * optimistic advance. Issuing a verdict marks the item decided locally and
 * hands the decision to the buffer; the session never waits for the server
 * before moving on.
 *
 * Keys: A accept as OOD, R reassign (opens the class picker, digits pick),
 * D discard, arrows or J/K to move, Escape closes the picker.
 */
export class TriageSession {
  entries: QueueEntry[] = [];
  index = 0;
  mode: SessionMode = 'queue';

  private readonly details = new Map<AnnotationId, ItemDetail>();
  private readonly reviewer?: string;

  constructor(
    private readonly api: ReviewApi,
    private readonly buffer: DecisionBuffer,
    options: SessionOptions = {},
  ) {
    this.reviewer = options.reviewer;
  }

  async start(): Promise<void> {
    const flagged = await this.api.allFlagged();
    this.entries = flagged.map((f) => ({ id: f.annotation_id, decided: false }));
    this.index = 0;
    this.mode = this.entries.length === 0 ? 'done' : 'queue';
  }

  get current(): QueueEntry | null {
    return this.mode === 'done' ? null : (this.entries[this.index] ?? null);
  }

  get remaining(): number {
    return this.entries.filter((e) => !e.decided).length;
  }

  /** Detail for the current item, cached per annotation. */
  async detail(): Promise<ItemDetail | null> {
    const entry = this.current;
    if (!entry) return null;
    let d = this.details.get(entry.id);
    if (!d) {
      d = await this.api.item(entry.id);
      this.details.set(entry.id, d);
    }
    return d;
  }

  /** Classes offered by the picker; empty until detail() has run once. */
  get pickerClasses(): string[] {
    const entry = this.current;
    if (!entry) return [];
    return this.details.get(entry.id)?.id_classes ?? [];
  }

  handleKey(key: string): KeyOutcome {
    if (this.mode === 'done') return 'noop';
    if (this.mode === 'picker') return this.handlePickerKey(key);
    switch (key) {
      case 'a':
      case 'A':
        return this.decide('accept_ood');
      case 'd':
      case 'D':
        return this.decide('discard');
      case 'r':
      case 'R':
        if (this.pickerClasses.length === 0) return 'noop'; // detail not loaded yet
        this.mode = 'picker';
        return 'picker-opened';
      case 'ArrowRight':
      case 'j':
        return this.move(1);
      case 'ArrowLeft':
      case 'k':
        return this.move(-1);
      default:
        return 'noop';
    }
  }

  private handlePickerKey(key: string): KeyOutcome {
    if (key === 'Escape') {
      this.mode = 'queue';
      return 'picker-closed';
    }
    if (/^[1-9]$/.test(key)) {
      const cls = this.pickerClasses[parseInt(key, 10) - 1];
      if (cls === undefined) return 'noop';
      this.mode = 'queue';
      return this.decide('reassign_id', cls);
    }
    return 'noop';
  }

  pickClass(cls: string): KeyOutcome {
    if (this.mode !== 'picker' || !this.pickerClasses.includes(cls)) return 'noop';
    this.mode = 'queue';
    return this.decide('reassign_id', cls);
  }

  private decide(verdict: Verdict, newClass?: string): KeyOutcome {
    const entry = this.current;
    if (!entry || entry.decided) return 'noop'; // no double submits
    this.buffer.push({
      annotation_id: entry.id,
      verdict,
      ...(newClass !== undefined ? { new_class: newClass } : {}),
      ...(this.reviewer !== undefined ? { reviewer: this.reviewer } : {}),
    });
    entry.decided = true;
    return this.advance();
  }

  /** Jump to the next undecided item, wrapping once; done when none left. */
  private advance(): KeyOutcome {
    const n = this.entries.length;
    for (let step = 1; step <= n; step++) {
      const i = (this.index + step) % n;
      if (!this.entries[i].decided) {
        this.index = i;
        return 'decided';
      }
    }
    this.mode = 'done';
    return 'done';
  }

  private move(delta: number): KeyOutcome {
    const next = this.index + delta;
    if (next < 0 || next >= this.entries.length) return 'noop';
    this.index = next;
    return 'moved';
  }
}
