import type {
  AnnotationId,
  DecisionReply,
  FlaggedItem,
  FlaggedPage,
  ItemDetail,
  ReviewDecision,
} from './types.js';

/** HTTP error from the review service (4xx/5xx). Anything else thrown by
 * fetch is a transport problem and is treated as retryable. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type ImageKind = 'full' | 'crop';
export type ImageSource = 'edited' | 'original';

export interface FetchedImage {
  url: string;
  // top-left of the served crop in full-image coordinates; [0,0] for full
  origin: [number, number];
}

async function errorDetail(reply: Response): Promise<string> {
  try {
    const body = (await reply.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') return body.detail;
  } catch {
    // non-JSON error body
  }
  return `${reply.status} ${reply.statusText}`;
}

export function parseCropOrigin(header: string | null): [number, number] {
  if (!header) return [0, 0];
  const m = /^(-?\d+),(-?\d+)$/.exec(header.trim());
  if (!m) throw new Error(`bad X-Crop-Origin header: ${header}`);
  return [parseInt(m[1], 10), parseInt(m[2], 10)];
}

export class ReviewApi {
  constructor(
    private readonly base = '',
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const reply = await this.fetchFn(this.base + path);
    if (!reply.ok) throw new ApiError(reply.status, await errorDetail(reply));
    return (await reply.json()) as T;
  }

  flagged(page = 1, size = 50): Promise<FlaggedPage> {
    return this.getJson<FlaggedPage>(`/review/flagged?page=${page}&size=${size}`);
  }

  /** Walk the paged queue until every flagged item is collected. */
  async allFlagged(size = 200): Promise<FlaggedItem[]> {
    const items: FlaggedItem[] = [];
    for (let page = 1; ; page++) {
      const reply = await this.flagged(page, size);
      items.push(...reply.items);
      if (items.length >= reply.total || reply.items.length === 0) break;
    }
    return items;
  }

  item(id: AnnotationId): Promise<ItemDetail> {
    return this.getJson<ItemDetail>(`/review/item/${id}`);
  }

  async decide(decision: ReviewDecision): Promise<DecisionReply> {
    const reply = await this.fetchFn(`${this.base}/review/decision`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(decision),
    });
    if (!reply.ok) throw new ApiError(reply.status, await errorDetail(reply));
    return (await reply.json()) as DecisionReply;
  }

  imagePath(id: AnnotationId, kind: ImageKind, source: ImageSource): string {
    return `${this.base}/review/item/${id}/image/${kind}?source=${source}`;
  }

  /** Fetch an image pane as an object URL so the crop origin header is
   * readable (an <img src> would hide it). */
  async fetchImage(id: AnnotationId, kind: ImageKind, source: ImageSource): Promise<FetchedImage> {
    const reply = await this.fetchFn(this.imagePath(id, kind, source));
    if (!reply.ok) throw new ApiError(reply.status, await errorDetail(reply));
    const blob = await reply.blob();
    return {
      url: URL.createObjectURL(blob),
      origin: kind === 'crop' ? parseCropOrigin(reply.headers.get('X-Crop-Origin')) : [0, 0],
    };
  }
}
