// Box overlay geometry. The served annotation coordinates must reach the
// page untouched: one multiply per axis, no rounding, no layout feedback.

export interface OverlayRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Clamp a requested zoom to a supported integer factor. */
export function clampZoom(zoom: number, min = 1, max = 8): number {
  const z = Math.round(zoom);
  return Math.min(max, Math.max(min, z));
}

/**
 * Map a manifest bbox [x, y, w, h] into pane pixels for a crop whose
 * top-left sits at `origin` in full-image coordinates, displayed at an
 * integer zoom. At zoom 1 with origin [0, 0] the result equals the bbox
 * values themselves.
 */
export function overlayRect(bbox: number[], origin: [number, number], zoom: number): OverlayRect {
  if (bbox.length !== 4) throw new Error(`bbox must have 4 entries, got ${bbox.length}`);
  if (!Number.isInteger(zoom) || zoom < 1) throw new Error(`zoom must be a positive integer, got ${zoom}`);
  return {
    left: (bbox[0] - origin[0]) * zoom,
    top: (bbox[1] - origin[1]) * zoom,
    width: bbox[2] * zoom,
    height: bbox[3] * zoom,
  };
}

/** Write a rect onto an absolutely positioned element. */
export function applyOverlay(el: HTMLElement, rect: OverlayRect): void {
  el.style.left = `${rect.left}px`;
  el.style.top = `${rect.top}px`;
  el.style.width = `${rect.width}px`;
  el.style.height = `${rect.height}px`;
}
