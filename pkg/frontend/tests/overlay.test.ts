import { describe, expect, it } from 'vitest';

import { parseCropOrigin } from '../src/api.js';
import { applyOverlay, clampZoom, overlayRect } from '../src/overlay.js';

describe('overlayRect', () => {
  it('equals the manifest bbox verbatim at zoom 1, origin 0', () => {
    // 2-decimal values exactly as the manifest serializes them
    const bbox = [123.45, 67.89, 30.5, 41.25];
    const rect = overlayRect(bbox, [0, 0], 1);
    expect(Object.is(rect.left, bbox[0])).toBe(true);
    expect(Object.is(rect.top, bbox[1])).toBe(true);
    expect(Object.is(rect.width, bbox[2])).toBe(true);
    expect(Object.is(rect.height, bbox[3])).toBe(true);
  });

  it('is the single product bbox*zoom at integer zooms', () => {
    const bbox = [123.45, 67.89, 30.5, 41.25];
    for (const zoom of [1, 2, 3, 4, 8]) {
      const rect = overlayRect(bbox, [100, 50], zoom);
      expect(rect.left).toBe((123.45 - 100) * zoom);
      expect(rect.top).toBe((67.89 - 50) * zoom);
      expect(rect.width).toBe(30.5 * zoom);
      expect(rect.height).toBe(41.25 * zoom);
    }
  });

  it('round-trips through the crop origin at power-of-two zooms', () => {
    // division by 1, 2, 4, 8 is exact in binary floating point, so the
    // displayed rect maps back to the served coordinates with no drift
    const boxes = [
      [0.25, 999.75, 4.5, 0.25],
      [512.0, 0.0, 128.0, 96.5],
      [33.33, 66.66, 10.01, 20.02],
    ];
    for (const bbox of boxes) {
      for (const zoom of [1, 2, 4, 8]) {
        const origin: [number, number] = [17, 23];
        const rect = overlayRect(bbox, origin, zoom);
        expect(rect.left / zoom + origin[0]).toBe(bbox[0]);
        expect(rect.top / zoom + origin[1]).toBe(bbox[1]);
        expect(rect.width / zoom).toBe(bbox[2]);
        expect(rect.height / zoom).toBe(bbox[3]);
      }
    }
  });

  it('rejects non-integer or non-positive zoom', () => {
    expect(() => overlayRect([1, 2, 3, 4], [0, 0], 1.5)).toThrow(/integer/);
    expect(() => overlayRect([1, 2, 3, 4], [0, 0], 0)).toThrow(/integer/);
  });

  it('rejects malformed boxes', () => {
    expect(() => overlayRect([1, 2, 3], [0, 0], 1)).toThrow(/4 entries/);
  });
});

describe('clampZoom', () => {
  it('clamps and rounds to supported factors', () => {
    expect(clampZoom(0)).toBe(1);
    expect(clampZoom(2.4)).toBe(2);
    expect(clampZoom(99)).toBe(8);
    expect(clampZoom(3)).toBe(3);
  });
});

describe('parseCropOrigin', () => {
  it('parses the header the crop endpoint sends', () => {
    expect(parseCropOrigin('128,57')).toEqual([128, 57]);
    expect(parseCropOrigin(null)).toEqual([0, 0]);
  });

  it('rejects garbage', () => {
    expect(() => parseCropOrigin('x=1')).toThrow(/X-Crop-Origin/);
  });
});

// @vitest-environment jsdom is not used here; element styling is checked
// in dom.test.ts. This file stays pure.
describe('applyOverlay', () => {
  it('writes px strings preserving the exact numbers', () => {
    const style: Record<string, string> = {};
    const fake = { style } as unknown as HTMLElement;
    applyOverlay(fake, { left: 70.35000000000001, top: 12, width: 91.5, height: 123.75 });
    expect(style.left).toBe('70.35000000000001px');
    expect(style.top).toBe('12px');
    expect(style.width).toBe('91.5px');
    expect(style.height).toBe('123.75px');
  });
});
