// Hint annotations and their wire serialization. The JSON format is shared
// byte-for-byte with the service and the batch CLI: a list of {x, y, r, g, b}.

import type { HintWire } from './api.js';

export interface HintAnnotation {
  id: number;
  x: number;
  y: number;
  color: [number, number, number]; // RGB in [0, 1]
  radius: number;
}

export const DEFAULT_HINT_RADIUS = 3;

export function toWire(hint: HintAnnotation): HintWire {
  return { x: hint.x, y: hint.y, r: hint.color[0], g: hint.color[1], b: hint.color[2] };
}

/** Canonical hints JSON: fixed key order, placement order preserved. */
export function serializeHints(hints: readonly HintAnnotation[]): string {
  const rows = hints.map((h) => {
    const w = toWire(h);
    return `{"x":${JSON.stringify(w.x)},"y":${JSON.stringify(w.y)},"r":${JSON.stringify(
      w.r,
    )},"g":${JSON.stringify(w.g)},"b":${JSON.stringify(w.b)}}`;
  });
  return `[${rows.join(',')}]`;
}

export function parseHints(json: string, radius = DEFAULT_HINT_RADIUS): HintAnnotation[] {
  const data = JSON.parse(json);
  if (!Array.isArray(data)) throw new Error('hints JSON must be a list');
  return data.map((item, i) => {
    for (const key of ['x', 'y', 'r', 'g', 'b']) {
      if (typeof item[key] !== 'number') {
        throw new Error(`hint ${i} is missing numeric '${key}'`);
      }
    }
    return {
      id: i,
      x: item.x,
      y: item.y,
      color: [item.r, item.g, item.b] as [number, number, number],
      radius,
    };
  });
}

export function inBounds(x: number, y: number, width: number, height: number): boolean {
  return x >= 0 && y >= 0 && x < width && y < height;
}

/** Snap a click to the centroid of the superpixel region under the cursor. */
export function snapToRegionCentroid(
  x: number,
  y: number,
  labels: Uint16Array | Int32Array,
  width: number,
  centroids: readonly [number, number][],
): { x: number; y: number } {
  const label = labels[Math.floor(y) * width + Math.floor(x)];
  const [cx, cy] = centroids[label];
  return { x: Math.round(cx), y: Math.round(cy) };
}

/** Topmost hint whose disc covers (x, y); later hints win. */
export function hintAtPosition(
  hints: readonly HintAnnotation[],
  x: number,
  y: number,
): HintAnnotation | null {
  for (let i = hints.length - 1; i >= 0; i -= 1) {
    const h = hints[i];
    const dx = x - h.x;
    const dy = y - h.y;
    if (dx * dx + dy * dy <= h.radius * h.radius) return h;
  }
  return null;
}

export function hexToRgb(hex: string): [number, number, number] {
  const r = parseInt(hex.slice(1, 3), 16) / 255;
  const g = parseInt(hex.slice(3, 5), 16) / 255;
  const b = parseInt(hex.slice(5, 7), 16) / 255;
  return [r, g, b];
}

export function rgbToCss(color: [number, number, number]): string {
  const c = color.map((v) => Math.round(v * 255));
  return `rgb(${c[0]}, ${c[1]}, ${c[2]})`;
}
