import { describe, expect, it } from 'vitest';

import {
  hintAtPosition,
  inBounds,
  parseHints,
  serializeHints,
  snapToRegionCentroid,
  toWire,
  type HintAnnotation,
} from '../src/hints';

const hint = (id: number, x: number, y: number, color: [number, number, number]): HintAnnotation => ({
  id,
  x,
  y,
  color,
  radius: 3,
});

describe('hint serialization', () => {
  it('round-trips byte-identically', () => {
    const hints = [hint(1, 4, 7, [1, 0, 0]), hint(2, 10, 12, [0, 0.5, 1])];
    const json = serializeHints(hints);
    const back = serializeHints(parseHints(json));
    expect(back).toBe(json);
  });

  it('matches the service wire schema exactly', () => {
    const json = serializeHints([hint(1, 3, 5, [1, 0, 0.25])]);
    expect(JSON.parse(json)).toEqual([{ x: 3, y: 5, r: 1, g: 0, b: 0.25 }]);
    // fixed key order for byte-stable output
    expect(json).toBe('[{"x":3,"y":5,"r":1,"g":0,"b":0.25}]');
  });

  it('rejects malformed entries', () => {
    expect(() => parseHints('{"x":1}')).toThrow();
    expect(() => parseHints('[{"x":1,"y":2,"r":0.5,"g":0.5}]')).toThrow(/'b'/);
  });

  it('toWire flattens color channels', () => {
    expect(toWire(hint(9, 2, 3, [0.1, 0.2, 0.3]))).toEqual({
      x: 2,
      y: 3,
      r: 0.1,
      g: 0.2,
      b: 0.3,
    });
  });
});

describe('bounds and hit testing', () => {
  it('inBounds follows half-open image rectangles', () => {
    expect(inBounds(0, 0, 4, 4)).toBe(true);
    expect(inBounds(3, 3, 4, 4)).toBe(true);
    expect(inBounds(4, 3, 4, 4)).toBe(false);
    expect(inBounds(-1, 0, 4, 4)).toBe(false);
  });

  it('hit testing prefers the most recent hint', () => {
    const hints = [hint(1, 5, 5, [1, 0, 0]), hint(2, 6, 5, [0, 0, 1])];
    expect(hintAtPosition(hints, 5, 5)?.id).toBe(2); // overlap -> later wins
    expect(hintAtPosition(hints, 20, 20)).toBeNull();
  });
});

describe('superpixel snapping', () => {
  it('snaps a click to the centroid of the region under it', () => {
    // 4x4 image, two vertical regions 0|1
    const labels = new Uint16Array([0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1]);
    const centroids: [number, number][] = [
      [0.5, 1.5],
      [2.5, 1.5],
    ];
    expect(snapToRegionCentroid(3, 0, labels, 4, centroids)).toEqual({ x: 3, y: 2 });
    expect(snapToRegionCentroid(0, 3, labels, 4, centroids)).toEqual({ x: 1, y: 2 });
  });
});
