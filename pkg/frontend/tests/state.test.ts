import { describe, expect, it } from 'vitest';

import { ApiError } from '../src/api';
import { serializeHints } from '../src/hints';
import {
  appendGallery,
  applyServerError,
  buildRequestOptions,
  fieldToControl,
  initialState,
  loadImage,
  placeHint,
  removeHint,
  renderModel,
  requestOptionsJson,
  setComparison,
  startPolling,
} from '../src/state';

const loaded = () => loadImage(initialState(), 'blob:x', 64, 64);

describe('hint placement', () => {
  it('adds hints and ignores out-of-bounds clicks with a notice', () => {
    let s = loaded();
    s = placeHint(s, 10, 12, [1, 0, 0], 3);
    s = placeHint(s, 90, 12, [1, 0, 0], 3); // outside
    expect(s.hints).toHaveLength(1);
    expect(s.notice).toMatch(/ignored/);
  });

  it('delete removes exactly the targeted annotation', () => {
    let s = loaded();
    s = placeHint(s, 1, 1, [1, 0, 0], 3);
    s = placeHint(s, 2, 2, [0, 1, 0], 3);
    s = placeHint(s, 3, 3, [0, 0, 1], 3);
    const target = s.hints[1].id;
    s = removeHint(s, target);
    expect(s.hints.map((h) => h.id)).toEqual([1, 3]);
  });
});

describe('request building', () => {
  it('two placed hints appear in the request exactly, byte-equal to the overlay state', () => {
    let s = loaded();
    s = placeHint(s, 4, 7, [1, 0, 0], 3);
    s = placeHint(s, 11, 13, [0, 0.5, 1], 3);
    const options = buildRequestOptions(s);
    expect(options.hints).toEqual([
      { x: 4, y: 7, r: 1, g: 0, b: 0 },
      { x: 11, y: 13, r: 0, g: 0.5, b: 1 },
    ]);
    const json = requestOptionsJson(s);
    const hintsJson = serializeHints(s.hints);
    expect(json.includes(`"hints":${hintsJson}`)).toBe(true);
    // round-trip through JSON.parse agrees with the state
    expect(JSON.parse(json).hints).toEqual(options.hints);
  });

  it('carries sampler options verbatim', () => {
    let s = loaded();
    s = { ...s, caption: 'a red circle', sampler: { steps: 25, guidance: 5, seed: 9, variants: 3 } };
    const o = buildRequestOptions(s);
    expect(o).toMatchObject({ caption: 'a red circle', steps: 25, guidance: 5, seed: 9, variants: 3 });
  });
});

describe('gallery immutability and render purity', () => {
  it('gallery entries are frozen once loaded', () => {
    let s = loaded();
    s = appendGallery(s, { jobId: 'j1', images: ['/a.png', '/b.png'], seeds: [1, 2] });
    const entry = s.gallery[0];
    expect(Object.isFrozen(entry)).toBe(true);
    expect(Object.isFrozen(entry.images)).toBe(true);
    expect(() => {
      (entry.images as string[]).push('/c.png');
    }).toThrow();
  });

  it('variants append one gallery image per variant', () => {
    let s = loaded();
    s = appendGallery(s, { jobId: 'j1', images: ['/a.png', '/b.png', '/c.png'], seeds: [1, 2, 3] });
    expect(renderModel(s).galleryImages).toHaveLength(3);
  });

  it('renderModel is pure: same state, same output, no mutation', () => {
    let s = loaded();
    s = placeHint(s, 3, 3, [1, 0, 0], 3);
    s = appendGallery(s, { jobId: 'j', images: ['/a.png'], seeds: [7] });
    const snapshot = JSON.stringify(s);
    const a = renderModel(s);
    const b = renderModel(s);
    expect(a).toEqual(b);
    expect(JSON.stringify(s)).toBe(snapshot);
  });
});

describe('server error surfacing', () => {
  it('maps field paths to controls and keeps the gallery unchanged', () => {
    let s = loaded();
    s = appendGallery(s, { jobId: 'j', images: ['/a.png'], seeds: [1] });
    const before = s.gallery;
    s = startPolling(s);
    s = applyServerError(s, new ApiError(400, 'steps must be an integer >= 1', 'steps'));
    expect(s.polling).toBe(false);
    expect(s.inlineErrors.steps).toMatch(/steps/);
    expect(s.gallery).toBe(before);
    const model = renderModel(s);
    expect(model.errors).toContainEqual({ control: 'steps', message: 'steps must be an integer >= 1' });
  });

  it('hint field paths land on the hints control', () => {
    expect(fieldToControl('hints[0].x')).toBe('hints');
    expect(fieldToControl('steps')).toBe('steps');
    expect(fieldToControl(undefined)).toBe('form');
  });
});

describe('submission gating', () => {
  it('submit is disabled while polling and before an image loads', () => {
    let s = initialState();
    expect(renderModel(s).submitDisabled).toBe(true);
    s = loaded();
    expect(renderModel(s).submitDisabled).toBe(false);
    s = startPolling(s);
    expect(renderModel(s).submitDisabled).toBe(true);
  });

  it('comparison selection stores the pair', () => {
    let s = loaded();
    s = setComparison(s, '/a.png', '/b.png');
    expect(s.comparison).toEqual(['/a.png', '/b.png']);
  });
});
