// Session state and pure transitions. Rendering derives entirely from this
// state; server results are immutable once they enter the gallery.

import type { ApiError, ColorizeOptions } from './api.js';
import { serializeHints, toWire, inBounds, type HintAnnotation } from './hints.js';

export interface SamplerOptions {
  steps: number;
  guidance: number;
  seed: number;
  variants: number;
}

export interface GalleryEntry {
  jobId: string;
  images: string[]; // result URLs
  seeds: number[];
}

export interface SessionState {
  imageUrl: string | null;
  imageWidth: number;
  imageHeight: number;
  hints: readonly HintAnnotation[];
  nextHintId: number;
  caption: string;
  negative: string;
  sampler: SamplerOptions;
  gallery: readonly GalleryEntry[];
  comparison: [string, string] | null;
  polling: boolean;
  inlineErrors: Readonly<Record<string, string>>;
  notice: string | null;
}

export function initialState(): SessionState {
  return {
    imageUrl: null,
    imageWidth: 0,
    imageHeight: 0,
    hints: [],
    nextHintId: 1,
    caption: '',
    negative: '',
    sampler: { steps: 50, guidance: 7.5, seed: 0, variants: 1 },
    gallery: [],
    comparison: null,
    polling: false,
    inlineErrors: {},
    notice: null,
  };
}

export function loadImage(
  state: SessionState,
  url: string,
  width: number,
  height: number,
): SessionState {
  return {
    ...state,
    imageUrl: url,
    imageWidth: width,
    imageHeight: height,
    hints: [],
    comparison: null,
    inlineErrors: {},
    notice: null,
  };
}

/** Add a hint; clicks outside the image are ignored with a visible notice. */
export function placeHint(
  state: SessionState,
  x: number,
  y: number,
  color: [number, number, number],
  radius: number,
): SessionState {
  if (!inBounds(x, y, state.imageWidth, state.imageHeight)) {
    return { ...state, notice: 'click outside the image was ignored' };
  }
  const hint: HintAnnotation = { id: state.nextHintId, x, y, color, radius };
  return {
    ...state,
    hints: [...state.hints, hint],
    nextHintId: state.nextHintId + 1,
    notice: null,
  };
}

/** Remove exactly the targeted annotation. */
export function removeHint(state: SessionState, id: number): SessionState {
  return { ...state, hints: state.hints.filter((h) => h.id !== id) };
}

export function clearHints(state: SessionState): SessionState {
  return { ...state, hints: [] };
}

/** The request body derives from the state alone; hints serialize byte-equally
 * to the overlay's own serialization. */
export function buildRequestOptions(state: SessionState): ColorizeOptions {
  const options: ColorizeOptions = {
    caption: state.caption,
    negative: state.negative,
    steps: state.sampler.steps,
    guidance: state.sampler.guidance,
    seed: state.sampler.seed,
    variants: state.sampler.variants,
    hints: state.hints.map(toWire),
  };
  return options;
}

export function requestOptionsJson(state: SessionState): string {
  const o = buildRequestOptions(state);
  return (
    `{"caption":${JSON.stringify(o.caption)},` +
    `"negative":${JSON.stringify(o.negative)},` +
    `"steps":${JSON.stringify(o.steps)},` +
    `"guidance":${JSON.stringify(o.guidance)},` +
    `"seed":${JSON.stringify(o.seed)},` +
    `"variants":${JSON.stringify(o.variants)},` +
    `"hints":${serializeHints(state.hints)}}`
  );
}

export function appendGallery(state: SessionState, entry: GalleryEntry): SessionState {
  const frozen = Object.freeze({
    ...entry,
    images: Object.freeze([...entry.images]) as unknown as string[],
    seeds: Object.freeze([...entry.seeds]) as unknown as number[],
  });
  return { ...state, gallery: [...state.gallery, frozen], polling: false, notice: null };
}

/** Map a service field path (e.g. "hints[0].x") onto the owning control. */
export function fieldToControl(field: string | undefined): string {
  if (!field) return 'form';
  if (field.startsWith('hints')) return 'hints';
  return field.split('.')[0].split('[')[0];
}

/** Surface a 4xx validation error inline at the offending control. */
export function applyServerError(state: SessionState, err: ApiError): SessionState {
  return {
    ...state,
    polling: false,
    inlineErrors: { ...state.inlineErrors, [fieldToControl(err.field)]: err.message },
  };
}

export function clearErrors(state: SessionState): SessionState {
  return { ...state, inlineErrors: {}, notice: null };
}

export function startPolling(state: SessionState): SessionState {
  return { ...state, polling: true, inlineErrors: {}, notice: null };
}

export function setComparison(state: SessionState, a: string, b: string): SessionState {
  return { ...state, comparison: [a, b] };
}

/** Pure render model: everything the DOM layer needs, derived from state. */
export interface RenderModel {
  submitDisabled: boolean;
  hintCount: number;
  galleryImages: { url: string; seed: number; jobId: string }[];
  errors: { control: string; message: string }[];
  notice: string | null;
}

export function renderModel(state: SessionState): RenderModel {
  return {
    submitDisabled: state.polling || state.imageUrl === null,
    hintCount: state.hints.length,
    galleryImages: state.gallery.flatMap((entry) =>
      entry.images.map((url, i) => ({ url, seed: entry.seeds[i], jobId: entry.jobId })),
    ),
    errors: Object.entries(state.inlineErrors).map(([control, message]) => ({
      control,
      message,
    })),
    notice: state.notice,
  };
}
