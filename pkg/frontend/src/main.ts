// DOM wiring for the interactive colorization app. All behavior derives from
// the pure SessionState module; this file only reflects state into the DOM.

import { ApiError, pollJob, ServiceClient, type SuperpixelInfo } from './api.js';
import {
  applyPan,
  applyZoom,
  grayDifferenceHeatmap,
  heatmapToRgba,
  imageFromImageData,
  initialViewport,
  type Viewport,
} from './compare.js';
import {
  DEFAULT_HINT_RADIUS,
  hexToRgb,
  hintAtPosition,
  parseHints,
  serializeHints,
  snapToRegionCentroid,
} from './hints.js';
import { drawOverlay } from './overlay.js';
import {
  appendGallery,
  applyServerError,
  initialState,
  loadImage,
  placeHint,
  removeHint,
  renderModel,
  requestOptionsJson,
  setComparison,
  startPolling,
  type SessionState,
} from './state.js';

const client = new ServiceClient('');
let state: SessionState = initialState();
let imageBlob: Blob | null = null;
let imageBitmap: ImageBitmap | null = null;
let superpixels: { labels: Uint16Array; info: SuperpixelInfo } | null = null;
let viewport: Viewport = initialViewport();
let heatmapOn = false;

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

function scaleFor(canvas: HTMLCanvasElement): number {
  return state.imageWidth ? canvas.width / state.imageWidth : 1;
}

function render(): void {
  const model = renderModel(state);
  ($('submit') as HTMLButtonElement).disabled = model.submitDisabled;
  $('hint-count').textContent = `${model.hintCount} hint${model.hintCount === 1 ? '' : 's'}`;
  $('notice').textContent = model.notice ?? '';

  for (const el of document.querySelectorAll('.inline-error')) el.textContent = '';
  for (const err of model.errors) {
    const slot = document.getElementById(`error-${err.control}`);
    if (slot) slot.textContent = err.message;
    else $('notice').textContent = err.message;
  }

  const gallery = $('gallery');
  gallery.innerHTML = '';
  for (const item of model.galleryImages) {
    const cell = document.createElement('figure');
    cell.className = 'gallery-item';
    const img = document.createElement('img');
    img.src = client.resultUrl(item.url);
    img.title = `seed ${item.seed}`;
    img.addEventListener('click', () => pickForCompare(item.url));
    const cap = document.createElement('figcaption');
    cap.textContent = `seed ${item.seed}`;
    cell.append(img, cap);
    gallery.append(cell);
  }

  const overlay = $('overlay') as HTMLCanvasElement;
  drawOverlay(overlay.getContext('2d')!, state.hints, scaleFor(overlay));
  renderCompare();
}

let comparePick: string | null = null;

function pickForCompare(url: string): void {
  if (comparePick === null) {
    comparePick = url;
    $('notice').textContent = 'pick a second image to compare';
    return;
  }
  state = setComparison(state, comparePick, url);
  comparePick = null;
  render();
}

async function drawPane(canvas: HTMLCanvasElement, url: string): Promise<ImageData> {
  const resp = await fetch(client.resultUrl(url));
  const bitmap = await createImageBitmap(await resp.blob());
  const ctx = canvas.getContext('2d')!;
  ctx.save();
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;
  ctx.translate(viewport.offsetX, viewport.offsetY);
  ctx.scale(viewport.scale, viewport.scale);
  ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
  ctx.restore();
  const plain = document.createElement('canvas');
  plain.width = bitmap.width;
  plain.height = bitmap.height;
  const pctx = plain.getContext('2d')!;
  pctx.drawImage(bitmap, 0, 0);
  return pctx.getImageData(0, 0, bitmap.width, bitmap.height);
}

async function renderCompare(): Promise<void> {
  const section = $('compare');
  if (!state.comparison) {
    section.hidden = true;
    return;
  }
  section.hidden = false;
  const [a, b] = state.comparison;
  const dataA = await drawPane($('pane-a') as HTMLCanvasElement, a);
  const dataB = await drawPane($('pane-b') as HTMLCanvasElement, b);
  const heat = $('pane-heat') as HTMLCanvasElement;
  if (heatmapOn) {
    heat.hidden = false;
    const diff = grayDifferenceHeatmap(imageFromImageData(dataA), imageFromImageData(dataB));
    const rgba = new ImageData(new Uint8ClampedArray(heatmapToRgba(diff)), dataA.width, dataA.height);
    heat.width = dataA.width;
    heat.height = dataA.height;
    heat.getContext('2d')!.putImageData(rgba, 0, 0);
  } else {
    heat.hidden = true;
  }
}

async function onUpload(file: File): Promise<void> {
  imageBlob = file;
  imageBitmap = await createImageBitmap(file);
  superpixels = null;
  const url = URL.createObjectURL(file);
  state = loadImage(state, url, imageBitmap.width, imageBitmap.height);
  const base = $('base') as HTMLCanvasElement;
  const overlay = $('overlay') as HTMLCanvasElement;
  const displaySize = Math.min(512, Math.max(imageBitmap.width, 256));
  base.width = overlay.width = displaySize;
  base.height = overlay.height = Math.round(
    (displaySize / imageBitmap.width) * imageBitmap.height,
  );
  const ctx = base.getContext('2d')!;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(imageBitmap, 0, 0, base.width, base.height);
  render();
}

async function ensureSuperpixels(): Promise<void> {
  if (superpixels || !imageBlob) return;
  const info = await client.superpixels(imageBlob);
  const img = new Image();
  img.src = `data:image/png;base64,${info.label_map_png}`;
  await img.decode();
  const canvas = document.createElement('canvas');
  canvas.width = info.width;
  canvas.height = info.height;
  const ctx = canvas.getContext('2d')!;
  ctx.drawImage(img, 0, 0);
  const raw = ctx.getImageData(0, 0, info.width, info.height);
  // 16-bit grayscale decodes into 8-bit RGBA; labels < 65536 survive via R+G.
  const labels = new Uint16Array(info.width * info.height);
  for (let i = 0; i < labels.length; i += 1) {
    labels[i] = raw.data[4 * i];
  }
  superpixels = { labels, info };
}

async function onCanvasClick(event: MouseEvent): Promise<void> {
  if (!state.imageUrl) return;
  const overlay = $('overlay') as HTMLCanvasElement;
  const rect = overlay.getBoundingClientRect();
  const scale = scaleFor(overlay);
  let x = Math.floor((event.clientX - rect.left) / scale);
  let y = Math.floor((event.clientY - rect.top) / scale);

  const existing = hintAtPosition(state.hints, x, y);
  if (event.shiftKey && existing) {
    state = removeHint(state, existing.id);
    render();
    return;
  }
  const snap = ($('snap') as HTMLInputElement).checked;
  if (snap) {
    try {
      await ensureSuperpixels();
      if (superpixels) {
        const pos = snapToRegionCentroid(
          x, y, superpixels.labels, superpixels.info.width, superpixels.info.centroids,
        );
        x = pos.x;
        y = pos.y;
      }
    } catch {
      $('notice').textContent = 'superpixel snap unavailable';
    }
  }
  const color = hexToRgb(($('color') as HTMLInputElement).value);
  state = placeHint(state, x, y, color, DEFAULT_HINT_RADIUS);
  render();
}

async function onSubmit(): Promise<void> {
  if (!imageBlob || state.polling) return;
  state = startPolling(state);
  state = {
    ...state,
    caption: ($('caption') as HTMLInputElement).value,
    negative: ($('negative') as HTMLInputElement).value,
    sampler: {
      steps: Number(($('steps') as HTMLInputElement).value),
      guidance: Number(($('guidance') as HTMLInputElement).value),
      seed: Number(($('seed') as HTMLInputElement).value),
      variants: Number(($('variants') as HTMLInputElement).value),
    },
  };
  render();
  try {
    const jobId = await client.submitColorize(imageBlob, requestOptionsJson(state));
    const job = await pollJob(client, jobId, 1000);
    state = appendGallery(state, {
      jobId,
      images: job.result!.images,
      seeds: job.result!.seeds,
    });
  } catch (err) {
    if (err instanceof ApiError) {
      state = applyServerError(state, err);
    } else {
      state = { ...state, polling: false, notice: String(err) };
    }
  }
  render();
}

function wire(): void {
  ($('file') as HTMLInputElement).addEventListener('change', (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (file) void onUpload(file);
  });
  $('overlay').addEventListener('click', (e) => void onCanvasClick(e as MouseEvent));
  $('submit').addEventListener('click', () => void onSubmit());
  $('export-hints').addEventListener('click', () => {
    const blob = new Blob([serializeHints(state.hints)], { type: 'application/json' });
    const a = document.createElement('a');
    a.href = URL.createObjectURL(blob);
    a.download = 'hints.json';
    a.click();
  });
  ($('import-hints') as HTMLInputElement).addEventListener('change', async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    try {
      const parsed = parseHints(await file.text());
      state = { ...state, hints: parsed, nextHintId: parsed.length + 1 };
    } catch (err) {
      state = { ...state, notice: `hint import failed: ${err}` };
    }
    render();
  });
  $('heatmap-toggle').addEventListener('click', () => {
    heatmapOn = !heatmapOn;
    void renderCompare();
  });
  for (const paneId of ['pane-a', 'pane-b']) {
    const pane = $(paneId) as HTMLCanvasElement;
    pane.addEventListener('wheel', (e) => {
      e.preventDefault();
      viewport = applyZoom(viewport, e.deltaY < 0 ? 1.25 : 0.8, e.offsetX, e.offsetY);
      void renderCompare();
    });
    pane.addEventListener('mousemove', (e) => {
      if (e.buttons === 1) {
        viewport = applyPan(viewport, e.movementX, e.movementY);
        void renderCompare();
      }
    });
  }
  void client
    .models()
    .then((info) => {
      $('model-info').textContent =
        `model ${info.resolution}px (f=${info.f}), supports ${info.supports.join(', ')}`;
    })
    .catch(() => {
      $('model-info').textContent = 'service not reachable yet';
    });
  render();
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  wire();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', wire);
}
