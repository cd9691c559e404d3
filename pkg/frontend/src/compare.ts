// Side-by-side comparison: a shared viewport drives both panes, and a
// grayscale-difference heatmap checks luma alignment client-side.

export interface PixelImage {
  width: number;
  height: number;
  data: Float32Array; // RGB triplets, row-major, values in [0, 1]
}

export interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function initialViewport(): Viewport {
  return { scale: 1, offsetX: 0, offsetY: 0 };
}

export function applyZoom(v: Viewport, factor: number, cx: number, cy: number): Viewport {
  const scale = Math.min(Math.max(v.scale * factor, 0.25), 32);
  const ratio = scale / v.scale;
  return {
    scale,
    offsetX: cx - (cx - v.offsetX) * ratio,
    offsetY: cy - (cy - v.offsetY) * ratio,
  };
}

export function applyPan(v: Viewport, dx: number, dy: number): Viewport {
  return { ...v, offsetX: v.offsetX + dx, offsetY: v.offsetY + dy };
}

// Rec. 601 luma, matching the server's grayscale conversion.
export function luma(r: number, g: number, b: number): number {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

export function toGray(img: PixelImage): Float32Array {
  const out = new Float32Array(img.width * img.height);
  for (let i = 0; i < out.length; i += 1) {
    out[i] = luma(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
  }
  return out;
}

/** |luma(result) - luma(input)| per pixel; inputs are not modified. */
export function grayDifferenceHeatmap(result: PixelImage, input: PixelImage): Float32Array {
  if (result.width !== input.width || result.height !== input.height) {
    throw new Error('compare images must share dimensions');
  }
  const a = toGray(result);
  const b = toGray(input);
  const out = new Float32Array(a.length);
  for (let i = 0; i < a.length; i += 1) {
    out[i] = Math.abs(a[i] - b[i]);
  }
  return out;
}

/** Heatmap rendered as RGBA bytes (magma-ish ramp); pure of its inputs. */
export function heatmapToRgba(heat: Float32Array, gain = 4): Uint8ClampedArray {
  const out = new Uint8ClampedArray(heat.length * 4);
  for (let i = 0; i < heat.length; i += 1) {
    const v = Math.min(heat[i] * gain, 1);
    out[4 * i] = Math.round(255 * v);
    out[4 * i + 1] = Math.round(48 * v);
    out[4 * i + 2] = Math.round(96 * (1 - v));
    out[4 * i + 3] = 255;
  }
  return out;
}

export function imageFromImageData(data: ImageData): PixelImage {
  const out = new Float32Array(data.width * data.height * 3);
  for (let i = 0; i < data.width * data.height; i += 1) {
    out[3 * i] = data.data[4 * i] / 255;
    out[3 * i + 1] = data.data[4 * i + 1] / 255;
    out[3 * i + 2] = data.data[4 * i + 2] / 255;
  }
  return { width: data.width, height: data.height, data: out };
}
