// Canvas overlay rendering: hints live as vector annotations above the image,
// never baked into pixels, so edits are lossless.

import { rgbToCss, type HintAnnotation } from './hints.js';

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  hints: readonly HintAnnotation[],
  scale: number,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (const hint of hints) {
    const x = (hint.x + 0.5) * scale;
    const y = (hint.y + 0.5) * scale;
    const r = Math.max(hint.radius * scale, 4);
    ctx.beginPath();
    ctx.arc(x, y, r, 0, Math.PI * 2);
    ctx.fillStyle = rgbToCss(hint.color);
    ctx.fill();
    ctx.lineWidth = 2;
    ctx.strokeStyle = '#ffffff';
    ctx.stroke();
    ctx.lineWidth = 1;
    ctx.strokeStyle = '#00000088';
    ctx.stroke();
  }
}
