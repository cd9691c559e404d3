"""HTTP inference service: asynchronous colorization jobs over a FIFO queue.

Sampling can take minutes on CPU, so submission returns a job id immediately
and clients poll for completion.
"""

import base64
import io
import json
import os
import queue
import shutil
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from PIL import Image

from ..imageproc.color import rgb_to_gray
from ..imageproc.hints import HintPoint
from ..imageproc.pngio import save_png
from ..imageproc.superpixels import slic_superpixels
from ..pipeline import Colorizer, ColorizationRequest, ModelBundle

MAX_VARIANTS = 8


@dataclass
class ServiceSettings:
    model_dir: str
    bind: str = "127.0.0.1:8100"
    max_side: int = 1024
    queue_depth: int = 8
    workers: int = 1
    result_ttl_s: float = 3600.0
    result_dir: Optional[str] = None

    @classmethod
    def from_env(cls, **overrides) -> "ServiceSettings":
        values = {
            "model_dir": os.environ.get("LATENTCOLOR_MODEL_DIR", "runs"),
            "bind": os.environ.get("LATENTCOLOR_BIND", "127.0.0.1:8100"),
            "max_side": int(os.environ.get("LATENTCOLOR_MAX_SIDE", "1024")),
            "queue_depth": int(os.environ.get("LATENTCOLOR_QUEUE_DEPTH", "8")),
            "workers": int(os.environ.get("LATENTCOLOR_WORKERS", "1")),
            "result_ttl_s": float(os.environ.get("LATENTCOLOR_RESULT_TTL", "3600")),
            "result_dir": os.environ.get("LATENTCOLOR_RESULT_DIR"),
        }
        values.update(overrides)
        return cls(**values)


@dataclass
class Job:
    id: str
    status: str  # queued -> running -> done | failed
    options: dict
    created: float
    started: Optional[float] = None
    finished: Optional[float] = None
    error: Optional[str] = None
    result: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "options": self.options,
            "created": self.created,
            "started": self.started,
            "finished": self.finished,
            "error": self.error,
            "result": self.result,
        }


class ValidationError(ValueError):
    def __init__(self, message: str, field_path: str):
        super().__init__(message)
        self.field_path = field_path


def _expect(cond: bool, message: str, field_path: str) -> None:
    if not cond:
        raise ValidationError(message, field_path)


def parse_options(raw: dict, width: int, height: int) -> dict:
    """Validate request options; errors carry exact field paths like hints[0].x."""
    out: dict = {}
    _expect(isinstance(raw, dict), "options must be a JSON object", "options")
    allowed = {"caption", "negative", "hints", "steps", "guidance", "seed", "variants", "eta"}
    for key in raw:
        _expect(key in allowed, f"unknown option '{key}'", key)
    out["caption"] = raw.get("caption", "")
    _expect(isinstance(out["caption"], str), "caption must be a string", "caption")
    out["negative"] = raw.get("negative", "")
    _expect(isinstance(out["negative"], str), "negative must be a string", "negative")
    steps = raw.get("steps", 50)
    _expect(isinstance(steps, int) and steps >= 1, "steps must be an integer >= 1", "steps")
    out["steps"] = steps
    guidance = raw.get("guidance", 7.5)
    _expect(
        isinstance(guidance, (int, float)) and np.isfinite(guidance),
        "guidance must be a finite number",
        "guidance",
    )
    out["guidance"] = float(guidance)
    seed = raw.get("seed", 0)
    _expect(isinstance(seed, int), "seed must be an integer", "seed")
    out["seed"] = seed
    variants = raw.get("variants", 1)
    _expect(
        isinstance(variants, int) and 1 <= variants <= MAX_VARIANTS,
        f"variants must be an integer in [1, {MAX_VARIANTS}]",
        "variants",
    )
    out["variants"] = variants
    eta = raw.get("eta", 0.0)
    _expect(isinstance(eta, (int, float)) and eta >= 0, "eta must be >= 0", "eta")
    out["eta"] = float(eta)

    hints = raw.get("hints", [])
    _expect(isinstance(hints, list), "hints must be a list", "hints")
    points = []
    for i, h in enumerate(hints):
        _expect(isinstance(h, dict), "hint must be an object", f"hints[{i}]")
        for k in ("x", "y", "r", "g", "b"):
            _expect(k in h, f"hint missing '{k}'", f"hints[{i}].{k}")
        x, y = h["x"], h["y"]
        _expect(isinstance(x, int) and 0 <= x < width, f"x out of bounds [0, {width})", f"hints[{i}].x")
        _expect(isinstance(y, int) and 0 <= y < height, f"y out of bounds [0, {height})", f"hints[{i}].y")
        rgb = []
        for k in ("r", "g", "b"):
            v = h[k]
            _expect(
                isinstance(v, (int, float)) and 0.0 <= v <= 1.0,
                f"{k} must lie in [0, 1]",
                f"hints[{i}].{k}",
            )
            rgb.append(float(v))
        points.append(HintPoint(x=x, y=y, rgb=tuple(rgb)))
    out["points"] = points
    return out


class ServiceState:
    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.bundle: Optional[ModelBundle] = None
        self.colorizer: Optional[Colorizer] = None
        self.resolution: Optional[int] = None
        self.load_error: Optional[str] = None
        self.jobs: dict[str, Job] = {}
        self.images: dict[str, np.ndarray] = {}
        self.lock = threading.Lock()
        self.queue: "queue.Queue[str]" = queue.Queue(maxsize=settings.queue_depth)
        self.result_dir = Path(settings.result_dir or Path(settings.model_dir) / "service_results")
        self.stop = threading.Event()

    def load_models(self) -> None:
        try:
            bundle = ModelBundle.load(self.settings.model_dir)
            self.colorizer = Colorizer(bundle)
            self.resolution = bundle.resolution
            self.bundle = bundle
        except Exception as exc:  # surfaced via /v1/models
            self.load_error = str(exc)

    def worker_loop(self) -> None:
        while not self.stop.is_set():
            try:
                job_id = self.queue.get(timeout=0.2)
            except queue.Empty:
                continue
            with self.lock:
                job = self.jobs[job_id]
                job.status = "running"
                job.started = time.time()
            try:
                gray = self.images.pop(job_id)
                opts = dict(job.options)
                points = opts.pop("points")
                req = ColorizationRequest(gray=gray, points=points or None, **opts)
                result = self.colorizer.colorize(req)
                job_dir = self.result_dir / job_id
                urls = []
                for k, img in enumerate(result.images):
                    name = f"variant_{k}.png"
                    save_png(job_dir / name, img)
                    urls.append(f"/v1/results/{job_id}/{name}")
                with self.lock:
                    job.result = {"images": urls, "seeds": result.seeds}
                    job.status = "done"
                    job.finished = time.time()
            except Exception as exc:
                with self.lock:
                    job.error = str(exc)
                    job.status = "failed"
                    job.finished = time.time()

    def cleanup_loop(self) -> None:
        while not self.stop.is_set():
            cutoff = time.time() - self.settings.result_ttl_s
            with self.lock:
                stale = [
                    j.id
                    for j in self.jobs.values()
                    if j.finished is not None and j.finished < cutoff
                ]
                for job_id in stale:
                    del self.jobs[job_id]
            for job_id in stale:
                shutil.rmtree(self.result_dir / job_id, ignore_errors=True)
            self.stop.wait(min(60.0, self.settings.result_ttl_s / 2 + 0.1))


def _error(status: int, message: str, field_path: Optional[str] = None) -> JSONResponse:
    body = {"error": message}
    if field_path is not None:
        body["field"] = field_path
    return JSONResponse(body, status_code=status)


def create_app(settings: Optional[ServiceSettings] = None, load_async: bool = True) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    state = ServiceState(settings)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if load_async:
            threading.Thread(target=state.load_models, daemon=True).start()
        else:
            state.load_models()
        for _ in range(settings.workers):
            threading.Thread(target=state.worker_loop, daemon=True).start()
        threading.Thread(target=state.cleanup_loop, daemon=True).start()
        yield
        state.stop.set()

    app = FastAPI(title="latentcolor service", lifespan=lifespan)
    app.state.service = state

    @app.get("/v1/models")
    def models():
        if state.load_error:
            return _error(500, f"model load failed: {state.load_error}")
        if state.bundle is None:
            return _error(503, "models are still loading")
        return {
            "hashes": state.bundle.hashes,
            "resolution": state.resolution,
            "f": state.bundle.downsample_factor,
            "supports": ["text", "hints", "variants"],
        }

    @app.post("/v1/colorize")
    async def colorize(image: UploadFile, options: str = Form("{}")):
        if state.bundle is None:
            return _error(503, "models are still loading")
        raw = await image.read()
        try:
            with Image.open(io.BytesIO(raw)) as im:
                im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float32) / 255.0
        except Exception:
            return _error(400, "image could not be decoded", "image")
        if max(arr.shape[:2]) > settings.max_side:
            return _error(413, f"image side exceeds configured maximum {settings.max_side}")
        try:
            opts_raw = json.loads(options or "{}")
        except json.JSONDecodeError as exc:
            return _error(400, f"options is not valid JSON: {exc}", "options")
        try:
            opts = parse_options(opts_raw, width=arr.shape[1], height=arr.shape[0])
        except ValidationError as exc:
            return _error(400, str(exc), exc.field_path)

        # Jobs hold the parsed options (HintPoint objects included); responses
        # render them back to the wire format via opts_to_json.
        job = Job(id=uuid.uuid4().hex, status="queued", options=opts, created=time.time())
        gray = rgb_to_gray(np.clip(arr, 0.0, 1.0)).astype(np.float32)
        with state.lock:
            state.jobs[job.id] = job
            state.images[job.id] = gray
        try:
            state.queue.put_nowait(job.id)
        except queue.Full:
            with state.lock:
                del state.jobs[job.id]
                del state.images[job.id]
            return _error(503, "job queue is full, retry later")
        return JSONResponse({"job_id": job.id}, status_code=202)

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                return _error(404, f"unknown job id {job_id}")
            payload = job.to_json()
        payload["options"] = opts_to_json(payload["options"])
        return payload

    @app.get("/v1/results/{job_id}/{name}")
    def get_result(job_id: str, name: str):
        path = state.result_dir / job_id / name
        if not path.exists() or not path.resolve().is_relative_to(state.result_dir.resolve()):
            return _error(404, "no such result")
        return FileResponse(path, media_type="image/png")

    @app.post("/v1/superpixels")
    async def superpixels(image: UploadFile, n_segments: int = Form(64), compactness: float = Form(10.0)):
        raw = await image.read()
        try:
            with Image.open(io.BytesIO(raw)) as im:
                im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float64) / 255.0
        except Exception:
            return _error(400, "image could not be decoded", "image")
        if max(arr.shape[:2]) > settings.max_side:
            return _error(413, f"image side exceeds configured maximum {settings.max_side}")
        try:
            sp = slic_superpixels(arr, n_segments=n_segments, compactness=compactness)
        except ValueError as exc:
            return _error(400, str(exc), "n_segments")
        labels16 = sp.labels.astype(np.uint16)
        buf = io.BytesIO()
        Image.fromarray(labels16).save(buf, format="PNG")
        label_png = base64.b64encode(buf.getvalue()).decode("ascii")
        # Boundary visualization: region mean gray with white borders.
        vis = np.full(sp.labels.shape, 0.5)
        edges = np.zeros_like(sp.labels, dtype=bool)
        edges[:, 1:] |= sp.labels[:, 1:] != sp.labels[:, :-1]
        edges[1:, :] |= sp.labels[1:, :] != sp.labels[:-1, :]
        vis_rgb = np.repeat(arr.mean(axis=2)[..., None], 3, axis=2)
        vis_rgb[edges] = (1.0, 0.1, 0.1)
        buf2 = io.BytesIO()
        Image.fromarray((vis_rgb * 255).astype(np.uint8)).save(buf2, format="PNG")
        return {
            "region_count": sp.n_segments,
            "width": sp.width,
            "height": sp.height,
            "label_map_png": label_png,
            "visualization_png": base64.b64encode(buf2.getvalue()).decode("ascii"),
            "centroids": [[float(x), float(y)] for x, y in sp.centroids()],
        }

    return app


def opts_to_json(opts: dict) -> dict:
    out = {k: v for k, v in opts.items() if k != "points"}
    pts = opts.get("points") or []
    out["hints"] = [
        {"x": p.x, "y": p.y, "r": p.rgb[0], "g": p.rgb[1], "b": p.rgb[2]}
        if isinstance(p, HintPoint)
        else p
        for p in pts
    ]
    return out
