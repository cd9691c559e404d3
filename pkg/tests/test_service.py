import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from latentcolor.service.app import ServiceSettings, create_app, parse_options, ValidationError


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray((np.clip(arr, 0, 1) * 255).astype("uint8")).save(buf, format="PNG")
    return buf.getvalue()


def _gray_image(h=32, w=32):
    g = np.clip(np.linspace(0.2, 0.8, w)[None, :] * np.ones((h, w)), 0, 1)
    return np.repeat(g[..., None], 3, axis=2)


@pytest.fixture()
def client(micro_run_dir, tmp_path):
    settings = ServiceSettings(
        model_dir=str(micro_run_dir), result_dir=str(tmp_path / "results"),
        queue_depth=4, max_side=128, workers=1,
    )
    app = create_app(settings, load_async=False)
    with TestClient(app) as c:
        yield c


def _submit_and_wait(client, img, options, timeout=60.0):
    r = client.post(
        "/v1/colorize",
        files={"image": ("in.png", _png_bytes(img), "image/png")},
        data={"options": json.dumps(options)},
    )
    assert r.status_code == 202, r.text
    job_id = r.json()["job_id"]
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/v1/jobs/{job_id}").json()
        if job["status"] in ("done", "failed"):
            return job
        time.sleep(0.1)
    raise TimeoutError("job did not finish")


def test_models_endpoint(client):
    r = client.get("/v1/models")
    assert r.status_code == 200
    body = r.json()
    assert "hints" in body["supports"] and "text" in body["supports"]
    assert body["resolution"] % body["f"] == 0
    assert set(body["hashes"]) == {
        "autoencoder", "denoiser", "text_encoder", "guider", "lightness",
    }


def test_submit_poll_roundtrip_and_immutability(client):
    job = _submit_and_wait(client, _gray_image(), {"steps": 4, "seed": 5})
    assert job["status"] == "done"
    assert len(job["result"]["images"]) == 1
    assert job["result"]["seeds"] == [5]
    again = client.get(f"/v1/jobs/{job['id']}").json()
    assert again == job
    img = client.get(job["result"]["images"][0])
    assert img.status_code == 200 and img.headers["content-type"] == "image/png"


def test_fixed_seed_is_byte_identical(client):
    opts = {"steps": 5, "seed": 42}
    job_a = _submit_and_wait(client, _gray_image(), opts)
    job_b = _submit_and_wait(client, _gray_image(), opts)
    png_a = client.get(job_a["result"]["images"][0]).content
    png_b = client.get(job_b["result"]["images"][0]).content
    assert png_a == png_b


def test_validation_errors_carry_field_paths(client):
    img = _gray_image()
    cases = [
        ({"hints": [{"x": -1, "y": 2, "r": 0.1, "g": 0.1, "b": 0.1}]}, "hints[0].x"),
        ({"hints": [{"x": 1, "y": 99, "r": 0.1, "g": 0.1, "b": 0.1}]}, "hints[0].y"),
        ({"hints": [{"x": 1, "y": 1, "r": 2.0, "g": 0.1, "b": 0.1}]}, "hints[0].r"),
        ({"hints": [{"x": 1, "y": 1, "g": 0.1, "b": 0.1}]}, "hints[0].r"),
        ({"steps": 0}, "steps"),
        ({"variants": 0}, "variants"),
        ({"guidance": "high"}, "guidance"),
    ]
    for options, field in cases:
        r = client.post(
            "/v1/colorize",
            files={"image": ("in.png", _png_bytes(img), "image/png")},
            data={"options": json.dumps(options)},
        )
        assert r.status_code == 400
        assert r.json()["field"] == field


def test_undecodable_image_and_bad_json(client):
    r = client.post("/v1/colorize", files={"image": ("x.png", b"junk", "image/png")})
    assert r.status_code == 400 and r.json()["field"] == "image"
    r = client.post(
        "/v1/colorize",
        files={"image": ("in.png", _png_bytes(_gray_image()), "image/png")},
        data={"options": "{nope"},
    )
    assert r.status_code == 400 and r.json()["field"] == "options"


def test_oversized_image_413(client):
    r = client.post(
        "/v1/colorize",
        files={"image": ("big.png", _png_bytes(np.zeros((200, 200, 3))), "image/png")},
    )
    assert r.status_code == 413


def test_unknown_job_404(client):
    assert client.get("/v1/jobs/deadbeef").status_code == 404


def test_failed_job_reports_error(client):
    # 20x20 decodes fine but is below the pipeline's minimum side.
    job = _submit_and_wait(client, _gray_image(20, 20), {"steps": 2})
    assert job["status"] == "failed"
    assert "upscale" in job["error"]


def test_queue_full_503(micro_run_dir, tmp_path):
    settings = ServiceSettings(
        model_dir=str(micro_run_dir), result_dir=str(tmp_path / "r2"),
        queue_depth=1, max_side=128, workers=0,
    )
    app = create_app(settings, load_async=False)
    with TestClient(app) as c:
        img = _png_bytes(_gray_image())
        r1 = c.post("/v1/colorize", files={"image": ("a.png", img, "image/png")})
        assert r1.status_code == 202
        r2 = c.post("/v1/colorize", files={"image": ("b.png", img, "image/png")})
        assert r2.status_code == 503


def test_superpixels_endpoint(client):
    img = _png_bytes(_gray_image())
    r = client.post("/v1/superpixels", files={"image": ("g.png", img, "image/png")},
                    data={"n_segments": "16"})
    assert r.status_code == 200
    body = r.json()
    assert body["region_count"] >= 1
    assert len(body["centroids"]) == body["region_count"]
    # label map decodes as 16-bit png of the right size
    import base64

    raw = base64.b64decode(body["label_map_png"])
    with Image.open(io.BytesIO(raw)) as im:
        assert im.size == (body["width"], body["height"])
    r2 = client.post("/v1/superpixels", files={"image": ("g.png", img, "image/png")},
                     data={"n_segments": "16"})
    assert r2.json()["label_map_png"] == body["label_map_png"]


def test_parse_options_unknown_key():
    with pytest.raises(ValidationError) as exc:
        parse_options({"stepz": 3}, 32, 32)
    assert exc.value.field_path == "stepz"
