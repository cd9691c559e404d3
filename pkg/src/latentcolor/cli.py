"""Command-line interface: dataset generation, training, batch colorization,
evaluation reports, superpixel maps, and the HTTP service."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _add_colorize_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="input grayscale PNG or directory of PNGs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--models", default="runs", help="run directory with trained checkpoints")
    p.add_argument("--caption", default="", help="text prompt")
    p.add_argument("--negative", default="", help="negative prompt (CFG unconditional slot)")
    p.add_argument("--hints", default=None, help="JSON file with hint points [{x,y,r,g,b}]")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variants", type=int, default=1)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--sampler", default=None,
                   help="JSON file with {steps, eta, guidance, seed, strength?}; "
                        "overrides the individual sampler flags")
    p.add_argument("--baseline", action="store_true",
                   help="run the strength-0.45 img2img baseline instead of the guided pipeline")


def _cmd_colorize(args) -> int:
    from .imageproc.color import rgb_to_gray
    from .imageproc.hints import hint_points_from_json
    from .imageproc.pngio import load_png, save_png
    from .pipeline import ColorizationRequest, Colorizer, ModelBundle

    src = Path(args.input)
    files = sorted(src.glob("*.png")) if src.is_dir() else [src]
    if not files:
        print(f"no PNG inputs under {src}", file=sys.stderr)
        return 2
    points = None
    if args.hints:
        points = hint_points_from_json(Path(args.hints).read_text())
    sampler = None
    if args.sampler:
        from .diffusion.sampling import SamplerOptions

        sampler = SamplerOptions.from_json(Path(args.sampler).read_text())
    colorizer = Colorizer(ModelBundle.load(args.models))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in files:
        img = load_png(path)
        gray = rgb_to_gray(img) if img.ndim == 3 else img
        req = ColorizationRequest(
            gray=gray,
            caption=args.caption,
            negative=args.negative,
            points=points,
            steps=sampler.steps if sampler else args.steps,
            guidance=sampler.guidance if sampler else args.guidance,
            seed=sampler.seed if sampler else args.seed,
            variants=args.variants,
            eta=sampler.eta if sampler else args.eta,
        )
        use_baseline = args.baseline or (sampler is not None and sampler.strength is not None)
        result = (
            colorizer.colorize_sdedit_baseline(req) if use_baseline else colorizer.colorize(req)
        )
        for k, variant in enumerate(result.images):
            suffix = "" if args.variants == 1 else f"_v{k}"
            target = out_dir / f"{path.stem}{suffix}.png"
            save_png(target, variant)
            print(f"{path.name} -> {target} (seed {result.seeds[k]})")
    return 0


def _cmd_make_toy_data(args) -> int:
    from .training.data import generate_toy_dataset

    ds = generate_toy_dataset(args.out, n=args.n, resolution=args.resolution, seed=args.seed)
    print(f"wrote {len(ds)} images to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .training.stages import TrainConfig, run_stage

    overrides = {}
    for key in ("steps", "batch_size", "lr", "seed", "resolution", "checkpoint_every"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if args.config:
        config = TrainConfig.from_yaml(
            args.config, stage=args.stage, data_dir=args.data, run_dir=args.run_dir, **overrides
        )
    else:
        config = TrainConfig(
            stage=args.stage, data_dir=args.data, run_dir=args.run_dir, **overrides
        )
    path = run_stage(config)
    print(f"stage {args.stage} checkpoint: {path}")
    return 0


def _cmd_train_all(args) -> int:
    from .deskrun import run_all_stages

    summary = run_all_stages(args.data, args.run_dir, profile=args.profile, seed=args.seed)
    for stage, info in summary["stages"].items():
        print(f"{stage}: {info['checkpoint']} ({info['seconds']}s)")
    return 0


def _cmd_evaluate(args) -> int:
    from .metrics.report import EncoderFeatureExtractor, evaluate_corpus, write_report

    extractor = None
    if args.models:
        from .pipeline import ModelBundle

        extractor = EncoderFeatureExtractor(ModelBundle.load(args.models).autoencoder)
    perceptual_fn = None
    if args.perceptual:
        # Built-in plug for the optional perceptual-distance column.
        import torch

        from .autoencoder.losses import PerceptualFeatures

        net = PerceptualFeatures()

        def perceptual_fn(a, b):
            ta = torch.from_numpy(a.astype("float32")).permute(2, 0, 1)[None]
            tb = torch.from_numpy(b.astype("float32")).permute(2, 0, 1)[None]
            with torch.no_grad():
                return float(net(ta, tb))

    report = evaluate_corpus(
        args.pred, args.gt, feature_extractor=extractor, perceptual_fn=perceptual_fn
    )
    write_report(report, args.out)
    print((Path(args.out) / "report.txt").read_text())
    return 0


def _cmd_superpixels(args) -> int:
    from .imageproc.pngio import load_png, save_png
    from .imageproc.superpixels import slic_superpixels

    img = load_png(args.input)
    sp = slic_superpixels(img.astype(np.float64), args.segments, args.compactness)
    edges = np.zeros_like(sp.labels, dtype=bool)
    edges[:, 1:] |= sp.labels[:, 1:] != sp.labels[:, :-1]
    edges[1:, :] |= sp.labels[1:, :] != sp.labels[:-1, :]
    vis = img.copy()
    vis[edges] = (1.0, 0.1, 0.1)
    save_png(args.out, vis)
    print(f"{sp.n_segments} regions -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import ServiceSettings, create_app

    settings = ServiceSettings.from_env(model_dir=args.models, bind=args.bind)
    host, _, port = settings.bind.rpartition(":")
    app = create_app(settings)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentcolor")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("colorize", help="batch-colorize grayscale PNGs")
    _add_colorize_args(p)
    p.set_defaults(fn=_cmd_colorize)

    p = sub.add_parser("make-toy-data", help="render the procedural shapes dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_make_toy_data)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", required=True,
                   choices=["autoencoder", "diffusion", "guider", "lightness"])
    p.add_argument("--data", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", default=None, help="YAML TrainConfig file")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("train-all", help="run all four stages on the toy dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--profile", default="cpu-small", choices=["desk", "cpu-small"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_train_all)

    p = sub.add_parser("evaluate", help="metric report over prediction/ground-truth dirs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models", default=None, help="run dir; enables the Frechet column")
    p.add_argument("--perceptual", action="store_true",
                   help="add the pluggable perceptual-distance column (built-in extractor)")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("superpixels", help="write a superpixel boundary visualization")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segments", type=int, default=64)
    p.add_argument("--compactness", type=float, default=10.0)
    p.set_defaults(fn=_cmd_superpixels)

    p = sub.add_parser("serve", help="start the HTTP inference service")
    p.add_argument("--models", default="runs")
    p.add_argument("--bind", default="127.0.0.1:8100")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


def colorize_entry(argv=None) -> int:
    """Entry point for the `colorize` console script (batch CLI)."""
    parser = argparse.ArgumentParser(prog="colorize")
    _add_colorize_args(parser)
    args = parser.parse_args(argv)
    return _cmd_colorize(args)


if __name__ == "__main__":
    raise SystemExit(main())
