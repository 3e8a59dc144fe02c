"""Command-line entry point: ``msrnet <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, metrics
from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_run_config

log = logging.getLogger("msrnet")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write_provenance(directory: Path, command: str, args: argparse.Namespace, **extra):
    directory.mkdir(parents=True, exist_ok=True)
    payload = {"command": command,
               "args": {k: str(v) if isinstance(v, Path) else v
                        for k, v in vars(args).items() if k != "func"}}
    payload.update(extra)
    (directory / "resolved_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str))


def _arch_overrides(args) -> dict:
    return {"n": args.n, "v": args.v, "K": args.K, "width": args.width}


def _add_arch_flags(p):
    g = p.add_argument_group("architecture")
    g.add_argument("--n", type=int)
    g.add_argument("--v", type=_floats, help="comma-separated log-transform scales")
    g.add_argument("--K", type=int)
    g.add_argument("--width", type=int)


def _load_model(args):
    """Load ``--model``; any architecture flags given must match it."""
    model, state = load_checkpoint(args.model)
    stored = model.config.to_dict()
    for key, value in _arch_overrides(args).items():
        if value is not None and value != stored[key]:
            raise UsageError(f"architecture mismatch: --{key} {value} but checkpoint has "
                             f"{key}={stored[key]}")
    return model, state


# -- subcommands ----------------------------------------------------------------

def cmd_synthesize(args) -> int:
    summary = data.synthesize_dataset(args.hq_dir, args.out, per_image=args.per_image,
                                      seed=args.seed, test_fraction=args.test_fraction)
    _write_provenance(Path(args.out), "synthesize", args,
                      pipeline_version=data.PIPELINE_VERSION, skipped=summary.skipped)
    print(f"wrote {len(summary.pairs)} pairs to {summary.manifest} "
          f"({summary.skipped} undecodable file(s) skipped)")
    return 0


def cmd_train(args) -> int:
    from .model import MsrNet
    from .nn import train_loop

    overrides = dict(_arch_overrides(args), max_iters=args.max_iters, batch=args.batch,
                     lr0=args.lr0, lam=args.lam, seed=args.seed, patch=args.patch,
                     patches_per_pair=args.patches_per_pair, log_every=args.log_every,
                     checkpoint_every=args.checkpoint_every, lr_drop_iters=args.lr_drop_iters)
    cfg = load_run_config(args.config, overrides)
    out = Path(args.out)
    pairs = [p for p in data.read_manifest(args.manifest) if p.split == "train"]
    if not pairs:
        raise UsageError(f"{args.manifest} has no train rows")
    dataset = data.build_patch_dataset(pairs, cfg.patch, cfg.patches_per_pair, cfg.seed)
    start = 0
    if args.resume:
        model, state = load_checkpoint(args.resume, expect_config=cfg.model_config())
        if state is None:
            raise UsageError(f"{args.resume} carries no optimizer state to resume from")
        start = state.iteration
    else:
        model = MsrNet(cfg.model_config(), seed=cfg.seed)
    cfg.write(out, manifest=str(args.manifest), resume=str(args.resume) if args.resume else None,
              patches=len(dataset))
    tcfg = cfg.train_config()
    if start >= tcfg.max_iters:
        save_checkpoint(out / "final.msrn", model, iteration=start)
        print(f"checkpoint already at iteration {start}; nothing to do")
        return 0
    result = train_loop(model, dataset, tcfg, start_iter=start, log_every=cfg.log_every,
                        checkpoint_every=cfg.checkpoint_every, out_dir=out)
    last = result.losses[-1] if result.losses else float("nan")
    print(f"trained to iteration {result.iteration}, last loss {last:.6g}, "
          f"checkpoint {result.checkpoint}")
    return 0


def _comparison_sheet(inp: np.ndarray, out: np.ndarray) -> np.ndarray:
    gap = np.ones((3, inp.shape[1], 4), dtype=np.float32)
    return np.concatenate([inp, gap, out], axis=2)


def cmd_enhance(args) -> int:
    model, _ = _load_model(args)
    src, dst = Path(args.input), Path(args.output)
    if src.is_dir():
        jobs = [(p, dst / (p.stem + ".png")) for p in data.list_images(src)]
        if not jobs:
            raise UsageError(f"no images in {src}")
    else:
        jobs = [(src, dst)]
    for inp_path, out_path in jobs:
        img = data.read_image(inp_path)
        out = model.enhance(img, tile=args.tile, overlap=args.overlap)
        data.write_image(out_path, out)
        if args.compare:
            data.write_image(out_path.with_name(out_path.stem + "_compare.png"),
                             _comparison_sheet(img, out))
    _write_provenance(dst if src.is_dir() else dst.parent, "enhance", args,
                      model_config=model.config.to_dict())
    print(f"enhanced {len(jobs)} image(s)")
    return 0


def cmd_msr(args) -> int:
    from . import retinex

    try:
        scales = retinex.MsrScales.equal(args.scales)
    except ValueError as exc:
        raise UsageError(str(exc))
    img = data.read_image(args.input)[None].astype(np.float64)
    if args.cascade:
        out = retinex.build_msr_cascade(scales)(img)
    else:
        out = retinex.msr(img, scales)
    if args.crf:
        out = retinex.crf_baseline(out, img, args.alpha, args.beta)
    shown = retinex.postprocess_display(out, args.clip)[0]
    data.write_image(args.output, shown)
    _write_provenance(Path(args.output).parent, "msr", args)
    print(f"wrote {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    pairs = [p for p in data.read_manifest(args.manifest) if p.split == args.split]
    if not pairs:
        raise UsageError(f"{args.manifest} has no {args.split} rows")
    if args.model:
        model, _ = load_checkpoint(args.model)

        def produce(p):
            return model.enhance(data.read_image(p.ll_path), tile=args.tile)

        source = {"model": str(args.model), "model_config": model.config.to_dict()}
    elif args.enhanced_dir:
        root = Path(args.enhanced_dir)

        def produce(p):
            return data.read_image(root / (Path(p.ll_path).stem + ".png"))

        source = {"enhanced_dir": str(root)}
    elif args.baseline == "gt":
        def produce(p):
            return data.read_image(p.hq_path)

        source = {"baseline": "gt"}
    else:
        def produce(p):
            return data.read_image(p.ll_path)

        source = {"baseline": "input"}
    cfg = {"manifest": str(args.manifest), "split": args.split,
           "angular_mode": args.angular_mode, **source}
    report = metrics.evaluate(pairs, produce, angular_mode=args.angular_mode, config=cfg)
    prefix = Path(args.report)
    report.write_csv(prefix.with_suffix(".csv"))
    report.write_json(prefix.with_suffix(".json"))
    _write_provenance(prefix.parent, "evaluate", args)
    agg = report.aggregate
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"{agg['count']} images: ssim {fmt(agg['ssim'])} entropy {fmt(agg['entropy'])} "
          f"angular {fmt(agg['angular_deg'])} deg (niqe: not available)")
    return 0


def cmd_benchmark(args) -> int:
    from .bench import benchmark, write_benchmark_csv

    model, _ = load_checkpoint(args.model)
    rows = benchmark(model, args.sizes, args.repeat, tile=args.tile or None)
    write_benchmark_csv(rows, args.out)
    _write_provenance(Path(args.out).parent, "benchmark", args)
    for r in rows:
        flag = "  (faster than smaller size)" if r["non_monotone"] else ""
        print(f"{r['size']}x{r['size']}: {r['mean_s']:.3f} s +- {r['std_s']:.3f}{flag}")
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msrnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, help="cap BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="degrade HQ images into LL/HQ pairs")
    p.add_argument("--hq-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-image", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="train the network on a manifest's train split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, help="flat TOML run configuration")
    p.add_argument("--resume", type=Path, help="checkpoint with optimizer state")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--lr-drop-iters", type=_ints)
    p.add_argument("--lam", "--lambda", dest="lam", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--patches-per-pair", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--checkpoint-every", type=int)
    _add_arch_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance an image or a directory of images")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--tile", type=int, help="tile size; whole image when omitted")
    p.add_argument("--overlap", type=int, default=16)
    p.add_argument("--compare", action="store_true", help="also write input|output sheets")
    _add_arch_flags(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("msr", help="classical multi-scale Retinex")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--scales", type=_floats, default=[15.0, 80.0, 250.0])
    p.add_argument("--clip", type=float, default=1.0, help="percentile clip for display")
    p.add_argument("--cascade", action="store_true", help="use the cascaded-convolution form")
    p.add_argument("--crf", action="store_true", help="apply chromaticity colour restoration")
    p.add_argument("--alpha", type=float, default=125.0)
    p.add_argument("--beta", type=float, default=46.0)
    p.set_defaults(func=cmd_msr)

    p = sub.add_parser("evaluate", help="SSIM / entropy / angular error report")
    p.add_argument("--manifest", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=Path)
    src.add_argument("--enhanced-dir", type=Path)
    src.add_argument("--baseline", choices=["input", "gt"],
                     help="score the low-light inputs, or the ground truth itself")
    p.add_argument("--report", type=Path, required=True, help="output path prefix")
    p.add_argument("--split", default="test")
    p.add_argument("--tile", type=int)
    p.add_argument("--angular-mode", choices=["global", "perpixel"], default="global")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="time enhancement at several image sizes")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--sizes", type=_ints, default=[500, 750, 1000])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--tile", type=int, default=256, help="0 for whole-image passes")
    p.add_argument("--out", type=Path, default=Path("benchmark.csv"))
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with contextlib.ExitStack() as stack:
        if args.threads:
            from threadpoolctl import threadpool_limits
            stack.enter_context(threadpool_limits(limits=args.threads))
        try:
            return args.func(args)
        except (UsageError, ConfigError) as exc:
            print(f"msrnet {args.command}: error: {exc}", file=sys.stderr)
            return 2
        except CheckpointFormatError as exc:
            print(f"msrnet {args.command}: checkpoint format error: {exc}", file=sys.stderr)
            return 1
        except Exception as exc:  # runtime failure
            log.debug("failure", exc_info=True)
            print(f"msrnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1

if __name__ == "__main__":
    sys.exit(main())
