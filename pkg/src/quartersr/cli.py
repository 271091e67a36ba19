"""Command-line interface.

Subcommands mirror the pipeline stages: mask handling, sensor
simulation, reconstruction, training, dataset evaluation and report
rendering, plus an HTTP server exposing the same operations.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable or malformed inputs), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as configmod
from . import pipeline
from .errors import ChainConfigError, ConfigError, DataError, NumericError, QuarterSRError
from .fsr import fsr_reconstruct
from .image import bicubic_upscale_x2, center_crop_even, load_image, save_image
from .mask import (
    DEFAULT_PERIOD,
    generate_random_qs_mask,
    load_mask,
    save_mask,
    tile_mask,
)
from .nn import apply_vdsr, apply_vdsr_qs, load_model, save_model
from .sensor import SampledImage, simulate_lowres, simulate_quarter
from .training import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_fsr_flags(parser):
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--fsr-block", type=int, help="reconstruction block size")
    parser.add_argument("--fsr-border", type=int, help="window border width")
    parser.add_argument("--fsr-iterations", type=int, help="pursuit iterations")
    parser.add_argument("--fsr-rho", type=float, help="weight decay factor")
    parser.add_argument("--fsr-gamma", type=float, help="coefficient damping factor")
    parser.add_argument(
        "--fsr-mode", choices=["independent-blocks", "sequential-reuse"]
    )


def _settings(args) -> dict[str, str]:
    """File settings with CLI flag overrides folded in."""
    cfg = configmod.load_config(args.config) if getattr(args, "config", None) else {}
    overrides = {
        "fsr.block": getattr(args, "fsr_block", None),
        "fsr.border": getattr(args, "fsr_border", None),
        "fsr.iterations": getattr(args, "fsr_iterations", None),
        "fsr.rho": getattr(args, "fsr_rho", None),
        "fsr.gamma": getattr(args, "fsr_gamma", None),
        "fsr.mode": getattr(args, "fsr_mode", None),
        "eval.border-crop": getattr(args, "border_crop", None),
    }
    return configmod.merge(cfg, overrides)


def _add_mask_source(parser):
    parser.add_argument("--mask-file", help="sampling mask file")
    parser.add_argument(
        "--mask-seed", type=int, default=0, help="seed for a generated mask"
    )


def _mask_from(args):
    if args.mask_file:
        return load_mask(args.mask_file)
    return generate_random_qs_mask(seed=args.mask_seed)


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out_dir", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mask_gen(args) -> int:
    mask = generate_random_qs_mask(period=args.period, seed=args.mask_seed)
    if (args.width is None) != (args.height is None):
        raise ChainConfigError("--width and --height must be given together")
    if args.width is not None:
        mask = tile_mask(mask, args.width, args.height)
    save_mask(mask, args.out)
    print(f"wrote {mask.width}x{mask.height} mask (period {mask.period}) to {args.out}")
    return 0


def cmd_mask_show(args) -> int:
    mask = load_mask(args.path, cell_check=not args.no_cell_check)
    density = mask.density()
    print(f"size: {mask.width}x{mask.height}")
    print(f"period: {mask.period}")
    print(f"density: {density:.4f} ({int(mask.bits.sum())} of {mask.bits.size})")
    for row in mask.bits:
        print("".join("#" if v else "." for v in row))
    return 0


def cmd_sample(args) -> int:
    reference = center_crop_even(load_image(args.image))
    out_dir = _out_dir(args)
    stem = Path(args.image).stem
    if args.sensor == "lowres":
        out_path = out_dir / f"{stem}_lowres.pgm"
        save_image(simulate_lowres(reference), out_path)
        print(f"wrote {out_path}")
        return 0
    base = _mask_from(args)
    h, w = reference.shape
    mask = tile_mask(base, w, h)
    sampled = simulate_quarter(reference, mask)
    out_path = out_dir / f"{stem}_quarter.pgm"
    mask_path = out_dir / f"{stem}_mask.txt"
    save_image(sampled.values, out_path)
    save_mask(mask, mask_path)
    print(f"wrote {out_path}")
    print(f"wrote {mask_path}")
    return 0


def cmd_reconstruct(args) -> int:
    image = load_image(args.image)
    settings = _settings(args)
    out_path = (
        Path(args.out) if args.out else _out_dir(args) / f"{Path(args.image).stem}_recon.pgm"
    )
    model = load_model(args.model) if args.model else None
    if args.refine != "none" and model is None:
        raise ChainConfigError(f"--refine {args.refine} needs --model")

    if args.recon == "bicubic":
        if args.refine == "vdsr-qs":
            raise ChainConfigError("vdsr-qs refinement needs the quarter + fsr path")
        recon = bicubic_upscale_x2(image)
        if args.refine == "vdsr":
            recon = apply_vdsr(model, recon)
    else:
        if not args.mask_file:
            raise ChainConfigError("--recon fsr needs --mask-file")
        mask = load_mask(args.mask_file)
        if mask.bits.shape != image.shape:
            h, w = image.shape
            mask = tile_mask(mask, w, h)
        recon = fsr_reconstruct(
            SampledImage(values=image * mask.bits, mask=mask),
            pipeline.fsr_params_from(settings),
            workers=args.workers,
        )
        if args.refine == "vdsr":
            recon = apply_vdsr(model, recon)
        elif args.refine == "vdsr-qs":
            recon = apply_vdsr_qs(model, recon, mask.bits)
    save_image(recon, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_train(args) -> int:
    expected_recon = "bicubic" if args.sensor == "lowres" else "fsr"
    if args.recon is not None and args.recon != expected_recon:
        raise ChainConfigError(
            f"the {args.sensor} sensor pairs with {expected_recon} reconstruction"
        )
    if args.sensor == "lowres" and args.refine == "vdsr-qs":
        raise ChainConfigError("vdsr-qs training needs the quarter + fsr path")
    images = pipeline.ingest_dataset(args.data)
    settings = _settings(args)
    out_dir = _out_dir(args)

    if args.sensor == "lowres":
        if args.shifts_count != 1:
            raise ChainConfigError("--shifts-count applies to the quarter path only")
        triples = [
            (bicubic_upscale_x2(simulate_lowres(ref)), ref, None)
            for _, ref in images
        ]
    else:
        triples = pipeline.build_training_set(
            images,
            _mask_from(args),
            fsr_params=pipeline.fsr_params_from(settings),
            shifts_count=args.shifts_count,
            workers=args.workers,
        )

    epochs = args.epochs if args.epochs is not None else (2 if args.toy else 30)
    tc = TrainConfig(
        epochs=epochs,
        batch_size=args.batch_size,
        depth=6 if args.toy else 20,
        width=16 if args.toy else 64,
        patch_stride=args.patch_stride,
        shift_count=args.shifts_count,
        variant=args.refine,
        seed=args.seed,
    )
    log_path = out_dir / "train_log.csv"
    net, history = train(triples, tc, log_path=log_path)
    model_path = out_dir / "model.bin"
    save_model(net, model_path)
    print(f"trained {tc.variant} for {epochs} epoch(s), final loss {history[-1].loss:.6g}")
    print(f"wrote {model_path}")
    print(f"wrote {log_path}")
    return 0


def _parse_chain_spec(spec: str, args, settings) -> pipeline.ChainConfig:
    """Chain spec `sensor+recon[+refine][@model-path]`."""
    label, _, model_path = spec.partition("@")
    parts = label.split("+")
    if len(parts) not in (2, 3):
        raise ChainConfigError(f"bad chain spec {spec!r}")
    sensor, recon = parts[0], parts[1]
    refine = parts[2] if len(parts) == 3 else "none"
    model = load_model(model_path) if model_path else None
    mask = _mask_from(args) if sensor == "quarter" else None
    return pipeline.ChainConfig(
        sensor=sensor,
        reconstructor=recon,
        refiner=refine,
        mask=mask,
        fsr_params=pipeline.fsr_params_from(settings),
        model=model,
    )


def cmd_eval(args) -> int:
    settings = _settings(args)
    images = pipeline.ingest_dataset(args.data)
    if args.chain:
        configs = [_parse_chain_spec(spec, args, settings) for spec in args.chain]
    else:
        model = load_model(args.model) if args.model else None
        mask = _mask_from(args) if args.sensor == "quarter" else None
        configs = [
            pipeline.ChainConfig(
                sensor=args.sensor,
                reconstructor=args.recon,
                refiner=args.refine,
                mask=mask,
                fsr_params=pipeline.fsr_params_from(settings),
                model=model,
            )
        ]
    border_crop = configmod.get_int(settings, "eval.border-crop", 0)
    report = pipeline.evaluate_dataset(
        images,
        configs,
        border_crop=border_crop,
        dataset_id=Path(args.data).name,
        workers=args.workers,
    )
    text = pipeline.generate_report(report, args.report)
    suffix = "csv" if args.report == "csv" else "md"
    out_path = _out_dir(args) / f"report.{suffix}"
    out_path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(f"wrote {out_path}")
    return 0


def cmd_report(args) -> int:
    try:
        text = Path(args.path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read report {args.path}: {exc}") from exc
    report = pipeline.parse_report_csv(text, dataset_id=Path(args.path).stem)
    rendered = pipeline.generate_report(report, args.report)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(rendered)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quartersr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_mask = sub.add_parser("mask", help="generate or inspect sampling masks")
    mask_sub = p_mask.add_subparsers(dest="mask_command", required=True, parser_class=_Parser)
    p_gen = mask_sub.add_parser("gen", help="generate a random mask")
    p_gen.add_argument("out", help="output mask file")
    p_gen.add_argument("--mask-seed", type=int, default=0)
    p_gen.add_argument("--period", type=int, default=DEFAULT_PERIOD)
    p_gen.add_argument("--width", type=int, help="tile to this width")
    p_gen.add_argument("--height", type=int, help="tile to this height")
    p_gen.set_defaults(func=cmd_mask_gen)
    p_show = mask_sub.add_parser("show", help="print a mask and its statistics")
    p_show.add_argument("path")
    p_show.add_argument("--no-cell-check", action="store_true")
    p_show.set_defaults(func=cmd_mask_show)

    p_sample = sub.add_parser("sample", help="simulate a sensor on a reference image")
    p_sample.add_argument("image")
    p_sample.add_argument("--sensor", choices=["lowres", "quarter"], required=True)
    _add_mask_source(p_sample)
    p_sample.add_argument("--out-dir")
    p_sample.set_defaults(func=cmd_sample)

    p_recon = sub.add_parser("reconstruct", help="reconstruct a sampled image")
    p_recon.add_argument("image", help="sensor output image")
    p_recon.add_argument("--recon", choices=["bicubic", "fsr"], required=True)
    p_recon.add_argument("--refine", choices=["none", "vdsr", "vdsr-qs"], default="none")
    p_recon.add_argument("--mask-file", help="mask for the fsr path")
    p_recon.add_argument("--model", help="model file for refinement")
    p_recon.add_argument("--out", help="output image path")
    p_recon.add_argument("--out-dir")
    p_recon.add_argument("--workers", type=int, default=1)
    _add_fsr_flags(p_recon)
    p_recon.set_defaults(func=cmd_reconstruct)

    p_train = sub.add_parser("train", help="train a refinement network")
    p_train.add_argument("--data", required=True, help="training image directory")
    p_train.add_argument("--sensor", choices=["lowres", "quarter"], default="quarter")
    p_train.add_argument("--recon", choices=["bicubic", "fsr"], default=None)
    p_train.add_argument("--refine", choices=["vdsr", "vdsr-qs"], default="vdsr")
    _add_mask_source(p_train)
    p_train.add_argument("--shifts-count", type=int, choices=[1, 2, 4, 8], default=1)
    p_train.add_argument("--toy", action="store_true", help="small network, 2 epochs")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--patch-stride", type=int)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out-dir")
    p_train.add_argument("--workers", type=int, default=1)
    _add_fsr_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate chains over a dataset")
    p_eval.add_argument("--data", required=True, help="evaluation image directory")
    p_eval.add_argument(
        "--chain",
        action="append",
        help="chain spec sensor+recon[+refine][@model]; repeatable",
    )
    p_eval.add_argument("--sensor", choices=["lowres", "quarter"], default="quarter")
    p_eval.add_argument("--recon", choices=["bicubic", "fsr"], default="fsr")
    p_eval.add_argument("--refine", choices=["none", "vdsr", "vdsr-qs"], default="none")
    p_eval.add_argument("--model", help="model file for refinement")
    _add_mask_source(p_eval)
    p_eval.add_argument("--report", choices=["csv", "markdown"], default="csv")
    p_eval.add_argument("--border-crop", type=int, help="crop frame before metrics")
    p_eval.add_argument("--out-dir")
    p_eval.add_argument("--workers", type=int, default=1)
    _add_fsr_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="re-render an evaluation report")
    p_report.add_argument("path", help="report CSV produced by eval")
    p_report.add_argument("--report", choices=["csv", "markdown"], default="markdown")
    p_report.add_argument("--out", help="output path (default: stdout)")
    p_report.set_defaults(func=cmd_report)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        status = args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except QuarterSRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
