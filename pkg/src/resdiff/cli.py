"""Command-line surface for the toolkit.

Subcommands: ``make-corpus``, ``train``, ``encode``, ``decode``,
``enhance``, ``fit-thresholds`` and ``analyze``. Every command is
deterministic given its config and seed; re-running with identical inputs
overwrites outputs with identical bytes.

Exit codes: 0 success, 2 usage/configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import corpus, ppm
from .analysis import curvature, psnr, traversal_report
from .codec import (
    RateControl,
    decode,
    encode_with_stats,
    sample_lambda,
    scale_to_rate,
)
from .codec.bitstream import unpack_header
from .config import ToolkitConfig, load_config
from .errors import CodecError, ConfigError, DecodeError, TrainingError
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.train import train as run_train
from .residuals import (
    ResidualHistogram,
    ThresholdTable,
    collect_residual_samples,
    compute_residual,
    fit_threshold_table,
)
from .sampler import SamplerConfig, enhance
from .schedule import respace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


def _load_toolkit_config(path: str | None) -> ToolkitConfig:
    if path is None:
        return ToolkitConfig()
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    return load_config(path)


def _rate_control(cfg: ToolkitConfig, rate_norm: float) -> RateControl:
    lam = sample_lambda(rate_norm, cfg.codec_lambda_min, cfg.codec_lambda_max)
    lam = min(max(lam, cfg.codec_lambda_min), cfg.codec_lambda_max)
    return RateControl(
        lam=lam,
        lam_min=cfg.codec_lambda_min,
        lam_max=cfg.codec_lambda_max,
        alpha_s=cfg.codec_alpha_s,
        beta_s=cfg.codec_beta_s,
    )


def cmd_make_corpus(args) -> int:
    paths = corpus.write_corpus(args.out, count=args.count, size=args.size, seed=args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_toolkit_config(args.config)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise UsageError(f"corpus directory not found: {corpus_dir}")
    images = corpus.load_corpus(corpus_dir)
    schedule = cfg.schedule_spec().build()
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    train_cfg = cfg.train_config(**overrides)
    model_overrides = {}
    if args.width is not None:
        model_overrides["width"] = args.width
    model_cfg = cfg.model_config(**model_overrides)

    result = run_train(
        images, schedule, train_cfg, model_cfg, log_every=args.log_every
    )
    save_checkpoint(args.out, result.checkpoint)
    loss_path = Path(args.out).with_suffix(".loss.csv")
    with open(loss_path, "w", encoding="ascii") as f:
        f.write("step,loss\n")
        for i, value in enumerate(result.losses, start=1):
            f.write(f"{i},{value:.8f}\n")
    print(f"checkpoint written to {args.out}")
    print(f"loss trace written to {loss_path}")
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _load_toolkit_config(args.config)
    image = ppm.read_ppm(args.input)
    rc = _rate_control(cfg, args.rate)
    data, stats = encode_with_stats(image, rc)
    Path(args.out).write_bytes(data)
    h, w = image.shape[-2:]
    print(f"bpp {stats.payload_bits / (h * w):.4f}")
    print(f"bytes {len(data)} (payload {stats.payload_bytes})")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.input).read_bytes()
    image, s, lam = decode(data)
    ppm.write_ppm(args.out, image)
    print(f"decoded {image.shape[2]}x{image.shape[1]} scale {s} lambda {lam:.6f}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    data = Path(args.input).read_bytes()
    header = unpack_header(data)
    table = None
    if args.thresholds is not None:
        if header.scale_code == 0:
            raise UsageError(
                "rate-dependent thresholding requested but the bitstream "
                "header carries no rate parameter"
            )
        table = ThresholdTable.load(args.thresholds)
    x_tilde, _, lam = decode(data)

    ckpt = load_checkpoint(args.checkpoint)
    schedule = ckpt.schedule_spec.build()
    if args.plan_steps > schedule.T:
        raise UsageError(
            f"plan of {args.plan_steps} steps exceeds the checkpoint "
            f"schedule (T={schedule.T})"
        )
    plan = respace(schedule.T, args.plan_steps)
    if args.steps > len(plan):
        raise UsageError(f"--steps must be at most the plan length {len(plan)}")

    clip_mode = "table" if table is not None else args.clip
    common = dict(
        eta=args.eta,
        clip_mode=clip_mode,
        table=table,
        record_trajectory=args.dump_trajectory is not None,
        seed=args.seed,
    )
    if args.start == "late":
        sampler_cfg = SamplerConfig.late_start(plan, args.steps, **common)
    else:
        sampler_cfg = SamplerConfig.steps_from_top(plan, args.steps, **common)

    result = enhance(ckpt, schedule, x_tilde, sampler_cfg, lam=lam)
    ppm.write_ppm(args.out, result.x_hat)
    print(f"enhanced with {result.executed_steps} steps -> {args.out}")

    original = None
    if args.original is not None:
        original = ppm.read_ppm(args.original)
        print(f"psnr {psnr(original, result.x_hat):.4f} dB")

    if args.dump_trajectory is not None:
        traj = result.trajectory
        arrays = {
            "timesteps": np.array(traj.timesteps, dtype=np.int64),
            "latents": np.stack(traj.latents),
            "predictions": np.stack(traj.predictions),
        }
        np.savez(args.dump_trajectory + ".npz", **arrays)
        h, w = x_tilde.shape[-2:]
        with open(args.dump_trajectory + ".csv", "w", encoding="ascii") as f:
            f.write("step,t,mean_abs_pred,psnr_so_far\n")
            for k, t in enumerate(traj.timesteps):
                pred = traj.predictions[k][:, :h, :w]
                x_step = np.clip(x_tilde + pred, -1.0, 1.0)
                quality = psnr(original, x_step) if original is not None else float("nan")
                f.write(
                    f"{k + 1},{t},{np.abs(traj.predictions[k]).mean():.8f},"
                    f"{quality:.4f}\n"
                )
        print(f"trajectory dumped to {args.dump_trajectory}.npz/.csv")
    return EXIT_OK


def cmd_fit_thresholds(args) -> int:
    cfg = _load_toolkit_config(args.config)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise UsageError(f"corpus directory not found: {corpus_dir}")
    images = corpus.load_corpus(corpus_dir)
    grid = np.geomspace(cfg.codec_lambda_min, cfg.codec_lambda_max, args.grid)
    samples = collect_residual_samples(images, grid)
    table = fit_threshold_table(samples, coverage=args.coverage, min_samples=args.min_samples)
    table.save(args.out)
    flag = " (isotonic correction applied)" if table.corrected else ""
    print(f"threshold table with {len(table.lambdas)} rates -> {args.out}{flag}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.type == "residuals":
        return _analyze_residuals(args)
    if args.type == "curvature":
        return _analyze_curvature(args)
    return _analyze_traversal(args)


def _analyze_residuals(args) -> int:
    cfg = _load_toolkit_config(args.config)
    images = corpus.load_corpus(args.corpus)
    rc = _rate_control(cfg, args.rate)
    from .codec import quantize_scale, reconstruct

    _, s_q = quantize_scale(rc.scale)
    residuals = np.concatenate(
        [compute_residual(img, reconstruct(img, s_q)) for img in images], axis=1
    )
    hist = ResidualHistogram.from_residuals(residuals)
    with open(args.out, "w", encoding="ascii") as f:
        f.write(f"# lambda {rc.lam!r}\n")
        kurt = ",".join(f"{k:.4f}" for k in hist.excess_kurtosis)
        f.write(f"# excess_kurtosis {kurt}\n")
        f.write("bin_left,bin_right,count_r,count_g,count_b\n")
        for i in range(hist.counts.shape[1]):
            f.write(
                f"{hist.bin_edges[i]:.4f},{hist.bin_edges[i + 1]:.4f},"
                f"{hist.counts[0, i]},{hist.counts[1, i]},{hist.counts[2, i]}\n"
            )
    print(f"residual histogram -> {args.out}")
    return EXIT_OK


def _analyze_curvature(args) -> int:
    cfg = _load_toolkit_config(args.config)
    if args.checkpoint is None or args.input is None:
        raise UsageError("curvature analysis needs --checkpoint and --input")
    ckpt = load_checkpoint(args.checkpoint)
    schedule = ckpt.schedule_spec.build()
    image = ppm.read_ppm(args.input)
    rc = _rate_control(cfg, args.rate)
    from .codec import quantize_scale, reconstruct

    _, s_q = quantize_scale(rc.scale)
    x_tilde = reconstruct(image, s_q)
    plan = respace(schedule.T, args.steps)
    sampler_cfg = SamplerConfig(plan=plan, record_trajectory=True, seed=args.seed)
    result = enhance(ckpt, schedule, x_tilde, sampler_cfg, lam=rc.lam)
    cv = curvature(result.trajectory)
    with open(args.out, "w", encoding="ascii") as f:
        f.write("step,t_from,t_to,angle_rad,zero_norm\n")
        for i, angle in enumerate(cv.angles):
            f.write(
                f"{i + 1},{plan.steps[i]},{plan.steps[i + 1]},{angle:.8f},"
                f"{int(cv.zero_norm_flags[i])}\n"
            )
    print(f"curvature of {len(plan)}-step trajectory -> {args.out}")
    return EXIT_OK


def _analyze_traversal(args) -> int:
    cfg = _load_toolkit_config(args.config)
    if args.checkpoint is None or args.thresholds is None:
        raise UsageError("traversal analysis needs --checkpoint and --thresholds")
    ckpt = load_checkpoint(args.checkpoint)
    schedule = ckpt.schedule_spec.build()
    images = corpus.load_corpus(args.corpus)
    table = ThresholdTable.load(args.thresholds)
    rc = _rate_control(cfg, args.rate)
    plan = respace(schedule.T, args.steps)
    report = traversal_report(
        ckpt, schedule, images, plan, rc.lam, table, seed=args.seed
    )
    Path(args.out).write_text(report.to_csv(), encoding="ascii")
    print(f"traversal report ({len(report.rows)} steps) -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resdiff",
        description="Block-transform codec with diffusion-based residual enhancement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="generate the bundled procedural corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=corpus.DEFAULT_COUNT)
    p.add_argument("--size", type=int, default=corpus.DEFAULT_SIZE)
    p.add_argument("--seed", type=int, default=corpus.DEFAULT_SEED)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("train", help="train the residual denoiser")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a PPM image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=0.5, help="normalized rate in [0, 1]")
    p.add_argument("--config")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to PPM")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("enhance", help="decode and diffusion-enhance a bitstream")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=100, help="sampling steps to execute")
    p.add_argument("--start", choices=("top", "late"), default="top")
    p.add_argument("--plan-steps", type=int, default=100, help="respaced plan length")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--clip", choices=("fixed", "none"), default="fixed")
    p.add_argument("--thresholds", help="threshold table file (enables table clipping)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--original", help="ground-truth PPM for PSNR reporting")
    p.add_argument("--dump-trajectory", help="prefix for .npz/.csv trajectory dumps")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("fit-thresholds", help="fit the rate-dependent threshold table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--coverage", type=float, default=0.95)
    p.add_argument("--min-samples", type=int, default=10_000)
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit_thresholds)

    p = sub.add_parser("analyze", help="diagnostic CSV reports")
    p.add_argument("--type", choices=("traversal", "curvature", "residuals"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--thresholds")
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (CodecError, DecodeError, TrainingError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
