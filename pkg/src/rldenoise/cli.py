"""Command-line front end.

Subcommands cover the full workflow: phantom synthesis, projection, dose
simulation, reconstruction, reward-net and agent training, denoising,
the convergence experiment, evaluation and the ablation table.  Geometry
is "desk" (default), "paper", or a path to a geometry JSON.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io as rio
from .agents import build_agent, load_agent, save_agent, INIT_MODES
from .ct import (ConeBeamGeometry, DoseModel, add_poisson_noise, desk_geometry,
                 fdk_reconstruct, forward_project, make_phantom,
                 paper_geometry, PHANTOM_KINDS)
from .data import build_case, build_dataset, build_reward_pairs
from .pipeline import (ABLATION_MODES, PipelineConfig, convergence_experiment,
                       denoise_volume, desk_pipeline_config, evaluate_case,
                       run_ablation, summarize, write_report_csv,
                       write_rows_csv, write_steps_csv)
from .reward import (RewardScorer, RewardTrainConfig, build_reward_net,
                     load_reward_net, save_reward_net, train_reward_net)
from .training import desk_train_config, run_training

log = logging.getLogger("rldenoise")


def _geometry(spec: str) -> ConeBeamGeometry:
    if spec == "desk":
        return desk_geometry()
    if spec == "paper":
        return paper_geometry()
    with open(spec) as fh:
        return ConeBeamGeometry.from_json(fh.read())


def _echo(args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("config: %s", json.dumps(cfg, default=str))


def _size3(text: str) -> tuple:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("size must be N or NX,NY,NZ")
    return tuple(parts)


def _spacing3(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("spacing must be S or SX,SY,SZ")
    return tuple(parts)


def cmd_phantom(args) -> int:
    vol = make_phantom(args.kind, args.size, seed=args.seed,
                       spacing=args.spacing, n_objects=args.objects)
    rio.save_volume(args.out, vol)
    log.info("wrote %s: %s voxels, HU range [%.1f, %.1f]", args.out,
             vol.extents, vol.values.min(), vol.values.max())
    return 0


def cmd_project(args) -> int:
    geom = _geometry(args.geometry)
    vol = rio.load_volume(args.vol)
    sino = forward_project(vol, geom, args.views)
    rio.save_sinogram(args.out, sino)
    log.info("wrote %s: %d views, line integrals up to %.3f", args.out,
             sino.n_views, sino.values.max())
    return 0


def cmd_noise(args) -> int:
    sino = rio.load_sinogram(args.sino)
    dose = DoseModel(photons_i0=args.i0, dose_fraction=args.fraction)
    noisy = add_poisson_noise(sino, dose, seed=args.seed)
    rio.save_sinogram(args.out, noisy)
    log.info("wrote %s at %.0f%% dose (I0=%.3g)", args.out,
             100.0 * args.fraction, args.i0)
    return 0


def cmd_fdk(args) -> int:
    geom = _geometry(args.geometry)
    sino = rio.load_sinogram(args.sino)
    vol = fdk_reconstruct(sino, geom, args.size, args.spacing,
                          window=args.window)
    rio.save_volume(args.out, vol)
    log.info("wrote %s: HU range [%.1f, %.1f]", args.out,
             vol.values.min(), vol.values.max())
    return 0


def cmd_train_reward(args) -> int:
    geom = _geometry(args.geometry)
    pairs, holdout = build_reward_pairs(
        geom, phantom_seeds=tuple(args.seeds), holdout_seeds=tuple(args.holdout),
        n_views=args.views, extents=args.size, seed=args.seed)
    cfg = RewardTrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed)
    net, history = train_reward_net(pairs, cfg)
    save_reward_net(args.out, net, meta={"epochs": args.epochs})
    log.info("wrote %s; final loss %.5f", args.out, history[-1]["loss"])
    scorer = RewardScorer(net)
    wins = 0
    for clean, low in holdout:
        if scorer.score_image(clean) > scorer.score_image(low):
            wins += 1
    log.info("holdout ranking: clean preferred on %d/%d pairs", wins,
             len(holdout))
    return 0


def cmd_train_agents(args) -> int:
    geom = _geometry(args.geometry)
    cases = build_dataset(args.cases, geom, seed0=args.seed0,
                          n_views=args.views, extents=args.size)
    cfg = desk_train_config(epochs=args.epochs, seed=args.seed,
                            reward_mode=args.reward_mode)
    scorer = None
    if args.reward_mode == "scorer":
        scorer = RewardScorer(load_reward_net(args.reward_net))
    sin_net, vol_net, logrows = run_training(cases, cfg, geom,
                                             n_views=args.views, scorer=scorer)
    save_agent(f"{args.out_dir}/sin_agent.ckpt", sin_net)
    save_agent(f"{args.out_dir}/vol_agent.ckpt", vol_net)
    write_rows_csv(f"{args.out_dir}/training_log.csv", logrows["rows"])
    log.info("wrote agents and training log to %s", args.out_dir)
    return 0


def _pipeline_cfg(args) -> PipelineConfig:
    cfg = desk_pipeline_config() if args.profile == "desk" else PipelineConfig()
    kw = {}
    for name in ("tuning_steps", "init_mode", "vol_action_stride", "ablation",
                 "n_views", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    from dataclasses import replace
    return replace(cfg, **kw)


def cmd_denoise(args) -> int:
    geom = _geometry(args.geometry)
    sin_net = load_agent(args.sin_net, "sin")
    vol_net = load_agent(args.vol_net, "vol")
    cfg = _pipeline_cfg(args)
    vol = rio.load_volume(args.vol)
    reference = rio.load_volume(args.reference) if args.reference else None
    scorer = RewardScorer(load_reward_net(args.reward_net)) \
        if args.reward_net else None
    den, report = denoise_volume(vol, sin_net, vol_net, cfg, geom,
                                 reference=reference, scorer=scorer,
                                 case_name=args.vol)
    rio.save_volume(args.out, den)
    if args.report:
        write_report_csv(args.report, [report])
        write_steps_csv(args.report.replace(".csv", "_steps.csv"), [report])
    if reference is not None:
        log.info("PSNR %.2f -> %.2f, SSIM %.4f -> %.4f", report.psnr_before,
                 report.psnr_after, report.ssim_before, report.ssim_after)
    log.info("wrote %s (total %.1fs)", args.out, report.timings["total_s"])
    return 0


def cmd_converge(args) -> int:
    geom = _geometry(args.geometry)
    sin_net = load_agent(args.sin_net, "sin")
    vol_net = load_agent(args.vol_net, "vol")
    cfg = _pipeline_cfg(args)
    vol = rio.load_volume(args.vol)
    reference = rio.load_volume(args.reference)
    rows, meta = convergence_experiment(vol, sin_net, vol_net, cfg, geom,
                                        reference, steps=args.steps)
    for row in rows:
        row["is_default_init"] = int(row["init"] == meta["default_init"])
    write_rows_csv(args.out, rows)
    log.info("wrote %s (%d rows, default init %r)", args.out, len(rows),
             meta["default_init"])
    return 0


def cmd_evaluate(args) -> int:
    from .data import DenoiseCase
    case = DenoiseCase(args.noisy, rio.load_volume(args.noisy),
                       rio.load_volume(args.reference), None)
    row = evaluate_case(rio.load_volume(args.denoised), case)
    for k, v in row.items():
        log.info("%s: %s", k, v)
    if args.csv:
        write_rows_csv(args.csv, [row])
    return 0


def cmd_ablate(args) -> int:
    geom = _geometry(args.geometry)
    sin_net = load_agent(args.sin_net, "sin")
    vol_net = load_agent(args.vol_net, "vol")
    cfg = _pipeline_cfg(args)
    cases = build_dataset(args.cases, geom, seed0=args.seed0,
                          n_views=args.views, extents=args.size)
    rows = run_ablation(args.modes, cases, sin_net, vol_net, cfg, geom)
    write_rows_csv(args.out, rows)
    for row in rows:
        log.info("%-12s PSNR %.2f SSIM %.4f", row["mode"],
                 row["psnr_after_mean"], row["ssim_after_mean"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rldenoise",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--geometry", default="desk",
                       help="desk, paper, or a geometry JSON path")

    p = sub.add_parser("phantom", help="synthesize a phantom volume")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="ellipsoids")
    p.add_argument("--size", type=_size3, default=(64, 64, 64))
    p.add_argument("--spacing", type=_spacing3, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objects", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="cone-beam forward projection")
    common(p)
    p.add_argument("--vol", required=True)
    p.add_argument("--views", type=int, default=180)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("noise", help="apply Poisson dose statistics")
    p.add_argument("--sino", required=True)
    p.add_argument("--i0", type=float, default=1e5)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("fdk", help="filtered backprojection reconstruction")
    common(p)
    p.add_argument("--sino", required=True)
    p.add_argument("--size", type=_size3, default=(64, 64, 64))
    p.add_argument("--spacing", type=_spacing3, default=(1.2, 1.2, 0.35))
    p.add_argument("--window", choices=("none", "cosine"), default="cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fdk)

    p = sub.add_parser("train-reward", help="train the quality scorer")
    common(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[101, 102, 103, 104, 105])
    p.add_argument("--holdout", type=int, nargs="+", default=[201, 202])
    p.add_argument("--views", type=int, default=180)
    p.add_argument("--size", type=_size3, default=(64, 64, 64))
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_reward)

    p = sub.add_parser("train-agents", help="train both filter-tuning agents")
    common(p)
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--seed0", type=int, default=1000)
    p.add_argument("--views", type=int, default=180)
    p.add_argument("--size", type=_size3, default=(64, 64, 64))
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reward-mode", choices=("scorer", "objective"),
                   default="scorer")
    p.add_argument("--reward-net", default=None,
                   help="scorer checkpoint (required for --reward-mode scorer)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train_agents)

    def pipeline_args(p):
        common(p)
        p.add_argument("--sin-net", required=True)
        p.add_argument("--vol-net", required=True)
        p.add_argument("--profile", choices=("desk", "full"), default="desk")
        p.add_argument("--tuning-steps", type=int, default=None)
        p.add_argument("--init-mode", choices=INIT_MODES, default=None)
        p.add_argument("--vol-action-stride", type=int, default=None)
        p.add_argument("--n-views", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("denoise", help="denoise one volume")
    pipeline_args(p)
    p.add_argument("--ablation", choices=ABLATION_MODES, default=None)
    p.add_argument("--vol", required=True)
    p.add_argument("--reference", default=None)
    p.add_argument("--reward-net", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("converge", help="width-initialization convergence study")
    pipeline_args(p)
    p.add_argument("--vol", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--steps", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("evaluate", help="windowed metrics for one result")
    p.add_argument("--noisy", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare pipeline variants")
    pipeline_args(p)
    p.add_argument("--modes", nargs="+", default=list(ABLATION_MODES))
    p.add_argument("--cases", type=int, default=5)
    p.add_argument("--seed0", type=int, default=5000)
    p.add_argument("--views", type=int, default=180)
    p.add_argument("--size", type=_size3, default=(64, 64, 64))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    _echo(args)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
