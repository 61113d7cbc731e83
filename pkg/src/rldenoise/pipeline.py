"""End-to-end denoising: project, tune per-view filters, reconstruct, tune
per-voxel filters.

The tuning loops mirror training but act greedily with zero parameter
noise, so a given input, checkpoint pair and configuration always produce
bitwise-identical output.  Every filtering step re-filters the stage
original with the current widths; nothing is filtered twice.

Agents are duck-typed: anything with set_noise_mode(mode) and
expected_qs(states) -> (q_param, q_tune) can drive the loops, which is how
the identity-action stubs in the tests work.

Ablations:
  none        - tune both domains (the full method)
  fixed-sin   - single projection-domain pass at the initial widths
  fixed-vol   - single volume-domain pass at the initial widths
  fixed-both  - both domains fixed at the initial widths
  only-sin    - projection domain only, output is the reconstruction
  only-vol    - volume domain only, straight from the noisy volume
                (no projection, no reconstruction)
"""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .agents import (init_sigma_2d, init_sigma_3d, apply_action_2d,
                     apply_action_3d, normalize_views, normalize_patches_hu,
                     select_actions, INIT_MODES, VOL_PATCH)
from .bilateral import apply_filt_sin, bilateral_3d_values
from .ct import ConeBeamGeometry, fdk_reconstruct, forward_project
from .ct.volume import Sinogram, Volume
from .data import DenoiseCase, mask_outside_fov
from .metrics import (EvalWindow, SOFT_TISSUE_WINDOW, AIR_THRESHOLD_HU,
                      psnr, ssim_volume)

log = logging.getLogger(__name__)

ABLATION_MODES = ("none", "fixed-sin", "fixed-vol", "fixed-both",
                  "only-sin", "only-vol")


@dataclass
class PipelineConfig:
    """Inference-time knobs.

    vol_action_stride tiles the volume into stride^3 cells, one action per
    cell; stride 1 is a per-voxel decision (slow on one core), the desk
    profile uses stride 4.  init_mode "random" draws integer widths with
    the config seed, the other modes are deterministic constants.
    """

    n_views: int = 180
    tuning_steps: int = 10
    init_mode: str = "middle"
    vol_action_stride: int = 1
    ablation: str = "none"
    fdk_window: str = "cosine"
    mask_fov: bool = True
    seed: int = 0
    select_chunk: int = 8192

    def __post_init__(self):
        if self.ablation not in ABLATION_MODES:
            raise ValueError(f"unknown ablation {self.ablation!r}, expected one "
                             f"of {ABLATION_MODES}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.vol_action_stride < 1:
            raise ValueError("vol_action_stride must be >= 1")
        if self.tuning_steps < 1:
            raise ValueError("tuning_steps must be >= 1")


def desk_pipeline_config(**overrides) -> PipelineConfig:
    """Inference knobs for single-machine runs: coarser action grid."""
    cfg = PipelineConfig(vol_action_stride=4)
    return replace(cfg, **overrides)


@dataclass
class RunReport:
    """Everything recorded about one denoising run.

    steps holds one dict per tuning step (domain, step index, width
    statistics, reward when a scorer was supplied; projection-domain steps
    skip the reward, since scoring them would need a reconstruction per
    step).  timings are wall-clock seconds and are excluded from the
    deterministic CSV export.
    """

    case: str
    ablation: str
    init_mode: str
    tuning_steps: int
    n_views: int
    vol_action_stride: int
    psnr_before: float = float("nan")
    psnr_after: float = float("nan")
    ssim_before: float = float("nan")
    ssim_after: float = float("nan")
    steps: list = field(default_factory=list)
    filter_calls: dict = field(default_factory=lambda: {"sin": 0, "vol": 0})
    timings: dict = field(default_factory=dict)


class PipelineInstrument:
    """Optional probe recording a hash of every filter input, proving the
    stage original is what gets re-filtered each step."""

    def __init__(self):
        self.input_hashes: dict[str, list[str]] = {"sin": [], "vol": []}

    def record(self, domain: str, values: np.ndarray) -> None:
        digest = hashlib.sha1(np.ascontiguousarray(values).tobytes()).hexdigest()
        self.input_hashes[domain].append(digest)


def _sigma_row(domain: str, step: int, sigma_i, sigma_s, reward=None) -> dict:
    return {
        "domain": domain,
        "step": step,
        "sigma_i_mean": float(np.mean(sigma_i)),
        "sigma_i_min": float(np.min(sigma_i)),
        "sigma_i_max": float(np.max(sigma_i)),
        "sigma_s_mean": float(np.mean(sigma_s)),
        "sigma_s_min": float(np.min(sigma_s)),
        "sigma_s_max": float(np.max(sigma_s)),
        "reward": float("nan") if reward is None else float(reward),
    }


def _cell_starts(n: int, stride: int) -> np.ndarray:
    return np.arange(0, n, stride)


def _vol_cells(shape, stride):
    """(centers, boxes) tiling the volume in stride-sized cells."""
    starts = [_cell_starts(n, stride) for n in shape]
    centers = []
    boxes = []
    for sx in starts[0]:
        for sy in starts[1]:
            for sz in starts[2]:
                box = tuple(slice(s, min(s + stride, n))
                            for s, n in zip((sx, sy, sz), shape))
                centers.append([min(s + stride // 2, n - 1)
                                for s, n in zip((sx, sy, sz), shape)])
                boxes.append(box)
    return np.asarray(centers), boxes


def _padded_patches(padded: np.ndarray, centers: np.ndarray) -> np.ndarray:
    k = VOL_PATCH[0]
    out = np.empty((centers.shape[0],) + VOL_PATCH, dtype=padded.dtype)
    for i, (cx, cy, cz) in enumerate(centers):
        out[i] = padded[cx:cx + k, cy:cy + k, cz:cz + k]
    return out


def run_sin_stage(proj_orig: np.ndarray, sin_net, cfg: PipelineConfig,
                  rng: np.random.Generator, report: RunReport,
                  instrument: PipelineInstrument | None):
    """Tune and apply per-view filters; returns the filtered projections."""
    n_views = proj_orig.shape[0]
    sigma2d = init_sigma_2d(n_views, cfg.init_mode, rng)
    fixed = cfg.ablation in ("fixed-sin", "fixed-both")
    if fixed:
        if instrument:
            instrument.record("sin", proj_orig)
        report.filter_calls["sin"] += 1
        report.steps.append(_sigma_row("sin", 0, sigma2d.sigma_i, sigma2d.sigma_s))
        return apply_filt_sin(proj_orig, sigma2d)
    proj_prev = proj_orig
    proj_filt = proj_orig
    for step in range(1, cfg.tuning_steps + 1):
        states = normalize_views(proj_prev).astype(np.float32)
        p_idx, t_idx = select_actions(sin_net, states, "zero")
        for v in range(n_views):
            apply_action_2d(sigma2d, v, int(p_idx[v]), int(t_idx[v]))
        if instrument:
            instrument.record("sin", proj_orig)
        proj_filt = apply_filt_sin(proj_orig, sigma2d)
        report.filter_calls["sin"] += 1
        report.steps.append(_sigma_row("sin", step, sigma2d.sigma_i, sigma2d.sigma_s))
        proj_prev = proj_filt
    return proj_filt


def run_vol_stage(vol_orig: np.ndarray, vol_net, cfg: PipelineConfig,
                  rng: np.random.Generator, report: RunReport,
                  instrument: PipelineInstrument | None, scorer=None):
    """Tune and apply per-voxel filters; returns the filtered values."""
    sigma3d = init_sigma_3d(vol_orig.shape, cfg.init_mode, rng)
    fixed = cfg.ablation in ("fixed-vol", "fixed-both")
    if fixed:
        if instrument:
            instrument.record("vol", vol_orig)
        report.filter_calls["vol"] += 1
        report.steps.append(_sigma_row("vol", 0, sigma3d.sigma_i, sigma3d.sigma_s))
        return bilateral_3d_values(vol_orig, sigma3d)
    centers, boxes = _vol_cells(vol_orig.shape, cfg.vol_action_stride)
    pad = VOL_PATCH[0] // 2
    vol_prev = vol_orig
    vol_filt = vol_orig
    for step in range(1, cfg.tuning_steps + 1):
        padded = np.pad(vol_prev, pad, mode="reflect")
        for lo in range(0, centers.shape[0], cfg.select_chunk):
            sl = slice(lo, min(lo + cfg.select_chunk, centers.shape[0]))
            patches = normalize_patches_hu(
                _padded_patches(padded, centers[sl])).astype(np.float32)
            p_idx, t_idx = select_actions(vol_net, patches, "zero")
            for box, p, t in zip(boxes[sl.start:sl.stop], p_idx, t_idx):
                apply_action_3d(sigma3d, box, int(p), int(t))
        if instrument:
            instrument.record("vol", vol_orig)
        vol_filt = bilateral_3d_values(vol_orig, sigma3d)
        report.filter_calls["vol"] += 1
        reward = None
        if scorer is not None:
            after = scorer.score_volume(vol_filt)
            before = scorer.score_volume(vol_prev)
            reward = after - before
        report.steps.append(_sigma_row("vol", step, sigma3d.sigma_i,
                                       sigma3d.sigma_s, reward))
        vol_prev = vol_filt
    return vol_filt


def denoise_volume(vol_noisy: Volume, sin_net, vol_net, cfg: PipelineConfig,
                   geom: ConeBeamGeometry, *, reference: Volume | None = None,
                   scorer=None, instrument: PipelineInstrument | None = None,
                   case_name: str = "volume"):
    """Denoise one volume.  Returns (denoised Volume, RunReport).

    reference (e.g. a standard-dose reconstruction) fills the before/after
    PSNR/SSIM fields; scorer adds a reward trajectory for the volume stage.
    """
    if vol_noisy.units != "hu":
        raise ValueError("pipeline expects an HU volume")
    if reference is not None and reference.extents != vol_noisy.extents:
        raise ValueError(f"reference extents {reference.extents} do not match "
                         f"input {vol_noisy.extents}")
    _check_agent(sin_net, "sin")
    _check_agent(vol_net, "vol")
    report = RunReport(case_name, cfg.ablation, cfg.init_mode, cfg.tuning_steps,
                       cfg.n_views, cfg.vol_action_stride)
    rng = np.random.default_rng(cfg.seed)
    t_start = time.perf_counter()
    work = mask_outside_fov(vol_noisy, geom) if cfg.mask_fov else vol_noisy
    if cfg.ablation == "only-vol":
        vol_stage_in = work.values
    else:
        t0 = time.perf_counter()
        sino = forward_project(work, geom, cfg.n_views)
        report.timings["project_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        proj_filt = run_sin_stage(sino.values, sin_net, cfg, rng, report,
                                  instrument)
        report.timings["sin_stage_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        recon = fdk_reconstruct(Sinogram(proj_filt, sino.angles), geom,
                                vol_noisy.extents, vol_noisy.spacing,
                                window=cfg.fdk_window)
        report.timings["fdk_s"] = time.perf_counter() - t0
        vol_stage_in = recon.values
    if cfg.ablation == "only-sin":
        out_values = vol_stage_in
    else:
        t0 = time.perf_counter()
        out_values = run_vol_stage(vol_stage_in, vol_net, cfg, rng, report,
                                   instrument, scorer)
        report.timings["vol_stage_s"] = time.perf_counter() - t0
    report.timings["total_s"] = time.perf_counter() - t_start
    denoised = Volume(out_values, vol_noisy.spacing, "hu")
    if reference is not None:
        report.psnr_before = psnr(vol_noisy.values, reference.values)
        report.psnr_after = psnr(denoised.values, reference.values)
        report.ssim_before = ssim_volume(vol_noisy.values, reference.values)
        report.ssim_after = ssim_volume(denoised.values, reference.values)
    return denoised, report


def _check_agent(net, kind: str) -> None:
    have = getattr(net, "kind", kind)
    if have != kind:
        raise ValueError(f"expected a {kind!r} agent, got {have!r}; "
                         "checkpoints are probably swapped")
    if not hasattr(net, "expected_qs") or not hasattr(net, "set_noise_mode"):
        raise TypeError(f"{kind} agent lacks the action-selection protocol")


def convergence_experiment(vol_noisy: Volume, sin_net, vol_net,
                           cfg: PipelineConfig, geom: ConeBeamGeometry,
                           reference: Volume, steps: int = 15,
                           init_modes=INIT_MODES):
    """Track per-step PSNR/SSIM for each width initialization.

    Runs `steps` tuning steps in each domain (reconstructing after every
    projection-domain step to measure it) and returns (rows, meta); meta
    marks the default initialization.  The volume stage starts from the
    final projection-stage reconstruction.
    """
    rows = []
    for mode in init_modes:
        mode_cfg = replace(cfg, init_mode=mode, tuning_steps=steps, ablation="none")
        rng = np.random.default_rng(mode_cfg.seed)
        work = mask_outside_fov(vol_noisy, geom) if cfg.mask_fov else vol_noisy
        sino = forward_project(work, geom, cfg.n_views)
        proj_orig = sino.values
        n_views = proj_orig.shape[0]
        sigma2d = init_sigma_2d(n_views, mode, rng)
        proj_prev = proj_orig
        proj_filt = proj_orig
        for step in range(1, steps + 1):
            states = normalize_views(proj_prev).astype(np.float32)
            p_idx, t_idx = select_actions(sin_net, states, "zero")
            for v in range(n_views):
                apply_action_2d(sigma2d, v, int(p_idx[v]), int(t_idx[v]))
            proj_filt = apply_filt_sin(proj_orig, sigma2d)
            recon = fdk_reconstruct(Sinogram(proj_filt, sino.angles), geom,
                                    vol_noisy.extents, vol_noisy.spacing,
                                    window=cfg.fdk_window)
            rows.append(_metric_row(mode, "sin", step, recon.values,
                                    reference.values, sigma2d.sigma_i,
                                    sigma2d.sigma_s))
            proj_prev = proj_filt
        recon = fdk_reconstruct(Sinogram(proj_filt, sino.angles), geom,
                                vol_noisy.extents, vol_noisy.spacing,
                                window=cfg.fdk_window)
        vol_orig = recon.values
        sigma3d = init_sigma_3d(vol_orig.shape, mode, rng)
        centers, boxes = _vol_cells(vol_orig.shape, cfg.vol_action_stride)
        pad = VOL_PATCH[0] // 2
        vol_prev = vol_orig
        for step in range(1, steps + 1):
            padded = np.pad(vol_prev, pad, mode="reflect")
            for lo in range(0, centers.shape[0], cfg.select_chunk):
                sl = slice(lo, min(lo + cfg.select_chunk, centers.shape[0]))
                patches = normalize_patches_hu(
                    _padded_patches(padded, centers[sl])).astype(np.float32)
                p_idx, t_idx = select_actions(vol_net, patches, "zero")
                for box, p, t in zip(boxes[sl.start:sl.stop], p_idx, t_idx):
                    apply_action_3d(sigma3d, box, int(p), int(t))
            vol_filt = bilateral_3d_values(vol_orig, sigma3d)
            rows.append(_metric_row(mode, "vol", step, vol_filt,
                                    reference.values, sigma3d.sigma_i,
                                    sigma3d.sigma_s))
            vol_prev = vol_filt
    meta = {"default_init": "middle", "steps": steps,
            "init_modes": list(init_modes)}
    return rows, meta


def _metric_row(init_mode, domain, step, values, ref_values, sigma_i, sigma_s):
    row = _sigma_row(domain, step, sigma_i, sigma_s)
    row["init"] = init_mode
    row["psnr"] = psnr(values, ref_values)
    row["ssim"] = ssim_volume(values, ref_values)
    return row


def body_mask(reference: Volume) -> np.ndarray:
    """Non-air voxels of the reference volume."""
    return reference.values >= AIR_THRESHOLD_HU


def _bbox(mask: np.ndarray) -> tuple:
    idx = np.where(mask)
    if idx[0].size == 0:
        raise ValueError("reference volume is entirely air")
    return tuple(slice(int(a.min()), int(a.max()) + 1) for a in idx)


def evaluate_case(denoised: Volume, case: DenoiseCase,
                  window: EvalWindow = SOFT_TISSUE_WINDOW) -> dict:
    """Windowed metrics against the standard-dose reference, restricted to
    the anatomy: metrics use the bounding box of non-air reference voxels,
    and PSNR additionally masks air inside the box."""
    mask = body_mask(case.reference)
    box = _bbox(mask)
    ref = case.reference.values[box]
    noisy = case.noisy.values[box]
    den = denoised.values[box]
    inner = mask[box]
    return {
        "case": case.name,
        "psnr_before": psnr(noisy, ref, window, mask=inner),
        "psnr_after": psnr(den, ref, window, mask=inner),
        "ssim_before": ssim_volume(noisy, ref, window),
        "ssim_after": ssim_volume(den, ref, window),
    }


def summarize(rows: list[dict], keys=("psnr_before", "psnr_after",
                                      "ssim_before", "ssim_after")) -> dict:
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in rows], dtype=np.float64)
        out[f"{k}_mean"] = float(vals.mean())
        out[f"{k}_std"] = float(vals.std())
    return out


def run_ablation(modes, cases: list[DenoiseCase], sin_net, vol_net,
                 cfg: PipelineConfig, geom: ConeBeamGeometry,
                 alt_nets: dict | None = None, scorer=None):
    """Evaluate pipeline variants over a dataset.

    modes are ablation names, plus the special entry "no-reward-net" which
    runs the full pipeline with alternatively trained agents supplied in
    alt_nets; it is skipped with a notice when those are absent.  Returns
    one summary row per mode with the config echoed in.
    """
    out_rows = []
    for mode in modes:
        nets = (sin_net, vol_net)
        pipeline_mode = mode
        if mode == "no-reward-net":
            if not alt_nets or mode not in alt_nets:
                log.warning("skipping %s: no alternative agents supplied", mode)
                continue
            nets = alt_nets[mode]
            pipeline_mode = "none"
        mode_cfg = replace(cfg, ablation=pipeline_mode)
        case_rows = []
        for case in cases:
            den, _rep = denoise_volume(case.noisy, nets[0], nets[1], mode_cfg,
                                       geom, case_name=case.name, scorer=scorer)
            case_rows.append(evaluate_case(den, case))
        row = {"mode": mode, "n_cases": len(case_rows),
               "tuning_steps": mode_cfg.tuning_steps,
               "init_mode": mode_cfg.init_mode,
               "vol_action_stride": mode_cfg.vol_action_stride,
               "n_views": mode_cfg.n_views}
        row.update(summarize(case_rows))
        out_rows.append(row)
    return out_rows


# CSV export; field order is fixed so deterministic runs write identical
# bytes.  Timings never enter these files.

REPORT_FIELDS = ("case", "ablation", "init_mode", "tuning_steps", "n_views",
                 "vol_action_stride", "psnr_before", "psnr_after",
                 "ssim_before", "ssim_after", "sin_filter_calls",
                 "vol_filter_calls")

STEP_FIELDS = ("case", "domain", "step", "sigma_i_mean", "sigma_i_min",
               "sigma_i_max", "sigma_s_mean", "sigma_s_min", "sigma_s_max",
               "reward")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path, reports: list[RunReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in reports:
            w.writerow([_fmt(v) for v in (
                r.case, r.ablation, r.init_mode, r.tuning_steps, r.n_views,
                r.vol_action_stride, r.psnr_before, r.psnr_after,
                r.ssim_before, r.ssim_after, r.filter_calls["sin"],
                r.filter_calls["vol"])])


def write_steps_csv(path, reports: list[RunReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STEP_FIELDS)
        for r in reports:
            for s in r.steps:
                w.writerow([_fmt(v) for v in (
                    r.case, s["domain"], s["step"], s["sigma_i_mean"],
                    s["sigma_i_min"], s["sigma_i_max"], s["sigma_s_mean"],
                    s["sigma_s_min"], s["sigma_s_max"], s["reward"])])


def write_rows_csv(path, rows: list[dict]) -> None:
    """Generic writer for convergence/ablation rows (sorted field union)."""
    if not rows:
        raise ValueError("no rows to write")
    fields = sorted({k for row in rows for k in row})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(k, "")) for k in fields])
