"""End-to-end acceptance criteria for the denoising framework.

Each test checks one criterion at a pinned tolerance and registers a
[PASS]/[FAIL] line that conftest echoes after the run.  The two expensive
artifacts, the trained quality network and the trained tuning agents, are
cached under tests/_cache together with wall-clock sidecars, so a rerun
asserts the recorded training budget honestly instead of re-measuring a
cache hit.  Delete tests/_cache to retrain everything from scratch.
"""

import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import rldenoise.io as rio
from conftest import ACCEPTANCE_VERDICTS
from helpers import (TableAgent, gradcheck, naive_bilateral_2d,
                     naive_bilateral_3d, scalar_double_q_target,
                     scalar_two_branch_loss)
from rldenoise.agents import (DuelingHead, N_ATOMS, SIN_SUPPORT,
                              SIN_SUPPORT_RANGE, TUNE_FACTORS, VOL_SUPPORT,
                              VOL_SUPPORT_RANGE, build_agent, save_agent)
from rldenoise.bilateral import BilateralParams3D, bilateral_2d, bilateral_3d_values
from rldenoise.ct import (MU_WATER_PER_MM, desk_geometry, fdk_reconstruct,
                          forward_project)
from rldenoise.ct.volume import Volume
from rldenoise.data import (build_case, build_dataset, build_reward_pairs,
                            make_phantom)
from rldenoise.metrics import SOFT_TISSUE_WINDOW, gssim, objective_reward, reward_target
from rldenoise.nn import (Conv2D, Conv3D, Dense, ELU, Flatten, GlobalAvgPool,
                          LeakyReLU, NoisyDense, Softmax)
from rldenoise.pipeline import (convergence_experiment, denoise_volume,
                                desk_pipeline_config, evaluate_case)
from rldenoise.replay import Transition
from rldenoise.reward import (RewardScorer, RewardTrainConfig, load_reward_net,
                              q_reward, save_reward_net, train_reward_net)
from rldenoise.training import (compute_double_q_target, desk_train_config,
                                run_training, two_branch_loss)

GEOM = desk_geometry()
EXTENTS = (64, 64, 64)
N_VIEWS = 180
CACHE = Path(__file__).parent / "_cache"

REWARD_PHANTOMS = (101, 102, 103, 104, 105)
REWARD_HOLDOUT = (201, 202)
REWARD_CFG = dict(epochs=60, batch_size=16, lr=1e-3, lr_decay=0.99, seed=7)
TRAIN_SEED0 = 1000
HELDOUT_SEED0 = 2000


def _verdict(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    ACCEPTANCE_VERDICTS.append(line)
    assert ok, line


def _json_load(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _json_dump(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _file_log(path: Path):
    """INFO-level file handler on the package logger, for watching the long
    cache-building fixtures from outside the captured pytest output."""
    import logging
    handler = logging.FileHandler(path)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s: %(message)s"))
    logger = logging.getLogger("rldenoise")
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return logger, handler


@pytest.fixture(scope="session")
def reward_art():
    """(quality net, meta) trained on the multi-dose patch corpus; cached."""
    CACHE.mkdir(exist_ok=True)
    ckpt = CACHE / "reward.ckpt"
    side = CACHE / "reward_meta.json"
    if not (ckpt.exists() and side.exists()):
        logger, handler = _file_log(CACHE / "reward_build.log")
        try:
            t0 = time.perf_counter()
            pairs, _ = build_reward_pairs(
                GEOM, phantom_seeds=REWARD_PHANTOMS, holdout_seeds=(),
                n_views=N_VIEWS, extents=EXTENTS, patch_sizes=(16, 24, 32),
                patches_per=8, seed=0)
            pairs_s = time.perf_counter() - t0
            t0 = time.perf_counter()
            net, hist = train_reward_net(pairs, RewardTrainConfig(**REWARD_CFG))
            train_s = time.perf_counter() - t0
        finally:
            logger.removeHandler(handler)
        save_reward_net(ckpt, net)
        _json_dump(side, {"pairs_s": pairs_s, "train_s": train_s,
                          "final_loss": hist[-1]["loss"], "n_pairs": len(pairs)})
    return load_reward_net(ckpt), _json_load(side)


@pytest.fixture(scope="session")
def agents_art(reward_art):
    """(sin agent, vol agent, meta) from scorer-mode training; cached."""
    CACHE.mkdir(exist_ok=True)
    sin_ckpt = CACHE / "sin_agent.ckpt"
    vol_ckpt = CACHE / "vol_agent.ckpt"
    side = CACHE / "agents_meta.json"
    if not (sin_ckpt.exists() and vol_ckpt.exists() and side.exists()):
        net, _ = reward_art
        logger, handler = _file_log(CACHE / "agents_build.log")
        try:
            t0 = time.perf_counter()
            cases = build_dataset(10, GEOM, seed0=TRAIN_SEED0, n_views=N_VIEWS,
                                  extents=EXTENTS)
            dataset_s = time.perf_counter() - t0
            t0 = time.perf_counter()
            cfg = desk_train_config(epochs=20, seed=11)
            sin_net, vol_net, _out = run_training(cases, cfg, GEOM,
                                                  n_views=N_VIEWS,
                                                  scorer=RewardScorer(net))
            train_s = time.perf_counter() - t0
        finally:
            logger.removeHandler(handler)
        save_agent(sin_ckpt, sin_net)
        save_agent(vol_ckpt, vol_net)
        _json_dump(side, {"dataset_s": dataset_s, "train_s": train_s,
                          "epochs": cfg.epochs, "cases": len(cases)})
    from rldenoise.agents import load_agent
    return (load_agent(sin_ckpt, "sin"), load_agent(vol_ckpt, "vol"),
            _json_load(side))


def test_criterion_01_bilateral_matches_naive_evaluator():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        img = rng.normal(0.0, 50.0, size=(16, 16))
        si = float(rng.uniform(1.0, 40.0))
        ss = float(rng.uniform(0.5, 5.0))
        diff = bilateral_2d(img, si, ss) - naive_bilateral_2d(img, si, ss)
        worst = max(worst, float(np.max(np.abs(diff))))
    for _ in range(20):
        vol = rng.normal(0.0, 50.0, size=(16, 16, 16))
        si = rng.uniform(1.0, 40.0, size=vol.shape)
        ss = rng.uniform(0.5, 5.0, size=vol.shape)
        diff = (bilateral_3d_values(vol, BilateralParams3D(si, ss))
                - naive_bilateral_3d(vol, si, ss))
        worst = max(worst, float(np.max(np.abs(diff))))
    dt = time.perf_counter() - t0
    _verdict("criterion 1 (bilateral equivalence)",
             worst < 1e-10 and dt < 60.0,
             f"max |optimized - naive| {worst:.2e} over 20+20 random inputs "
             f"(tol 1e-10), {dt:.1f}s of 60s")


def test_criterion_02_layer_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20)
    F64 = np.float64

    def frozen(layer):
        layer.sample_noise(rng)
        layer.noise_mode = "frozen"
        return layer

    head = DuelingHead(6, 5, rng=rng, dtype=F64)
    for lyr in head.noisy_layers():
        frozen(lyr)
    cases = [
        ("Dense", Dense(7, 5, rng=rng, dtype=F64), (4, 7)),
        ("Conv2D/same", Conv2D(2, 3, padding="same", rng=rng, dtype=F64), (2, 2, 6, 7)),
        ("Conv2D/valid", Conv2D(2, 3, padding="valid", rng=rng, dtype=F64), (2, 2, 6, 7)),
        ("Conv3D/same", Conv3D(2, 2, padding="same", rng=rng, dtype=F64), (2, 2, 4, 5, 4)),
        ("Conv3D/valid", Conv3D(2, 2, padding="valid", rng=rng, dtype=F64), (2, 2, 5, 5, 5)),
        ("NoisyDense", frozen(NoisyDense(6, 4, rng=rng, dtype=F64)), (3, 6)),
        ("LeakyReLU", LeakyReLU(0.01), (4, 9)),
        ("ELU", ELU(), (4, 9)),
        ("GlobalAvgPool", GlobalAvgPool(), (3, 4, 5, 6)),
        ("Flatten", Flatten(), (3, 2, 4, 5)),
        ("Softmax", Softmax(), (3, 4, 6)),
        ("DuelingHead", head, (2, 6)),
    ]
    worst = 0.0
    worst_name = ""
    for name, layer, shape in cases:
        x = rng.standard_normal(shape)
        if name in ("LeakyReLU", "ELU"):
            x[np.abs(x) < 0.1] += 0.25   # keep probes off the kink
        params = layer.parameters() if hasattr(layer, "parameters") else []
        rel = gradcheck(lambda: layer.forward(x), layer.backward, params,
                        x, rng, n_coords=10, h=1e-4, tol=1e-3)
        if rel > worst:
            worst, worst_name = rel, name
    dt = time.perf_counter() - t0
    _verdict("criterion 2 (layer gradients)",
             worst < 1e-3 and dt < 60.0,
             f"{len(cases)} layers, worst rel err {worst:.2e} ({worst_name}) "
             f"at h=1e-4 (tol 1e-3), {dt:.1f}s of 60s")


def test_criterion_03_projector_chord_and_fdk_round_trip():
    t0 = time.perf_counter()
    # uniform water cylinder: central-ray line integral vs the analytic chord
    n = 96
    spacing = (0.8, 0.8, 0.8)
    radius_mm = 25.2
    half = (n - 1) / 2.0
    ax = (np.arange(n) - half) * spacing[0]
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    vals = np.full((n, n, n), -1000.0)
    vals[(xx ** 2 + yy ** 2) <= radius_mm ** 2] = 0.0
    sino = forward_project(Volume(vals, spacing, "hu"), GEOM, 2)
    mid_r = GEOM.det_rows // 2
    cols = sino.values[0, mid_r, GEOM.det_cols // 2 - 1: GEOM.det_cols // 2 + 1]
    chord = MU_WATER_PER_MM * 2.0 * radius_mm
    chord_err = abs(float(cols.mean()) - chord) / chord

    # project + FDK round trip on an ellipsoid phantom, interior error in mu
    phantom = make_phantom("ellipsoids", EXTENTS, seed=30)
    recon = fdk_reconstruct(forward_project(phantom, GEOM, N_VIEWS), GEOM,
                            phantom.extents, phantom.spacing, window="cosine")
    box = tuple(slice(s // 4, 3 * s // 4) for s in EXTENTS)

    def mu(hu):
        return np.maximum(MU_WATER_PER_MM * (1.0 + hu / 1000.0), 0.0)

    truth = mu(phantom.values[box])
    err = mu(recon.values[box]) - truth
    rel_rmse = float(np.sqrt(np.mean(err ** 2)) / np.sqrt(np.mean(truth ** 2)))
    dt = time.perf_counter() - t0
    _verdict("criterion 3 (projector and FDK)",
             chord_err < 0.02 and rel_rmse < 0.10 and dt < 300.0,
             f"chord err {chord_err:.4f} (tol 0.02), interior rel RMSE "
             f"{rel_rmse:.4f} (tol 0.10, 180 views), {dt:.1f}s of 300s")


def test_criterion_04_q_learning_math():
    rng = np.random.default_rng(40)
    # float64 agents: the scalar oracle feeds states one at a time, and the
    # 1e-8 agreement must not hinge on batch-dependent float32 rounding
    online = build_agent("sin", seed=41, dtype=np.float64)
    target = build_agent("sin", seed=42, dtype=np.float64)
    batch = []
    for _ in range(100):
        batch.append(Transition(
            state=rng.standard_normal((9, 9)).astype(np.float32),
            next_state=rng.standard_normal((9, 9)).astype(np.float32),
            reward=float(rng.normal()),
            i_choice=int(rng.integers(0, len(TUNE_FACTORS))),
            s_choice=int(rng.integers(0, len(TUNE_FACTORS))),
            terminal=bool(rng.random() < 0.2)))
    gamma = 0.99

    loss = two_branch_loss(online, target, batch, gamma)
    loss_ref = scalar_two_branch_loss(online, target, batch, gamma)
    loss_err = abs(loss - loss_ref)

    tp, tt = compute_double_q_target(online, target, batch, gamma)
    tgt_err = 0.0
    for k, t in enumerate(batch):
        online.set_noise_mode("zero")
        target.set_noise_mode("zero")
        qp_on, qt_on = online.expected_qs(t.next_state[None])
        qp_tg, qt_tg = target.expected_qs(t.next_state[None])
        ref_p = scalar_double_q_target(qp_on[0], qp_tg[0], t.reward, t.terminal, gamma)
        ref_t = scalar_double_q_target(qt_on[0], qt_tg[0], t.reward, t.terminal, gamma)
        tgt_err = max(tgt_err, abs(tp[k] - ref_p), abs(tt[k] - ref_t))

    # tabular 2-state chain: s0 -> s1 (live), s1 -> end (terminal)
    r0 = np.array([1.0, 0.5])
    r1 = np.array([2.0, 3.0])
    q = TableAgent(np.zeros((2, 2)), np.zeros((2, 2)))
    for _ in range(10):
        trans = [Transition(np.array([s], np.float32), np.array([1], np.float32),
                            (r0, r1)[s][a], a, a, terminal=(s == 1))
                 for s in (0, 1) for a in (0, 1)]
        tp_b, tt_b = compute_double_q_target(q, q, trans, gamma)
        qp_new = q.qp.copy()
        qt_new = q.qt.copy()
        for k, t in enumerate(trans):
            s = int(t.state[0])
            qp_new[s, t.i_choice] = tp_b[k]
            qt_new[s, t.s_choice] = tt_b[k]
        q = TableAgent(qp_new, qt_new)
    q_star = np.stack([r0 + gamma * r1.max(), r1])
    mdp_err = max(float(np.max(np.abs(q.qp - q_star))),
                  float(np.max(np.abs(q.qt - q_star))))
    _verdict("criterion 4 (Q-learning math)",
             loss_err < 1e-8 and tgt_err < 1e-8 and mdp_err < 1e-3,
             f"loss err {loss_err:.2e}, double-Q target err {tgt_err:.2e} "
             f"(tol 1e-8, 100 transitions), tabular MDP vs analytic Q* err "
             f"{mdp_err:.2e} (tol 1e-3)")


def test_criterion_05_reward_formulas():
    rng = np.random.default_rng(50)
    win = SOFT_TISSUE_WINDOW
    tgt_err = 0.0
    obj_err = 0.0
    for _ in range(50):
        clean = rng.uniform(-300, 400, size=(16, 16))
        noisy = clean + rng.normal(0, rng.uniform(2, 60), size=clean.shape)
        a, b = win.clip(noisy), win.clip(clean)
        direct = gssim(a, b) + 1.0 / (np.mean((a - b) ** 2) / 81.0 + 1.0)
        tgt_err = max(tgt_err, abs(reward_target(noisy, clean) - direct))

        prev = rng.standard_normal((8, 8))
        nxt = rng.standard_normal((8, 8))
        truth = rng.standard_normal((8, 8))
        direct = (np.linalg.norm(truth) / np.linalg.norm(nxt - truth)
                  - np.linalg.norm(truth) / np.linalg.norm(prev - truth))
        obj_err = max(obj_err, abs(objective_reward(prev, nxt, truth) - direct))

    clean = rng.uniform(-160, 240, size=(24, 24))
    ident = reward_target(clean, clean)

    from rldenoise.reward import build_reward_net
    net = build_reward_net(seed=51)
    anti = 0.0
    for _ in range(10):
        pa = rng.random((16, 16))
        pb = rng.random((16, 16))
        anti = max(anti, abs(q_reward(net, pa, pb) + q_reward(net, pb, pa)))
    _verdict("criterion 5 (reward formulas)",
             tgt_err < 1e-9 and obj_err < 1e-9 and anti < 1e-9 and ident == 2.0,
             f"reward_target err {tgt_err:.2e}, objective err {obj_err:.2e}, "
             f"antisymmetry {anti:.2e} (tol 1e-9), identity target {ident} "
             f"(need exactly 2.0)")


def test_criterion_06_reward_net_overfit_and_ranking(reward_art):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    clean = rng.uniform(-160, 240, size=(24, 24))
    noisy = clean + rng.normal(0, 30, size=clean.shape)
    cfg = RewardTrainConfig(epochs=30, batch_size=1, lr=3e-3, lr_decay=0.85,
                            seed=5, augment=False)
    _net, hist = train_reward_net([(noisy, clean)] * 8, cfg)
    overfit_loss = hist[-1]["loss"]

    net, meta = reward_art
    _, holdout = build_reward_pairs(
        GEOM, phantom_seeds=(), holdout_seeds=REWARD_HOLDOUT, n_views=N_VIEWS,
        extents=EXTENTS, holdout_per=100, seed=0)
    scorer = RewardScorer(net)
    wins = sum(int(scorer.score_image(ref_p) > scorer.score_image(lo_p))
               for lo_p, ref_p in holdout)
    wall = meta["pairs_s"] + meta["train_s"] + (time.perf_counter() - t0)
    _verdict("criterion 6 (reward net)",
             overfit_loss < 1e-3 and len(hist) <= 30
             and wins >= 0.8 * len(holdout) and wall < 600.0,
             f"overfit loss {overfit_loss:.2e} in {len(hist)} epochs "
             f"(tol 1e-3 within 30), clean ranked above quarter dose on "
             f"{wins}/{len(holdout)} held-out pairs (need >= 80%), "
             f"{wall:.0f}s of 600s")


def test_criterion_07_training_beats_noisy_and_fixed(reward_art, agents_art):
    t0 = time.perf_counter()
    sin_net, vol_net, meta = agents_art
    held = build_dataset(3, GEOM, seed0=HELDOUT_SEED0, n_views=N_VIEWS,
                         extents=EXTENTS)
    tuned_cfg = desk_pipeline_config(seed=3)
    fixed_cfg = desk_pipeline_config(seed=3, ablation="fixed-both")
    rows_t, rows_f = [], []
    for case in held:
        den, _ = denoise_volume(case.noisy, sin_net, vol_net, tuned_cfg, GEOM,
                                case_name=case.name)
        fix, _ = denoise_volume(case.noisy, sin_net, vol_net, fixed_cfg, GEOM,
                                case_name=case.name)
        rows_t.append(evaluate_case(den, case))
        rows_f.append(evaluate_case(fix, case))

    def mean(rows, key):
        return float(np.mean([r[key] for r in rows]))

    psnr_noisy = mean(rows_t, "psnr_before")
    ssim_noisy = mean(rows_t, "ssim_before")
    psnr_tuned = mean(rows_t, "psnr_after")
    ssim_tuned = mean(rows_t, "ssim_after")
    ssim_fixed = mean(rows_f, "ssim_after")
    wall = (meta["dataset_s"] + meta["train_s"]
            + reward_art[1]["pairs_s"] + reward_art[1]["train_s"]
            + (time.perf_counter() - t0))
    _verdict("criterion 7 (training efficacy)",
             psnr_tuned > psnr_noisy and ssim_tuned > ssim_noisy
             and ssim_tuned >= ssim_fixed and wall < 8 * 3600.0,
             f"{meta['cases']} cases x {meta['epochs']} epochs; held-out mean "
             f"PSNR {psnr_noisy:.2f} -> {psnr_tuned:.2f} dB, SSIM "
             f"{ssim_noisy:.4f} -> {ssim_tuned:.4f} (fixed-both "
             f"{ssim_fixed:.4f}), {wall:.0f}s of {8 * 3600}s")


def test_criterion_08_initialization_convergence(agents_art):
    t0 = time.perf_counter()
    sin_net, vol_net, _meta = agents_art
    case = build_case("ellipsoids", 2100, GEOM, n_views=N_VIEWS, extents=EXTENTS)
    cfg = desk_pipeline_config(seed=5)
    rows, meta = convergence_experiment(case.noisy, sin_net, vol_net, cfg, GEOM,
                                        reference=case.reference, steps=15)

    def spread(step):
        vals = [r["psnr"] for r in rows if r["domain"] == "vol"
                and r["step"] == step]
        assert len(vals) == 4
        return max(vals) - min(vals)

    s1, s15 = spread(1), spread(15)
    dt = time.perf_counter() - t0
    _verdict("criterion 8 (initialization convergence)",
             s15 < s1 and meta["default_init"] == "middle" and dt < 1800.0,
             f"PSNR spread over 4 init modes: step 1 {s1:.3f} dB -> step 15 "
             f"{s15:.3f} dB (must shrink), default init "
             f"{meta['default_init']!r}, {dt:.0f}s of 1800s")


def test_criterion_09_repeated_run_is_bitwise_identical(tmp_path):
    case = build_case("ellipsoids", 2200, GEOM, n_views=N_VIEWS, extents=EXTENTS)
    rio.save_volume(str(tmp_path / "noisy.raw"), case.noisy)
    save_agent(tmp_path / "sin.ckpt", build_agent("sin", seed=7))
    save_agent(tmp_path / "vol.ckpt", build_agent("vol", seed=8))
    outs = []
    for run in (1, 2):
        out = tmp_path / f"out{run}.raw"
        rep = tmp_path / f"report{run}.csv"
        cmd = [sys.executable, "-c",
               "from rldenoise.cli import main; raise SystemExit(main())",
               "denoise", "--geometry", "desk", "--profile", "desk",
               "--seed", "3",
               "--sin-net", str(tmp_path / "sin.ckpt"),
               "--vol-net", str(tmp_path / "vol.ckpt"),
               "--vol", str(tmp_path / "noisy.raw"),
               "--out", str(out), "--report", str(rep)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr[-2000:]
        outs.append((out.read_bytes(),
                     (tmp_path / f"out{run}.json").read_bytes(),
                     rep.read_bytes(),
                     (tmp_path / f"report{run}_steps.csv").read_bytes()))
    same = [a == b for a, b in zip(outs[0], outs[1])]
    _verdict("criterion 9 (determinism)",
             all(same),
             f"volume/sidecar/report/steps byte-identical across two CLI "
             f"runs: {same}")


def test_criterion_10_action_and_architecture_conformance():
    rng = np.random.default_rng(100)
    factors_ok = TUNE_FACTORS == (0.5, 0.9, 1.0, 1.1, 1.5)
    support_ok = (N_ATOMS == 51
                  and SIN_SUPPORT_RANGE == (0.0, 100.0)
                  and VOL_SUPPORT_RANGE == (0.0, 200.0)
                  and np.array_equal(SIN_SUPPORT, np.linspace(0.0, 100.0, 51))
                  and np.array_equal(VOL_SUPPORT, np.linspace(0.0, 200.0, 51)))

    norm_err = 0.0
    for kind, state in (("sin", rng.random((3, 16, 24), dtype=np.float32)),
                        ("vol", rng.random((3, 9, 9, 9), dtype=np.float32))):
        net = build_agent(kind, seed=101)
        net.set_noise_mode("zero")
        dp, dt_ = net.forward(state)
        assert dp.shape == (3, len(TUNE_FACTORS), N_ATOMS)
        for d in (dp, dt_):
            norm_err = max(norm_err, float(np.max(np.abs(
                d.sum(axis=-1, dtype=np.float64) - 1.0))))

    head = DuelingHead(6, len(TUNE_FACTORS), rng=rng, dtype=np.float64)
    for lyr in head.noisy_layers():
        lyr.noise_mode = "zero"
    x = rng.standard_normal((4, 6))
    base = head.forward(x).copy()
    shift_err = 0.0
    for shift in (3.7, rng.standard_normal(N_ATOMS)):
        bias = head.adv.bias_mu.data
        delta = np.tile(np.broadcast_to(shift, (N_ATOMS,)), len(TUNE_FACTORS))
        bias += delta
        shift_err = max(shift_err, float(np.max(np.abs(head.forward(x) - base))))
        bias -= delta
    _verdict("criterion 10 (action/architecture conformance)",
             factors_ok and support_ok and norm_err < 1e-6 and shift_err < 1e-9,
             f"factors {TUNE_FACTORS}, 51-atom supports "
             f"{SIN_SUPPORT_RANGE}/{VOL_SUPPORT_RANGE}, distribution norm err "
             f"{norm_err:.2e} (tol 1e-6), dueling shift invariance err "
             f"{shift_err:.2e}")
