"""Q-learning for the filter-tuning agents.

Both agents learn off-policy from replayed tuning steps.  Action values are
categorical distributions; the default loss follows the two-branch squared
error on expected values,

    L = [2 r + g Q'(s', p*) + g Q'(s', t*) - (Q(s, p) + Q(s, t))]^2,

with p*/t* chosen by the online network and evaluated by the target network
(double Q-learning).  An alternative "distributional" mode projects the
Bellman target onto the support per branch and minimizes cross-entropy.
Target networks are hard-synced every target_sync steps.

Episodes follow the denoising procedure: per volume, ten projection-domain
tuning steps (one action per view, one shared reward from the intermediate
reconstruction), then ten volume-domain steps (block-sampled actions with
per-block rewards).  Filters are always re-applied to the step-0 original.
The unfiltered-projection reconstruction is reused across epochs, since it
does not depend on the evolving widths.  A further speedup that caches
per-view partial backprojections is possible but not implemented here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .agents import (AgentNetwork, build_agent, clone_agent, copy_parameters,
                     expected_q, select_actions, apply_action_2d, apply_action_3d,
                     init_sigma_2d, init_sigma_3d, normalize_views,
                     normalize_patches_hu, VOL_PATCH)
from .bilateral import apply_filt_sin, bilateral_3d_values
from .ct import ConeBeamGeometry, fdk_reconstruct, forward_project
from .ct.volume import Sinogram, Volume
from .data import DenoiseCase, mask_outside_fov
from .metrics import objective_reward
from .nn.adam import Adam
from .replay import ReplayPool, Transition
from .reward import RewardScorer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Hyperparameters for agent training.

    The defaults are the full-scale values; desk_train_config() shrinks the
    per-step sample counts in proportion to the smaller desk volumes.
    """

    gamma: float = 0.99
    epochs: int = 20
    tuning_steps: int = 10
    target_sync: int = 30
    lr: float = 1e-4
    batch_sin: int = 32
    batch_vol: int = 256
    adds_sin: int = 200
    adds_vol: int = 2000
    pool_sin: int = 5_000
    pool_vol: int = 50_000
    block_shape: tuple = (32, 32, 8)
    loss_mode: str = "literal"          # or "distributional"
    reward_mode: str = "scorer"         # or "objective"
    reward_baseline: str = "original"   # or "previous"
    noise_cadence: str = "per-forward"  # or "per-episode"
    schedule: str = "interleaved"       # or "two-phase"
    seed: int = 0

    def __post_init__(self):
        if self.loss_mode not in ("literal", "distributional"):
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")
        if self.reward_mode not in ("scorer", "objective"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_baseline not in ("original", "previous"):
            raise ValueError(f"unknown reward baseline {self.reward_baseline!r}")
        if self.noise_cadence not in ("per-forward", "per-episode"):
            raise ValueError(f"unknown noise cadence {self.noise_cadence!r}")
        if self.schedule not in ("interleaved", "two-phase"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not (0 <= self.gamma <= 1):
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.tuning_steps < 1:
            raise ValueError("tuning_steps must be >= 1")


def desk_train_config(**overrides) -> TrainConfig:
    """Training knobs scaled to 64^3 desk volumes: per-step sample counts
    and the scored block shrink with the volume, everything else keeps the
    full-scale defaults."""
    cfg = TrainConfig(adds_vol=128, batch_vol=64, adds_sin=180,
                      block_shape=(32, 32, 4))
    return replace(cfg, **overrides)


@dataclass
class TrainState:
    """Per-network bookkeeping: optimizer step count and sync history."""

    step: int = 0
    sync_steps: list = field(default_factory=list)


def _stack_states(batch: list[Transition]) -> tuple[np.ndarray, np.ndarray]:
    states = np.stack([t.state for t in batch])
    next_states = np.stack([t.next_state for t in batch])
    return states, next_states


def compute_double_q_target(online: AgentNetwork, target: AgentNetwork,
                            batch: list[Transition], gamma: float):
    """Per-branch Bellman targets (tp, tt), each shape (batch,).

    Non-terminal: t_b = r + gamma * Q_target(s', argmax_b Q_online(s', .)).
    Terminal steps bootstrap nothing: t_b = r.  Both networks are evaluated
    noise-free.
    """
    rewards = np.array([t.reward for t in batch])
    terminal = np.array([t.terminal for t in batch])
    tp = rewards.copy()
    tt = rewards.copy()
    live = ~terminal
    if np.any(live):
        next_states = np.stack([t.next_state for t, a in zip(batch, live) if a])
        online.set_noise_mode("zero")
        target.set_noise_mode("zero")
        qp_on, qt_on = online.expected_qs(next_states)
        p_star = np.argmax(qp_on, axis=1)
        t_star = np.argmax(qt_on, axis=1)
        qp_tg, qt_tg = target.expected_qs(next_states)
        n = np.arange(p_star.size)
        tp[live] += gamma * qp_tg[n, p_star]
        tt[live] += gamma * qt_tg[n, t_star]
    return tp, tt


def project_distribution(dist: np.ndarray, rewards: np.ndarray,
                         terminal: np.ndarray, gamma: float,
                         support: np.ndarray) -> np.ndarray:
    """Project r + gamma * z onto the fixed support (terminal rows collapse
    to a point mass at r).  dist is (batch, n_atoms); returns same shape."""
    dist = np.asarray(dist, dtype=np.float64)
    n, n_atoms = dist.shape
    vmin, vmax = support[0], support[-1]
    dz = support[1] - support[0]
    live = (~np.asarray(terminal, dtype=bool)).astype(np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    tz = rewards[:, None] + gamma * live[:, None] * support[None, :]
    tz = np.clip(tz, vmin, vmax)
    b = (tz - vmin) / dz
    lo = np.floor(b).astype(np.int64)
    hi = np.ceil(b).astype(np.int64)
    same = (lo == hi).astype(np.float64)
    w_hi = b - lo
    w_lo = hi - b
    m = np.zeros_like(dist)
    rows = np.repeat(np.arange(n), n_atoms)
    np.add.at(m, (rows, lo.ravel()), (dist * (w_lo + same)).ravel())
    np.add.at(m, (rows, hi.ravel()), (dist * w_hi * (1.0 - same)).ravel())
    return m


def _branch_q(dist: np.ndarray, choices: np.ndarray, support: np.ndarray) -> np.ndarray:
    q = expected_q(dist, support)
    return q[np.arange(choices.size), choices]


def _loss_literal(online: AgentNetwork, target: AgentNetwork,
                  batch: list[Transition], gamma: float, *, with_grads: bool):
    states, _ = _stack_states(batch)
    tp, tt = compute_double_q_target(online, target, batch, gamma)
    online.set_noise_mode("sample" if with_grads else "zero")
    dp, dt = online.forward(states)
    p_choice = np.array([t.i_choice for t in batch])
    t_choice = np.array([t.s_choice for t in batch])
    qp = _branch_q(dp, p_choice, online.support)
    qt = _branch_q(dt, t_choice, online.support)
    delta = (tp + tt) - (qp + qt)
    loss = float(np.mean(delta ** 2))
    if with_grads:
        n = len(batch)
        coeff = -2.0 * delta / n
        gp = np.zeros(dp.shape, dtype=np.float64)
        gt = np.zeros(dt.shape, dtype=np.float64)
        gp[np.arange(n), p_choice] = coeff[:, None] * online.support[None, :]
        gt[np.arange(n), t_choice] = coeff[:, None] * online.support[None, :]
        online.backward(gp.astype(online.dtype), gt.astype(online.dtype))
    return loss


_CE_EPS = 1e-12


def _loss_distributional(online: AgentNetwork, target: AgentNetwork,
                         batch: list[Transition], gamma: float, *,
                         with_grads: bool):
    states, next_states = _stack_states(batch)
    rewards = np.array([t.reward for t in batch])
    terminal = np.array([t.terminal for t in batch])
    online.set_noise_mode("zero")
    target.set_noise_mode("zero")
    qp_on, qt_on = online.expected_qs(next_states)
    p_star = np.argmax(qp_on, axis=1)
    t_star = np.argmax(qt_on, axis=1)
    dp_tg, dt_tg = target.forward(next_states)
    n = np.arange(len(batch))
    mp = project_distribution(dp_tg[n, p_star], rewards, terminal, gamma,
                              online.support)
    mt = project_distribution(dt_tg[n, t_star], rewards, terminal, gamma,
                              online.support)
    online.set_noise_mode("sample" if with_grads else "zero")
    dp, dt = online.forward(states)
    p_choice = np.array([t.i_choice for t in batch])
    t_choice = np.array([t.s_choice for t in batch])
    sel_p = dp[n, p_choice].astype(np.float64)
    sel_t = dt[n, t_choice].astype(np.float64)
    ce_p = -(mp * np.log(sel_p + _CE_EPS)).sum(axis=1)
    ce_t = -(mt * np.log(sel_t + _CE_EPS)).sum(axis=1)
    loss = float(np.mean(ce_p + ce_t))
    if with_grads:
        gp = np.zeros(dp.shape, dtype=np.float64)
        gt = np.zeros(dt.shape, dtype=np.float64)
        gp[n, p_choice] = -mp / (sel_p + _CE_EPS) / len(batch)
        gt[n, t_choice] = -mt / (sel_t + _CE_EPS) / len(batch)
        online.backward(gp.astype(online.dtype), gt.astype(online.dtype))
    return loss


def two_branch_loss(online: AgentNetwork, target: AgentNetwork,
                    batch: list[Transition], gamma: float,
                    mode: str = "literal") -> float:
    """Loss of one replayed batch, without touching any gradients."""
    if not batch:
        raise ValueError("empty batch")
    if mode == "literal":
        loss = _loss_literal(online, target, batch, gamma, with_grads=False)
    elif mode == "distributional":
        loss = _loss_distributional(online, target, batch, gamma, with_grads=False)
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss on a batch of {len(batch)} transitions")
    return loss


def train_step(online: AgentNetwork, target: AgentNetwork, pool: ReplayPool,
               opt: Adam, state: TrainState, cfg: TrainConfig, batch_size: int):
    """One optimizer step from the replay pool.  Returns the loss, or None
    (with a log notice) when the pool cannot fill a batch yet."""
    if len(pool) < batch_size:
        log.info("replay pool has %d of %d transitions; skipping train step",
                 len(pool), batch_size)
        return None
    batch = pool.sample(batch_size)
    opt.zero_grad()
    if cfg.loss_mode == "literal":
        loss = _loss_literal(online, target, batch, cfg.gamma, with_grads=True)
    else:
        loss = _loss_distributional(online, target, batch, cfg.gamma, with_grads=True)
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss at step {state.step + 1}; batch rewards "
            f"{[t.reward for t in batch[:5]]}...")
    opt.step()
    state.step += 1
    if state.step % cfg.target_sync == 0:
        copy_parameters(target, online)
        state.sync_steps.append(state.step)
    return loss


def _episode_noise(net: AgentNetwork, cfg: TrainConfig) -> str:
    """Prepare exploration noise for one episode; returns the noise mode
    that action selection should use."""
    if cfg.noise_cadence == "per-episode":
        net.sample_noise()
        return "frozen"
    return "sample"


def _sample_centers(rng: np.random.Generator, shape, count: int) -> np.ndarray:
    """Patch centers at least half a patch away from every border."""
    m = VOL_PATCH[0] // 2
    return np.stack([rng.integers(m, n - m, size=count) for n in shape], axis=1)


def _block_box(center, shape, block_shape) -> tuple:
    """Fixed-size box around a center, shifted to stay inside the volume."""
    out = []
    for c, n, b in zip(center, shape, block_shape):
        b = min(b, n)
        start = int(np.clip(c - b // 2, 0, n - b))
        out.append(slice(start, start + b))
    return tuple(out)


def _extract_patches(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    r = VOL_PATCH[0] // 2
    out = np.empty((centers.shape[0],) + VOL_PATCH, dtype=values.dtype)
    for i, (cx, cy, cz) in enumerate(centers):
        out[i] = values[cx - r:cx + r + 1, cy - r:cy + r + 1, cz - r:cz + r + 1]
    return out


class _CaseCache:
    """Per-case projections, baseline reconstructions and scores, reused
    across epochs (the originals never change)."""

    def __init__(self):
        self.proj: dict[str, np.ndarray] = {}
        self.angles: dict[str, np.ndarray] = {}
        self.recon: dict[str, Volume] = {}
        self.score: dict[str, float] = {}


def run_training(cases: list[DenoiseCase], cfg: TrainConfig,
                 geom: ConeBeamGeometry, n_views: int = 180,
                 scorer: RewardScorer | None = None,
                 nets: tuple[AgentNetwork, AgentNetwork] | None = None):
    """Train both agents over the dataset.

    Returns (sin_net, vol_net, log) where log["rows"] has one flat dict per
    (epoch, case, domain) with mean loss, mean reward and width statistics;
    fixed seeds give identical logs run to run.  A case whose projection or
    reconstruction fails is skipped with a log entry.  reward_mode "scorer"
    scores steps with the quality network; "objective" uses the
    distance-ratio reward against each case's ground-truth phantom.
    """
    if cfg.reward_mode == "scorer" and scorer is None:
        raise ValueError("reward_mode 'scorer' needs a RewardScorer")
    root = np.random.SeedSequence(cfg.seed)
    s_nets, s_pool_sin, s_pool_vol, s_episode = root.spawn(4)
    if nets is None:
        net_seeds = s_nets.generate_state(2)
        sin_net = build_agent("sin", int(net_seeds[0]))
        vol_net = build_agent("vol", int(net_seeds[1]))
    else:
        sin_net, vol_net = nets
    sin_target = clone_agent(sin_net)
    vol_target = clone_agent(vol_net)
    pool_sin = ReplayPool(cfg.pool_sin, seed=int(s_pool_sin.generate_state(1)[0]))
    pool_vol = ReplayPool(cfg.pool_vol, seed=int(s_pool_vol.generate_state(1)[0]))
    opt_sin = Adam(sin_net.parameters(), lr=cfg.lr)
    opt_vol = Adam(vol_net.parameters(), lr=cfg.lr)
    st_sin = TrainState()
    st_vol = TrainState()
    rng = np.random.default_rng(s_episode)
    cache = _CaseCache()
    rows: list[dict] = []
    for epoch in range(cfg.epochs):
        if cfg.schedule == "interleaved":
            phase_sin, phase_vol = True, True
        else:
            phase_sin = epoch < (cfg.epochs + 1) // 2
            phase_vol = not phase_sin
        for case in cases:
            try:
                rows.extend(_train_one_case(
                    case, epoch, cfg, geom, n_views, scorer, cache, rng,
                    sin_net, sin_target, pool_sin, opt_sin, st_sin,
                    vol_net, vol_target, pool_vol, opt_vol, st_vol,
                    phase_sin, phase_vol))
            except (ValueError, FloatingPointError, RuntimeError):
                log.exception("skipping case %s in epoch %d", case.name, epoch)
        log.info("epoch %d done (sin step %d, vol step %d)", epoch,
                 st_sin.step, st_vol.step)
    return sin_net, vol_net, {
        "rows": rows,
        "sin_sync_steps": st_sin.sync_steps,
        "vol_sync_steps": st_vol.sync_steps,
    }


def _train_one_case(case: DenoiseCase, epoch, cfg, geom, n_views, scorer,
                    cache, rng,
                    sin_net, sin_target, pool_sin, opt_sin, st_sin,
                    vol_net, vol_target, pool_vol, opt_vol, st_vol,
                    phase_sin, phase_vol) -> list[dict]:
    rows = []
    name = case.name
    if name not in cache.proj:
        masked = mask_outside_fov(case.noisy, geom)
        sino = forward_project(masked, geom, n_views)
        cache.proj[name] = sino.values
        cache.angles[name] = sino.angles
        cache.recon[name] = fdk_reconstruct(sino, geom, case.noisy.extents,
                                            case.noisy.spacing, window="cosine")
        if scorer is not None:
            cache.score[name] = scorer.score_volume(cache.recon[name].values)
    proj_orig = cache.proj[name]
    angles = cache.angles[name]
    base_recon = cache.recon[name]
    truth = case.phantom.values

    # projection-domain episode
    sigma2d = init_sigma_2d(n_views, "random", rng)
    noise_mode = _episode_noise(sin_net, cfg) if phase_sin else "zero"
    proj_prev = proj_orig
    prev_recon = base_recon.values
    prev_score = cache.score.get(name)
    recon = base_recon
    losses: list[float] = []
    rewards_seen: list[float] = []
    for step in range(1, cfg.tuning_steps + 1):
        states = normalize_views(proj_prev).astype(np.float32)
        p_idx, t_idx = select_actions(sin_net, states, noise_mode)
        for v in range(n_views):
            apply_action_2d(sigma2d, v, int(p_idx[v]), int(t_idx[v]))
        proj_filt = apply_filt_sin(proj_orig, sigma2d)
        recon = fdk_reconstruct(Sinogram(proj_filt, angles), geom,
                                case.noisy.extents, case.noisy.spacing,
                                window="cosine")
        if cfg.reward_mode == "scorer":
            after = scorer.score_volume(recon.values)
            base = cache.score[name] if cfg.reward_baseline == "original" else prev_score
            r = after - base
            prev_score = after
        else:
            r = objective_reward(prev_recon, recon.values, truth)
        if phase_sin:
            adds = min(cfg.adds_sin, n_views)
            chosen = rng.choice(n_views, size=adds, replace=False)
            next_states = normalize_views(proj_filt).astype(np.float32)
            terminal = step == cfg.tuning_steps
            for v in chosen:
                pool_sin.add(Transition(states[v], next_states[v], r,
                                        int(p_idx[v]), int(t_idx[v]), terminal))
            loss = train_step(sin_net, sin_target, pool_sin, opt_sin, st_sin,
                              cfg, cfg.batch_sin)
            if loss is not None:
                losses.append(loss)
        rewards_seen.append(float(r))
        proj_prev = proj_filt
        prev_recon = recon.values
    rows.append(_log_row(epoch, name, "sin", losses, rewards_seen,
                         sigma2d.sigma_i, sigma2d.sigma_s, len(pool_sin), st_sin))

    if not phase_vol:
        return rows

    # volume-domain episode, starting from the filtered reconstruction
    vol_orig = recon.values
    sigma3d = init_sigma_3d(vol_orig.shape, "random", rng)
    noise_mode = _episode_noise(vol_net, cfg)
    vol_prev = vol_orig
    losses = []
    rewards_seen = []
    for step in range(1, cfg.tuning_steps + 1):
        centers = _sample_centers(rng, vol_orig.shape, cfg.adds_vol)
        patches = normalize_patches_hu(
            _extract_patches(vol_prev, centers)).astype(np.float32)
        p_idx, t_idx = select_actions(vol_net, patches, noise_mode)
        boxes = [_block_box(c, vol_orig.shape, cfg.block_shape) for c in centers]
        for box, p, t in zip(boxes, p_idx, t_idx):
            apply_action_3d(sigma3d, box, int(p), int(t))
        vol_filt = bilateral_3d_values(vol_orig, sigma3d)
        if cfg.reward_mode == "scorer":
            after = scorer.score_blocks(np.stack([vol_filt[b] for b in boxes]))
            base_vol = vol_orig if cfg.reward_baseline == "original" else vol_prev
            before = scorer.score_blocks(np.stack([base_vol[b] for b in boxes]))
            r_blocks = after - before
        else:
            r_blocks = np.array([
                objective_reward(vol_prev[b], vol_filt[b], truth[b])
                for b in boxes])
        next_patches = normalize_patches_hu(
            _extract_patches(vol_filt, centers)).astype(np.float32)
        terminal = step == cfg.tuning_steps
        for i in range(centers.shape[0]):
            pool_vol.add(Transition(patches[i], next_patches[i],
                                    float(r_blocks[i]), int(p_idx[i]),
                                    int(t_idx[i]), terminal))
        loss = train_step(vol_net, vol_target, pool_vol, opt_vol, st_vol,
                          cfg, cfg.batch_vol)
        if loss is not None:
            losses.append(loss)
        rewards_seen.append(float(np.mean(r_blocks)))
        vol_prev = vol_filt
    rows.append(_log_row(epoch, name, "vol", losses, rewards_seen,
                         sigma3d.sigma_i, sigma3d.sigma_s, len(pool_vol), st_vol))
    return rows


def _log_row(epoch, name, domain, losses, rewards_seen, sigma_i, sigma_s,
             pool_len, state: TrainState) -> dict:
    return {
        "epoch": epoch,
        "case": name,
        "domain": domain,
        "loss_mean": float(np.mean(losses)) if losses else float("nan"),
        "reward_mean": float(np.mean(rewards_seen)) if rewards_seen else float("nan"),
        "sigma_i_mean": float(np.mean(sigma_i)),
        "sigma_i_min": float(np.min(sigma_i)),
        "sigma_i_max": float(np.max(sigma_i)),
        "sigma_s_mean": float(np.mean(sigma_s)),
        "sigma_s_min": float(np.min(sigma_s)),
        "sigma_s_max": float(np.max(sigma_s)),
        "pool": pool_len,
        "train_step": state.step,
    }
