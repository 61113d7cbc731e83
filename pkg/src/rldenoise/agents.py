"""Q-networks that tune bilateral filter widths.

Each agent consumes an image state (a whole detector view for the 2D
filter, a 9x9x9 voxel patch for the 3D filter) and emits two categorical
action distributions from separate branches on a shared convolutional
trunk: one branch picks a multiplicative factor for the intensity width
sigma_i, the other for the spatial width sigma_s, so every step rescales
both.  Heads are dueling (value + advantage, mean-subtracted on atom
logits before the softmax) and built from noisy dense layers, so
exploration comes from parameter noise instead of epsilon-greedy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.layers import (Conv2D, Conv3D, Dense, NoisyDense, LeakyReLU,
                        GlobalAvgPool, Flatten, Softmax, Sequential, Parameter)
from .nn.checkpoint import save_checkpoint, load_checkpoint, restore_parameters
from .bilateral import BilateralParams2D, BilateralParams3D, SIGMA_MIN, SIGMA_MAX
from .metrics import EvalWindow, SOFT_TISSUE_WINDOW

N_ATOMS = 51
TUNE_FACTORS = (0.5, 0.9, 1.0, 1.1, 1.5)
IDENTITY_ACTION = TUNE_FACTORS.index(1.0)
PARAM_NAMES = ("sigma_i", "sigma_s")

SIN_SUPPORT_RANGE = (0.0, 100.0)
VOL_SUPPORT_RANGE = (0.0, 200.0)
SIN_SUPPORT = np.linspace(*SIN_SUPPORT_RANGE, N_ATOMS)
VOL_SUPPORT = np.linspace(*VOL_SUPPORT_RANGE, N_ATOMS)

# sigma initialization ranges (inclusive integer draws); "middle" mode uses
# the midpoint
SIN_SIGMA_RANGE = (1, 5)
VOL_SIGMA_RANGE = (1, 25)

INIT_MODES = ("min", "max", "middle", "random")

# projection views are line integrals, roughly [0, 2] at this scale
SIN_INPUT_SCALE = 0.5
LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class ActionSpace:
    """Two parameter choices crossed with five tuning factors."""

    n_params: int = len(PARAM_NAMES)
    factors: tuple = TUNE_FACTORS

    def __post_init__(self):
        if self.n_params != 2:
            raise ValueError("the filter exposes exactly two widths per site")
        if 1.0 not in self.factors:
            raise ValueError("tuning factors must include the identity 1.0")

    @property
    def n_tune(self) -> int:
        return len(self.factors)


def expected_q(dist: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Expectation of categorical distributions over their support.

    dist is (..., n_actions, n_atoms); each atom row must sum to one within
    1e-4 or the distribution is rejected as unnormalized.
    """
    dist = np.asarray(dist, dtype=np.float64)
    sums = dist.sum(axis=-1)
    err = np.max(np.abs(sums - 1.0))
    if err > 1e-4:
        raise ValueError(f"action distribution not normalized (max |sum-1| = {err:.3g})")
    return dist @ np.asarray(support, dtype=np.float64)


class DuelingHead:
    """Noisy dueling categorical head: V(s) + A(s,a) - mean_a A(s,a) on atom
    logits, then a per-action softmax."""

    def __init__(self, n_in: int, n_actions: int, *, rng: np.random.Generator,
                 dtype=np.float32, name: str = "head"):
        self.n_in = n_in
        self.n_actions = n_actions
        self.name = name
        self.hidden = NoisyDense(n_in, n_in, rng=rng, dtype=dtype, name=f"{name}.hidden")
        self.act = LeakyReLU(LEAKY_SLOPE, name=f"{name}.lrelu")
        self.value = NoisyDense(n_in, N_ATOMS, rng=rng, dtype=dtype, name=f"{name}.value")
        self.adv = NoisyDense(n_in, n_actions * N_ATOMS, rng=rng, dtype=dtype,
                              name=f"{name}.adv")
        self.softmax = Softmax(name=f"{name}.softmax")

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self.act.forward(self.hidden.forward(x))
        v = self.value.forward(h)
        a = self.adv.forward(h).reshape(x.shape[0], self.n_actions, N_ATOMS)
        logits = v[:, None, :] + a - a.mean(axis=1, keepdims=True)
        return self.softmax.forward(logits)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        dlogits = self.softmax.backward(grad)
        dv = dlogits.sum(axis=1)
        da = dlogits - dlogits.mean(axis=1, keepdims=True)
        dh = self.value.backward(dv)
        dh = dh + self.adv.backward(da.reshape(da.shape[0], -1))
        return self.hidden.backward(self.act.backward(dh))

    def parameters(self) -> list[Parameter]:
        return (self.hidden.parameters() + self.value.parameters()
                + self.adv.parameters())

    def noisy_layers(self) -> list[NoisyDense]:
        return [self.hidden, self.value, self.adv]


class AgentNetwork:
    """Shared trunk with parameter-choice and tuning-factor branches."""

    def __init__(self, kind: str, trunk: Sequential, branch_p: Sequential,
                 head_p: DuelingHead, branch_t: Sequential, head_t: DuelingHead,
                 support_range: tuple[float, float], state_shape: tuple | None,
                 seed: int, dtype=np.float32):
        self.kind = kind
        self.trunk = trunk
        self.branch_p = branch_p
        self.head_p = head_p
        self.branch_t = branch_t
        self.head_t = head_t
        self.support = np.linspace(support_range[0], support_range[1],
                                   N_ATOMS, dtype=np.float64)
        self.support_range = tuple(support_range)
        self.state_shape = state_shape
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.action_space = ActionSpace()

    def _check_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        want = 4 if self.kind == "sin" else 5
        if x.ndim == want - 2:
            x = x[None, None]
        elif x.ndim == want - 1:
            x = x[:, None]
        if x.ndim != want:
            raise ValueError(f"{self.kind} agent expects {want - 2}D states, "
                             f"got shape {x.shape}")
        if self.state_shape is not None and x.shape[2:] != self.state_shape:
            raise ValueError(f"{self.kind} agent expects state shape "
                             f"{self.state_shape}, got {x.shape[2:]}")
        return x

    def forward(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self._check_state(states)
        feat = self.trunk.forward(x)
        dist_p = self.head_p.forward(self.branch_p.forward(feat))
        dist_t = self.head_t.forward(self.branch_t.forward(feat))
        return dist_p, dist_t

    def backward(self, grad_p: np.ndarray, grad_t: np.ndarray) -> None:
        gp = self.branch_p.backward(self.head_p.backward(grad_p))
        gt = self.branch_t.backward(self.head_t.backward(grad_t))
        self.trunk.backward(gp + gt)

    def parameters(self) -> list[Parameter]:
        return (self.trunk.parameters() + self.branch_p.parameters()
                + self.head_p.parameters() + self.branch_t.parameters()
                + self.head_t.parameters())

    def noisy_layers(self) -> list[NoisyDense]:
        return (self.trunk.noisy_layers() + self.branch_p.noisy_layers()
                + self.head_p.noisy_layers() + self.branch_t.noisy_layers()
                + self.head_t.noisy_layers())

    def set_noise_mode(self, mode: str) -> None:
        for layer in self.noisy_layers():
            layer.noise_mode = mode

    def sample_noise(self) -> None:
        for layer in self.noisy_layers():
            layer.sample_noise()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def expected_qs(self, states: np.ndarray, chunk: int = 256):
        """Expected Q per branch, each (batch, n_tune): one value per tuning
        factor for the intensity width and for the spatial width."""
        x = self._check_state(states)
        qp = np.empty((x.shape[0], self.action_space.n_tune))
        qt = np.empty((x.shape[0], self.action_space.n_tune))
        for lo in range(0, x.shape[0], chunk):
            sl = slice(lo, min(lo + chunk, x.shape[0]))
            dp, dt = self.forward(x[sl])
            qp[sl] = expected_q(dp, self.support)
            qt[sl] = expected_q(dt, self.support)
        return qp, qt

    def count_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def _build_sin(seed: int, dtype) -> AgentNetwork:
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(6)]
    trunk = Sequential([
        Conv2D(1, 16, padding="same", rng=rngs[0], dtype=dtype, name="trunk.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        Conv2D(16, 32, padding="same", rng=rngs[0], dtype=dtype, name="trunk.conv2"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="trunk")
    branch_p = Sequential([
        Conv2D(32, 32, padding="same", rng=rngs[1], dtype=dtype, name="bp.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        GlobalAvgPool(),
        Dense(32, 64, rng=rngs[1], dtype=dtype, name="bp.dense"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="branch_p")
    head_p = DuelingHead(64, len(TUNE_FACTORS), rng=rngs[2], dtype=dtype, name="hp")
    branch_t = Sequential([
        Conv2D(32, 64, padding="same", rng=rngs[3], dtype=dtype, name="bt.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        Conv2D(64, 64, padding="same", rng=rngs[3], dtype=dtype, name="bt.conv2"),
        LeakyReLU(LEAKY_SLOPE),
        GlobalAvgPool(),
        Dense(64, 128, rng=rngs[3], dtype=dtype, name="bt.dense"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="branch_t")
    head_t = DuelingHead(128, len(TUNE_FACTORS), rng=rngs[4], dtype=dtype, name="ht")
    return AgentNetwork("sin", trunk, branch_p, head_p, branch_t, head_t,
                        SIN_SUPPORT_RANGE, None, seed, dtype)


VOL_PATCH = (9, 9, 9)


def _build_vol(seed: int, dtype) -> AgentNetwork:
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(6)]
    trunk = Sequential([
        Conv3D(1, 32, padding="valid", rng=rngs[0], dtype=dtype, name="trunk.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        Conv3D(32, 64, padding="valid", rng=rngs[0], dtype=dtype, name="trunk.conv2"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="trunk")
    branch_p = Sequential([
        Conv3D(64, 64, padding="valid", rng=rngs[1], dtype=dtype, name="bp.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        Flatten(),
        Dense(64 * 27, 128, rng=rngs[1], dtype=dtype, name="bp.dense"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="branch_p")
    head_p = DuelingHead(128, len(TUNE_FACTORS), rng=rngs[2], dtype=dtype,
                         name="hp")
    branch_t = Sequential([
        Conv3D(64, 128, padding="valid", rng=rngs[3], dtype=dtype, name="bt.conv1"),
        LeakyReLU(LEAKY_SLOPE),
        Conv3D(128, 128, padding="valid", rng=rngs[3], dtype=dtype, name="bt.conv2"),
        LeakyReLU(LEAKY_SLOPE),
        Flatten(),
        Dense(128, 256, rng=rngs[3], dtype=dtype, name="bt.dense"),
        LeakyReLU(LEAKY_SLOPE),
    ], name="branch_t")
    head_t = DuelingHead(256, len(TUNE_FACTORS), rng=rngs[4], dtype=dtype, name="ht")
    return AgentNetwork("vol", trunk, branch_p, head_p, branch_t, head_t,
                        VOL_SUPPORT_RANGE, VOL_PATCH, seed, dtype)


def build_agent(kind: str, seed: int = 0, dtype=np.float32) -> AgentNetwork:
    """Construct a randomly initialized agent, kind "sin" or "vol"."""
    if kind == "sin":
        return _build_sin(seed, dtype)
    if kind == "vol":
        return _build_vol(seed, dtype)
    raise ValueError(f"unknown agent kind {kind!r}")


def clone_agent(net: AgentNetwork) -> AgentNetwork:
    """Fresh network of the same architecture with copied weights."""
    other = build_agent(net.kind, net.seed, net.dtype)
    copy_parameters(other, net)
    return other


def copy_parameters(dst: AgentNetwork, src: AgentNetwork) -> None:
    dp, sp = dst.parameters(), src.parameters()
    if len(dp) != len(sp):
        raise ValueError("parameter lists differ; incompatible networks")
    for d, s in zip(dp, sp):
        if d.data.shape != s.data.shape:
            raise ValueError(f"shape mismatch for {d.name}: "
                             f"{d.data.shape} vs {s.data.shape}")
        d.data[...] = s.data


def save_agent(path, net: AgentNetwork, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": net.kind,
        "seed": net.seed,
        "support_range": list(net.support_range),
        "input_scale": SIN_INPUT_SCALE if net.kind == "sin" else None,
        "window": [SOFT_TISSUE_WINDOW.lo, SOFT_TISSUE_WINDOW.hi],
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, f"agent-{net.kind}", meta, net.parameters())


def load_agent(path, expect_kind: str | None = None, *,
               dtype=np.float32) -> AgentNetwork:
    """Rebuild an agent from a checkpoint; expect_kind guards against
    loading a projection-domain net where a volume-domain one is needed."""
    kind, meta, tensors = load_checkpoint(path)
    if not kind.startswith("agent-"):
        raise ValueError(f"{path}: checkpoint kind {kind!r} is not an agent")
    agent_kind = kind.split("-", 1)[1]
    if expect_kind is not None and agent_kind != expect_kind:
        raise ValueError(f"{path}: holds a {agent_kind!r} agent, "
                         f"expected {expect_kind!r}")
    net = build_agent(agent_kind, int(meta.get("seed", 0)), dtype)
    restore_parameters(net.parameters(), tensors, dtype)
    return net


def normalize_views(values: np.ndarray) -> np.ndarray:
    """Scale raw line integrals into the network input range."""
    return np.asarray(values, dtype=np.float64) * SIN_INPUT_SCALE


def normalize_patches_hu(values: np.ndarray,
                         window: EvalWindow = SOFT_TISSUE_WINDOW) -> np.ndarray:
    """Window-normalize HU data to [0, 1] for network input."""
    v = np.asarray(values, dtype=np.float64)
    return (window.clip(v) - window.lo) / window.width


def select_actions(net: AgentNetwork, states: np.ndarray, noise_mode: str = "zero"):
    """Greedy action pair per state; ties resolve to the lowest index.

    noise_mode "sample" explores with fresh parameter noise, "frozen" reuses
    the last noise draw, "zero" is deterministic.
    """
    net.set_noise_mode(noise_mode)
    qp, qt = net.expected_qs(states)
    return np.argmax(qp, axis=1), np.argmax(qt, axis=1)


def init_sigma_2d(n_views: int, mode: str,
                  rng: np.random.Generator | None = None) -> BilateralParams2D:
    """Initial per-view widths: min/max/middle of the integer range, or a
    uniform integer draw per view and per width."""
    lo, hi = SIN_SIGMA_RANGE
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}, expected one of {INIT_MODES}")
    if mode == "random":
        if rng is None:
            raise ValueError("random init needs an rng")
        si = rng.integers(lo, hi + 1, size=n_views).astype(np.float64)
        ss = rng.integers(lo, hi + 1, size=n_views).astype(np.float64)
    else:
        val = {"min": lo, "max": hi, "middle": (lo + hi) // 2}[mode]
        si = np.full(n_views, float(val))
        ss = np.full(n_views, float(val))
    return BilateralParams2D(si, ss)


def init_sigma_3d(shape, mode: str,
                  rng: np.random.Generator | None = None) -> BilateralParams3D:
    lo, hi = VOL_SIGMA_RANGE
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}, expected one of {INIT_MODES}")
    if mode == "random":
        if rng is None:
            raise ValueError("random init needs an rng")
        si = rng.integers(lo, hi + 1, size=shape).astype(np.float64)
        ss = rng.integers(lo, hi + 1, size=shape).astype(np.float64)
    else:
        val = {"min": lo, "max": hi, "middle": (lo + hi) // 2}[mode]
        si = np.full(shape, float(val))
        ss = np.full(shape, float(val))
    return BilateralParams3D(si, ss)


def _apply(arr: np.ndarray, index, factor: float) -> None:
    arr[index] = np.clip(arr[index] * factor, SIGMA_MIN, SIGMA_MAX)


def apply_action_2d(params: BilateralParams2D, view: int, i_choice: int,
                    s_choice: int) -> BilateralParams2D:
    """Scale one view's widths by the chosen factors, one per branch
    (i_choice drives sigma_i, s_choice drives sigma_s), clamped to
    [SIGMA_MIN, SIGMA_MAX].  Mutates and returns params."""
    if not (0 <= view < params.n_views):
        raise ValueError(f"view {view} out of range [0, {params.n_views})")
    _apply(params.sigma_i, view, _tune_factor(i_choice))
    _apply(params.sigma_s, view, _tune_factor(s_choice))
    return params


def apply_action_3d(params: BilateralParams3D, location, i_choice: int,
                    s_choice: int) -> BilateralParams3D:
    """Scale both width fields at a voxel (3 ints) or box (3 slices), one
    factor per branch.  Mutates and returns params."""
    if len(location) != 3:
        raise ValueError("location must be three indices or slices")
    shape = params.shape
    idx = []
    for loc, n in zip(location, shape):
        if isinstance(loc, slice):
            start, stop, _ = loc.indices(n)
            if stop <= start:
                raise ValueError(f"empty slice {loc} for axis of extent {n}")
            idx.append(loc)
        else:
            loc = int(loc)
            if not (0 <= loc < n):
                raise ValueError(f"index {loc} out of range [0, {n})")
            idx.append(loc)
    idx = tuple(idx)
    _apply(params.sigma_i, idx, _tune_factor(i_choice))
    _apply(params.sigma_s, idx, _tune_factor(s_choice))
    return params


def _tune_factor(choice: int) -> float:
    if not (0 <= choice < len(TUNE_FACTORS)):
        raise ValueError(f"tune action {choice} out of range "
                         f"[0, {len(TUNE_FACTORS)})")
    return TUNE_FACTORS[choice]
