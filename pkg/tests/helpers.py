"""Independent reference implementations shared by the test suite.

Everything here is written for clarity over speed (plain Python loops,
direct formulas) so it can serve as a trustworthy oracle against the
vectorized package code.
"""

from __future__ import annotations

import math

import numpy as np

WINDOW_2D = 5
WINDOW_3D = 5


def naive_bilateral_2d(image: np.ndarray, sigma_i: float,
                       sigma_s: float) -> np.ndarray:
    """Per-pixel 5x5 bilateral mean with truncated borders."""
    h, w = image.shape
    half = WINDOW_2D // 2
    out = np.zeros_like(image, dtype=np.float64)
    for r in range(h):
        for c in range(w):
            num = 0.0
            den = 0.0
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < h and 0 <= cc < w):
                        continue
                    d2 = float(dr * dr + dc * dc)
                    di = float(image[rr, cc] - image[r, c])
                    wgt = (math.exp(-d2 / (2.0 * sigma_s ** 2))
                           * math.exp(-di * di / (2.0 * sigma_i ** 2)))
                    num += wgt * image[rr, cc]
                    den += wgt
            out[r, c] = num / den
    return out


def naive_bilateral_3d(values: np.ndarray, sigma_i: np.ndarray,
                       sigma_s: np.ndarray) -> np.ndarray:
    """Per-voxel 5x5x5 bilateral mean; widths vary per voxel."""
    nx, ny, nz = values.shape
    half = WINDOW_3D // 2
    out = np.zeros_like(values, dtype=np.float64)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                si = float(sigma_i[x, y, z])
                ss = float(sigma_s[x, y, z])
                num = 0.0
                den = 0.0
                for dx in range(-half, half + 1):
                    for dy in range(-half, half + 1):
                        for dz in range(-half, half + 1):
                            xx, yy, zz = x + dx, y + dy, z + dz
                            if not (0 <= xx < nx and 0 <= yy < ny
                                    and 0 <= zz < nz):
                                continue
                            d2 = float(dx * dx + dy * dy + dz * dz)
                            di = float(values[xx, yy, zz] - values[x, y, z])
                            wgt = (math.exp(-d2 / (2.0 * ss * ss))
                                   * math.exp(-di * di / (2.0 * si * si)))
                            num += wgt * values[xx, yy, zz]
                            den += wgt
                out[x, y, z] = num / den
    return out


def scalar_double_q_target(q_online_next, q_target_next, reward, terminal,
                           gamma):
    """One transition, one branch: r + gamma * Q'(s', argmax_a Q(s', a))."""
    if terminal:
        return float(reward)
    a_star = int(np.argmax(np.asarray(q_online_next)))
    return float(reward) + gamma * float(q_target_next[a_star])


def scalar_two_branch_loss(online, target, batch, gamma):
    """Literal squared error, one transition at a time:
    [2r + g Q'(s', p*) + g Q'(s', t*) - (Q(s,p) + Q(s,t))]^2, averaged."""
    total = 0.0
    for t in batch:
        online.set_noise_mode("zero")
        target.set_noise_mode("zero")
        qp, qt = online.expected_qs(t.state[None])
        q_sum = float(qp[0, t.i_choice]) + float(qt[0, t.s_choice])
        if t.terminal:
            tgt = 2.0 * t.reward
        else:
            qp_on, qt_on = online.expected_qs(t.next_state[None])
            qp_tg, qt_tg = target.expected_qs(t.next_state[None])
            tgt = (2.0 * t.reward
                   + gamma * float(qp_tg[0, int(np.argmax(qp_on[0]))])
                   + gamma * float(qt_tg[0, int(np.argmax(qt_on[0]))]))
        total += (tgt - q_sum) ** 2
    return total / len(batch)


class TableAgent:
    """Q-tables posing as an agent: state id lives in state[0]."""

    def __init__(self, qp: np.ndarray, qt: np.ndarray):
        self.qp = np.asarray(qp, dtype=np.float64)
        self.qt = np.asarray(qt, dtype=np.float64)

    def set_noise_mode(self, mode):
        pass

    def expected_qs(self, states):
        idx = np.asarray(states)[:, 0].astype(int)
        return self.qp[idx].copy(), self.qt[idx].copy()


def naive_ssim(x: np.ndarray, y: np.ndarray, data_range: float,
               size: int = 11, sigma: float = 1.5, k1: float = 0.01,
               k2: float = 0.03) -> float:
    """Sliding-window SSIM with explicit loops over valid positions."""
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    kern = np.outer(g, g)
    kern /= kern.sum()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, w = x.shape
    vals = []
    for r in range(h - size + 1):
        for c in range(w - size + 1):
            px = x[r:r + size, c:c + size]
            py = y[r:r + size, c:c + size]
            mx = float((kern * px).sum())
            my = float((kern * py).sum())
            vx = float((kern * px * px).sum()) - mx * mx
            vy = float((kern * py * py).sum()) - my * my
            cov = float((kern * px * py).sum()) - mx * my
            num = (2 * mx * my + c1) * (2 * cov + c2)
            den = (mx * mx + my * my + c1) * (vx + vy + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def gradcheck(forward, backward, params, x, rng, n_coords: int = 10,
              h: float = 1e-4, tol: float = 1e-3, check_input: bool = True):
    """Central-difference check of d(sum(f*G))/dtheta for random coordinates.

    forward() -> output given current parameter values and the captured x;
    backward(G) must populate param.grad and return the input gradient.
    Returns the worst relative error seen.
    """
    y = forward()
    cograd = rng.standard_normal(y.shape)

    def loss() -> float:
        return float(np.sum(forward() * cograd))

    for p in params:
        p.zero_grad()
    gx = backward(cograd)
    worst = 0.0

    def check_one(data, grad, flat_idx, label):
        nonlocal worst
        orig = data.flat[flat_idx]
        data.flat[flat_idx] = orig + h
        up = loss()
        data.flat[flat_idx] = orig - h
        dn = loss()
        data.flat[flat_idx] = orig
        numeric = (up - dn) / (2.0 * h)
        analytic = grad.flat[flat_idx]
        scale = max(abs(numeric), abs(analytic), 1e-8)
        rel = abs(numeric - analytic) / scale
        worst = max(worst, rel)
        assert rel < tol, (f"{label}[{flat_idx}]: numeric {numeric:.6g} vs "
                           f"analytic {analytic:.6g} (rel {rel:.3g})")

    for p in params:
        idxs = rng.choice(p.data.size, size=min(n_coords, p.data.size),
                          replace=False)
        for i in idxs:
            check_one(p.data, p.grad, int(i), p.name)
    if check_input:
        idxs = rng.choice(x.size, size=min(n_coords, x.size), replace=False)
        for i in idxs:
            check_one(x, gx, int(i), "input")
    return worst
