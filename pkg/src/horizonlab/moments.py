"""Policy-gradient estimators and their exact moments.

Everything here is expressed "per unit grad q_k": block estimates are the
scalar coefficients that multiply dq_k/dtheta_k, which keeps the estimator
algebra independent of the logistic parameterization.  The training loop
applies the chain rule separately.

Closed forms implemented below, writing s = s_{k-1}, q = q_k and
T = q_{k+1} * ... * q_h for the tail product:

terminal estimator, constant baseline mu_h = s_h:
    mean      = s T
    variance  = (s / N) T [ (1-q) + s q T (s q - 3(1-q)) ] / (q (1-q))
    snr       = N s T q (1-q) / [ (1-q) + s q T (s q - 3(1-q)) ]

dense (reward-to-go) estimator, constant baseline b_k = s q Q*:
    Q*    = 1 + sum_t prod_{j<=k+t} tail q   (expected return-to-go | success)
    Sigma = 1 + sum_t (2t+1) prod            (its second-moment companion)
    V     = Sigma - Q*^2
    mean      = s Q*
    variance  = (s / N) [ V/q + Q*^2 (1/q - 3 s + s^2 q + s^2 q^2/(1-q)) ]
    snr       = N s q (1-q) / [ (Sigma/Q*^2)(1-q) + s q (s q - 3(1-q)) ]

At h == k the tail is empty (T = Q* = Sigma = 1, V = 0) and the two
estimators coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import (
    DegenerateSignalError,
    PolicyParams,
    Trajectory,
    TrajectoryBatch,
    derive_rng,
    prefix_success,
    step_success,
    success_gradients,
)

_STREAM_REPLICATE = 2

# Steps whose q sits within an ulp of 0 or 1 (raw score at the clamp) carry
# no usable gradient; their score coefficients are treated as exactly zero.
_SATURATION = 1e-15

TERMINAL = "terminal"
DENSE = "dense"


@dataclass(frozen=True)
class TailStats:
    """Exact tail quantities after block k at training horizon h."""

    T: float
    Qstar: float
    Sigma: float
    V: float
    b: float


@dataclass(frozen=True)
class MomentReport:
    """Mean / variance / SNR of one block estimator.

    ``mean_grad`` is per unit dq_k/dtheta_k and ``variance`` is per unit of
    its square, already divided by the batch size N.  ``snr`` is
    ``mean_grad**2 / variance``; it is ``inf`` for a noiseless nonzero
    signal and the report is flagged ``degenerate`` when both the mean and
    the variance vanish (0/0 has no meaningful value).
    """

    estimator: str
    k: int
    h: int
    N: int
    mean_grad: float
    variance: float
    snr: float
    degenerate: bool = False
    replicates: int | None = None


@dataclass(frozen=True)
class ImprovementBound:
    """One-step expected objective gain under an L-smoothness assumption.

    ``noiseless_gain`` is grad_norm_sq / (2 L); the achievable ``bound``
    shrinks by 1 / (1 + 1/snr), reaching the noiseless gain as snr -> inf.
    """

    grad_norm_sq: float
    L: float
    snr: float
    noiseless_gain: float
    bound: float


def _as_batch(batch: "TrajectoryBatch | Iterable[Trajectory]") -> TrajectoryBatch:
    if isinstance(batch, TrajectoryBatch):
        return batch
    trajectories = list(batch)
    if not trajectories:
        raise ValueError("batch must be nonempty")
    horizon = trajectories[0].horizon
    bits = np.array([t.bits for t in trajectories], dtype=np.int8)
    reach = np.array([t.reach for t in trajectories], dtype=np.int64)
    return TrajectoryBatch(horizon=horizon, bits=bits, reach=reach)


def score_block(params: PolicyParams, traj: Trajectory, k: int) -> float:
    """Score-function coefficient of block k for one trajectory.

    Zero unless step k was reached; otherwise (C_k - q_k) / (q_k (1 - q_k)).
    The caller multiplies by dq_k/dtheta_k.
    """
    if not 1 <= k <= traj.horizon:
        raise ValueError(f"block {k} out of range 1..{traj.horizon}")
    if traj.reach < k:
        return 0.0
    q = step_success(params, k)
    if q < _SATURATION or q > 1.0 - _SATURATION:
        # No gradient can flow through a saturated step.
        return 0.0
    return (traj.bits[k - 1] - q) / (q * (1.0 - q))


def _score_columns(batch: TrajectoryBatch, q: np.ndarray) -> np.ndarray:
    """(n, h) matrix of per-step score coefficients, zero where not sampled."""
    n, h = batch.bits.shape
    steps = np.arange(1, h + 1)
    sampled = steps[None, :] <= batch.reach[:, None]
    denom = q * (1.0 - q)
    safe = (q > _SATURATION) & (q < 1.0 - _SATURATION)
    coef = np.zeros((n, h))
    if np.any(safe):
        coef[:, safe] = (batch.bits[:, safe] - q[safe]) / denom[safe]
    return np.where(sampled, coef, 0.0)


def reinforce_batch_estimate(
    params: PolicyParams,
    batch: "TrajectoryBatch | Iterable[Trajectory]",
    h: int,
    k: int,
) -> float:
    """Terminal-reward REINFORCE estimate for block k, per unit dq_k.

    Uses the exact constant baseline mu_h = s_h computed from the params.
    """
    b = _as_batch(batch)
    if b.horizon < h:
        raise ValueError(f"batch horizon {b.horizon} is below training horizon {h}")
    if not 1 <= k <= h:
        raise ValueError(f"block {k} out of range 1..{h}")
    if len(b) == 0:
        raise ValueError("batch must be nonempty")
    q = params.step_probabilities()[:h]
    mu = prefix_success(params, h)
    rewards = b.bits[:, h - 1].astype(float)
    coef = _score_columns(b, q)[:, k - 1]
    return float(np.mean((rewards - mu) * coef))


def rtg_batch_estimate(
    params: PolicyParams,
    batch: "TrajectoryBatch | Iterable[Trajectory]",
    h: int,
    k: int,
) -> float:
    """Dense reward-to-go estimate for block k with constant baseline b_k."""
    b = _as_batch(batch)
    if b.horizon < h:
        raise ValueError(f"batch horizon {b.horizon} is below training horizon {h}")
    if not 1 <= k <= h:
        raise ValueError(f"block {k} out of range 1..{h}")
    if len(b) == 0:
        raise ValueError("batch must be nonempty")
    q = params.step_probabilities()[:h]
    stats = tail_stats(params, k, h)
    returns = b.bits[:, k - 1 : h].astype(float).sum(axis=1)
    coef = _score_columns(b, q)[:, k - 1]
    return float(np.mean((returns - stats.b) * coef))


def tail_stats(params: PolicyParams, k: int, h: int) -> TailStats:
    """Exact T, Q*, Sigma, V and baseline b for block k at horizon h."""
    if not 1 <= k <= h <= params.horizon:
        raise ValueError(f"need 1 <= k <= h <= H, got k={k}, h={h}, H={params.horizon}")
    q = params.step_probabilities()
    return _tail_stats_from_q(q[:h], k)


def _tail_stats_from_q(q: np.ndarray, k: int) -> TailStats:
    tail = q[k:]
    prods = np.cumprod(tail) if len(tail) else np.array([])
    T = float(prods[-1]) if len(prods) else 1.0
    Qstar = 1.0 + float(prods.sum())
    t = np.arange(1, len(prods) + 1)
    Sigma = 1.0 + float(((2 * t + 1) * prods).sum())
    V = Sigma - Qstar * Qstar
    s_prev = float(np.prod(q[: k - 1])) if k > 1 else 1.0
    b = s_prev * float(q[k - 1]) * Qstar
    return TailStats(T=T, Qstar=Qstar, Sigma=Sigma, V=V, b=b)


def terminal_moment_stats(s: float, q: float, T: float, N: int, h: int = 0, k: int = 0) -> MomentReport:
    """Closed-form terminal-estimator moments from the scalars (s, q, T)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if q in (0.0, 1.0):
        raise DegenerateSignalError(f"q_k must lie strictly inside (0, 1), got {q}")
    mean = s * T
    denom = (1.0 - q) + s * q * T * (s * q - 3.0 * (1.0 - q))
    variance = (s / N) * T * denom / (q * (1.0 - q))
    if variance == 0.0:
        snr = math.inf if mean != 0.0 else math.nan
        return MomentReport(TERMINAL, k, h, N, mean, variance, snr, degenerate=mean == 0.0)
    snr = N * (s * T * q * (1.0 - q) / denom)
    return MomentReport(TERMINAL, k, h, N, mean, variance, snr)


def dense_moment_stats(
    s: float, q: float, tail_q: Sequence[float], N: int, h: int = 0, k: int = 0
) -> MomentReport:
    """Closed-form dense-estimator moments from s, q and the tail q_j."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if q in (0.0, 1.0):
        raise DegenerateSignalError(f"q_k must lie strictly inside (0, 1), got {q}")
    full = np.concatenate([[q], np.asarray(tail_q, dtype=float)])
    stats = _tail_stats_from_q(full, 1)
    mean = s * stats.Qstar
    variance = (s / N) * (
        stats.V / q
        + stats.Qstar**2 * (1.0 / q - 3.0 * s + s * s * q + s * s * q * q / (1.0 - q))
    )
    if variance == 0.0:
        snr = math.inf if mean != 0.0 else math.nan
        return MomentReport(DENSE, k, h, N, mean, variance, snr, degenerate=mean == 0.0)
    denom = (stats.Sigma / stats.Qstar**2) * (1.0 - q) + s * q * (s * q - 3.0 * (1.0 - q))
    snr = N * (s * q * (1.0 - q) / denom)
    return MomentReport(DENSE, k, h, N, mean, variance, snr)


def analytic_moments_terminal(params: PolicyParams, h: int, k: int, N: int) -> MomentReport:
    """Exact moments of the terminal REINFORCE block estimate."""
    stats = tail_stats(params, k, h)
    s = prefix_success(params, k - 1)
    q = step_success(params, k)
    return terminal_moment_stats(s, q, stats.T, N, h=h, k=k)


def analytic_moments_dense(params: PolicyParams, h: int, k: int, N: int) -> MomentReport:
    """Exact moments of the dense reward-to-go block estimate."""
    if not 1 <= k <= h <= params.horizon:
        raise ValueError(f"need 1 <= k <= h <= H, got k={k}, h={h}, H={params.horizon}")
    s = prefix_success(params, k - 1)
    q = params.step_probabilities()
    return dense_moment_stats(s, float(q[k - 1]), q[k:h], N, h=h, k=k)


def _atomic_values_terminal(params: PolicyParams, batch: TrajectoryBatch, h: int) -> np.ndarray:
    """Per-trajectory estimate for the shared atomic score (theta_0 units)."""
    q = params.step_probabilities()[:h]
    d_atomic, _ = success_gradients(params)
    coef = _score_columns(batch, q)
    mu = prefix_success(params, h)
    rewards = batch.bits[:, h - 1].astype(float)
    return (rewards - mu) * (coef @ d_atomic[:h])


def _atomic_values_dense(params: PolicyParams, batch: TrajectoryBatch, h: int) -> np.ndarray:
    """Dense counterpart: each step weighted by its own return-to-go advantage."""
    q = params.step_probabilities()[:h]
    d_atomic, _ = success_gradients(params)
    coef = _score_columns(batch, q)
    bits = batch.bits[:, :h].astype(float)
    # G_j = sum_{t >= j} R'_t; advantage per step uses its own baseline b_j.
    rtg = np.cumsum(bits[:, ::-1], axis=1)[:, ::-1]
    baselines = np.array([tail_stats(params, j, h).b for j in range(1, h + 1)])
    return ((rtg - baselines) * coef * d_atomic[:h]).sum(axis=1)


def empirical_snr(
    params: PolicyParams,
    h: int,
    k: int,
    N: int,
    replicates: int,
    mode: str = TERMINAL,
    seed: int = 0,
) -> MomentReport:
    """Monte Carlo check of the analytic block moments.

    Samples ``replicates`` independent batches of size N, forms the batch
    estimate for each, and reports the mean of the batch means, the
    between-batch variance, and their ratio.  Deterministic under ``seed``.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates to estimate a variance")
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode not in (TERMINAL, DENSE):
        raise ValueError(f"unknown mode {mode!r}")
    q = params.step_probabilities()[:h]
    rng = derive_rng(seed, _STREAM_REPLICATE)
    raw = rng.random((replicates * N, h)) < q
    bits = np.cumprod(raw, axis=1, dtype=np.int8)
    reach = bits.sum(axis=1, dtype=np.int64) + 1
    batch = TrajectoryBatch(horizon=h, bits=bits, reach=reach)
    coef = _score_columns(batch, q)[:, k - 1]
    if mode == TERMINAL:
        mu = prefix_success(params, h)
        values = (batch.bits[:, h - 1].astype(float) - mu) * coef
    else:
        stats = tail_stats(params, k, h)
        returns = batch.bits[:, k - 1 : h].astype(float).sum(axis=1)
        values = (returns - stats.b) * coef
    return _replicate_report(values, mode, k, h, N, replicates)


def empirical_snr_atomic(
    params: PolicyParams,
    h: int,
    N: int,
    replicates: int,
    mode: str = TERMINAL,
    seed: int = 0,
) -> MomentReport:
    """Monte Carlo SNR of the shared atomic block (all reached steps sum)."""
    if replicates < 2:
        raise ValueError("need at least 2 replicates to estimate a variance")
    if N < 1:
        raise ValueError("N must be >= 1")
    q = params.step_probabilities()[:h]
    rng = derive_rng(seed, _STREAM_REPLICATE)
    raw = rng.random((replicates * N, h)) < q
    bits = np.cumprod(raw, axis=1, dtype=np.int8)
    reach = bits.sum(axis=1, dtype=np.int64) + 1
    batch = TrajectoryBatch(horizon=h, bits=bits, reach=reach)
    if mode == TERMINAL:
        values = _atomic_values_terminal(params, batch, h)
    elif mode == DENSE:
        values = _atomic_values_dense(params, batch, h)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _replicate_report(values, mode, 0, h, N, replicates)


def _replicate_report(
    values: np.ndarray, mode: str, k: int, h: int, N: int, replicates: int
) -> MomentReport:
    means = values.reshape(replicates, N).mean(axis=1)
    grand_mean = float(means.mean())
    variance = float(means.var(ddof=1))
    if variance == 0.0:
        if grand_mean == 0.0:
            return MomentReport(
                mode, k, h, N, grand_mean, variance, math.nan,
                degenerate=True, replicates=replicates,
            )
        return MomentReport(
            mode, k, h, N, grand_mean, variance, math.inf, replicates=replicates
        )
    return MomentReport(
        mode, k, h, N, grand_mean, variance, grand_mean**2 / variance,
        replicates=replicates,
    )


def improvement_bound(grad_norm_sq: float, L: float, snr: float) -> ImprovementBound:
    """Expected one-step gain: noiseless_gain / (1 + 1/snr)."""
    if L <= 0.0:
        raise ValueError("smoothness constant L must be positive")
    if grad_norm_sq < 0.0:
        raise ValueError("grad_norm_sq must be nonnegative")
    if snr < 0.0:
        raise ValueError("snr must be nonnegative")
    noiseless = grad_norm_sq / (2.0 * L)
    if snr == 0.0:
        bound = 0.0
    elif math.isinf(snr):
        bound = noiseless
    else:
        bound = noiseless / (1.0 + 1.0 / snr)
    return ImprovementBound(grad_norm_sq, L, snr, noiseless, bound)


def expected_snr_uniform_mix(params: PolicyParams, H: int, k: int, N: int) -> float:
    """Average over h ~ Unif{1..H} of the terminal SNR for block k.

    Horizons below k give the block no signal and contribute 0.
    """
    if not 1 <= k <= H <= params.horizon:
        raise ValueError(f"need 1 <= k <= H <= {params.horizon}")
    total = 0.0
    for h in range(k, H + 1):
        total += analytic_moments_terminal(params, h, k, N).snr
    return total / H


def estimate_smoothness(
    params: PolicyParams,
    h: int,
    k: int,
    half_width: float = 6.0,
    grid_points: int = 1001,
) -> float:
    """Numerical estimate of the smoothness constant of J_h along block k.

    Scans the block's raw score over [theta - half_width, theta + half_width]
    and returns the maximum absolute second difference of J_h = s_h.  This is
    an estimate, not a certified bound.
    """
    if grid_points < 3:
        raise ValueError("need at least 3 grid points")
    if not 1 <= k <= h <= params.horizon:
        raise ValueError(f"need 1 <= k <= h <= H, got k={k}, h={h}, H={params.horizon}")
    center = params.theta_atomic if k == 1 else params.theta_depth[k - 2]
    grid = np.linspace(center - half_width, center + half_width, grid_points)
    values = np.empty(grid_points)
    depth = np.array(params.theta_depth)
    for i, theta in enumerate(grid):
        if k == 1:
            probe = params.with_scores(theta, depth)
        else:
            d = depth.copy()
            d[k - 2] = theta
            probe = params.with_scores(params.theta_atomic, d)
        values[i] = prefix_success(probe, h)
    step = grid[1] - grid[0]
    second = np.diff(values, 2) / step**2
    return float(np.max(np.abs(second)))
