"""Multi-step success model: parameters, probabilities, and trajectory sampling.

A policy attempting a length-``h`` problem either solves each step in order
or fails at some step and stays failed (absorbing failure).  Step ``j``
succeeds with probability ``q_j = p * sigma_j`` conditional on all earlier
steps being correct, where ``p`` is the per-step atomic reliability shared by
every depth and ``sigma_j`` is an extra depth-specific reliability factor
(``sigma_1 == 1`` by convention, so depth 1 is governed by ``p`` alone).

Both ``p`` and ``sigma_j`` are logistic maps of unconstrained real scores so
that gradients exist in closed form and probabilities stay inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Raw scores are clipped here before the logistic map; beyond +/-36 the
# logistic saturates below float64 resolution anyway.
SCORE_CLAMP = 36.0

_INIT_RETRIES = 1000

# Stream tags used to derive independent RNG streams from one master seed.
_STREAM_TRAJECTORY = 0
_STREAM_INIT = 1


class DegenerateSignalError(ValueError):
    """Raised when a requested quantity is undefined because q is 0 or 1."""


def logistic(x: float | np.ndarray) -> float | np.ndarray:
    """Numerically safe logistic map applied to clamped raw scores."""
    z = np.clip(x, -SCORE_CLAMP, SCORE_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def logit(prob: float) -> float:
    """Inverse logistic; prob must lie strictly inside (0, 1)."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"logit requires a probability in (0, 1), got {prob}")
    return float(np.log(prob) - np.log1p(-prob))


def derive_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Derive an independent generator from (seed, stream, index).

    Counter-style derivation: the stream consumed for one purpose never
    depends on how many draws another purpose made, so parallel sampling is
    order-independent.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, index)))


@dataclass(frozen=True)
class PolicyParams:
    """Unconstrained scores inducing the per-step success probabilities.

    ``theta_depth[i]`` holds the score for depth ``i + 2``; depth 1 has no
    score of its own because ``sigma_1 == 1``.
    """

    horizon: int
    theta_atomic: float
    theta_depth: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.theta_depth) != self.horizon - 1:
            raise ValueError(
                f"expected {self.horizon - 1} depth scores for horizon "
                f"{self.horizon}, got {len(self.theta_depth)}"
            )

    @property
    def atomic_reliability(self) -> float:
        """p, the shared single-step reliability."""
        return float(logistic(self.theta_atomic))

    def depth_reliability(self, j: int) -> float:
        """sigma_j for 1 <= j <= horizon (sigma_1 is identically 1)."""
        self._check_depth(j)
        if j == 1:
            return 1.0
        return float(logistic(self.theta_depth[j - 2]))

    def step_probabilities(self) -> np.ndarray:
        """Vector (q_1, ..., q_H)."""
        p = self.atomic_reliability
        sigmas = np.ones(self.horizon)
        if self.horizon > 1:
            sigmas[1:] = logistic(np.asarray(self.theta_depth))
        return p * sigmas

    def _check_depth(self, j: int) -> None:
        if not 1 <= j <= self.horizon:
            raise ValueError(f"depth {j} out of range 1..{self.horizon}")

    def with_scores(self, theta_atomic: float, theta_depth: np.ndarray) -> "PolicyParams":
        """Copy with new raw scores, clipped to the evaluation clamp."""
        clipped = np.clip(theta_depth, -SCORE_CLAMP, SCORE_CLAMP)
        atomic = float(np.clip(theta_atomic, -SCORE_CLAMP, SCORE_CLAMP))
        return replace(self, theta_atomic=atomic, theta_depth=tuple(float(t) for t in clipped))


@dataclass(frozen=True)
class Trajectory:
    """One sampled attempt: correctness bits with absorbing failure.

    ``reach`` is the index of the first failed step, or ``horizon + 1`` when
    every step succeeded.
    """

    horizon: int
    bits: tuple[int, ...]
    reach: int

    def __post_init__(self) -> None:
        if len(self.bits) != self.horizon:
            raise ValueError("bit count must equal horizon")


@dataclass(frozen=True)
class TrajectoryBatch:
    """Column-wise batch of trajectories sampled at a common horizon.

    ``bits`` has shape (n, horizon) with absorbing zeros after the first
    failure; ``reach`` has shape (n,).
    """

    horizon: int
    bits: np.ndarray
    reach: np.ndarray

    def __len__(self) -> int:
        return self.bits.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            horizon=self.horizon,
            bits=tuple(int(b) for b in self.bits[i]),
            reach=int(self.reach[i]),
        )

    def executed_steps(self) -> np.ndarray:
        """Number of steps actually attempted per trajectory, min(reach, h)."""
        return np.minimum(self.reach, self.horizon)


def init_params(H: int, delta: float, seed: int) -> PolicyParams:
    """Draw parameters whose induced q_j all lie in [delta, 1 - delta].

    q_1 is drawn first and fixes p; each deeper q_j is drawn uniformly from
    the same band and inverted to sigma_j = q_j / p, resampling draws that
    would push sigma_j outside (0, 1).
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
    rng = derive_rng(seed, _STREAM_INIT)
    p = float(rng.uniform(delta, 1.0 - delta))
    theta_depth = []
    for _ in range(2, H + 1):
        for _attempt in range(_INIT_RETRIES):
            q_target = float(rng.uniform(delta, 1.0 - delta))
            sigma = q_target / p
            if 0.0 < sigma < 1.0:
                theta_depth.append(logit(sigma))
                break
        else:
            raise ValueError(
                f"could not place q in [{delta}, {1 - delta}] under p={p:.6f} "
                f"after {_INIT_RETRIES} draws"
            )
    return PolicyParams(horizon=H, theta_atomic=logit(p), theta_depth=tuple(theta_depth))


def params_from_probabilities(q: "np.ndarray | list[float]") -> PolicyParams:
    """Build params inducing the given q_1..q_H as closely as the map allows.

    sigma_j = q_j / q_1 must lie in (0, 1]; sigma_j == 1 is realized by a
    score at the clamp, which leaves q_j about one ulp below the request.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or len(q) < 1:
        raise ValueError("q must be a non-empty 1-d sequence")
    if not np.all((q > 0.0) & (q < 1.0)):
        raise ValueError("all q_j must lie strictly inside (0, 1)")
    p = float(q[0])
    theta_depth = []
    for j in range(1, len(q)):
        sigma = float(q[j]) / p
        if sigma > 1.0:
            raise ValueError(
                f"q_{j + 1}={q[j]} exceeds q_1={p}; unreachable since sigma <= 1"
            )
        theta_depth.append(SCORE_CLAMP if sigma == 1.0 else logit(sigma))
    return PolicyParams(horizon=len(q), theta_atomic=logit(p), theta_depth=tuple(theta_depth))


def step_success(params: PolicyParams, j: int) -> float:
    """q_j = p * sigma_j."""
    params._check_depth(j)
    return params.atomic_reliability * params.depth_reliability(j)


def prefix_success(params: PolicyParams, i: int) -> float:
    """s_i, the probability that the first i steps all succeed (s_0 = 1)."""
    if not 0 <= i <= params.horizon:
        raise ValueError(f"prefix length {i} out of range 0..{params.horizon}")
    if i == 0:
        return 1.0
    return float(np.prod(params.step_probabilities()[:i]))


def success_gradients(params: PolicyParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact (dq_j/dtheta_atomic, dq_j/dtheta_depth_j) for every depth j.

    The depth-gradient entry for j = 1 is 0 since there is no depth score.
    """
    p = params.atomic_reliability
    sigmas = np.ones(params.horizon)
    if params.horizon > 1:
        sigmas[1:] = logistic(np.asarray(params.theta_depth))
    d_atomic = sigmas * p * (1.0 - p)
    d_depth = np.zeros(params.horizon)
    d_depth[1:] = p * sigmas[1:] * (1.0 - sigmas[1:])
    return d_atomic, d_depth


def sample_trajectories(params: PolicyParams, h: int, n: int, seed: int) -> TrajectoryBatch:
    """Sample n independent trajectories of horizon h, deterministically.

    Trajectory i always consumes row i of the derived uniform block, so the
    result is independent of any parallel execution order.
    """
    params._check_depth(h)
    if n < 1:
        raise ValueError("n must be >= 1")
    q = params.step_probabilities()[:h]
    rng = derive_rng(seed, _STREAM_TRAJECTORY)
    raw = rng.random((n, h)) < q
    bits = np.cumprod(raw, axis=1, dtype=np.int8)
    reach = bits.sum(axis=1, dtype=np.int64) + 1
    return TrajectoryBatch(horizon=h, bits=bits, reach=reach)


def sample_trajectory(params: PolicyParams, h: int, seed: int) -> Trajectory:
    """Sample a single trajectory (see ``sample_trajectories``)."""
    return sample_trajectories(params, h, 1, seed)[0]


def terminal_reward(traj: Trajectory, h: int) -> int:
    """1 iff the first h steps all succeeded."""
    if h > traj.horizon:
        raise ValueError(f"reward horizon {h} exceeds trajectory horizon {traj.horizon}")
    if h < 1:
        raise ValueError("reward horizon must be >= 1")
    # Absorbing structure: bit h-1 is 1 only if every earlier bit is 1.
    return int(traj.bits[h - 1])


def dense_reward_vector(traj: Trajectory, k: int, h: int) -> tuple[int, ...]:
    """(R'_k, ..., R'_h) where R'_t = 1 iff the prefix through t is correct."""
    if not 1 <= k <= h <= traj.horizon:
        raise ValueError(f"need 1 <= k <= h <= horizon, got k={k}, h={h}, horizon={traj.horizon}")
    return tuple(int(b) for b in traj.bits[k - 1 : h])


def max_reliable_horizon(params: PolicyParams, c: float) -> int:
    """Largest h in 0..H with s_h >= c (0 when even one step is too weak)."""
    if not 0.0 < c < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {c}")
    s = np.cumprod(params.step_probabilities())
    return int(np.sum(s >= c))
