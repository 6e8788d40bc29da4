"""Training regimes over the success model and their sample-cost accounting.

A run repeatedly samples a batch of trajectories at some horizon, forms the
block gradient estimates, and ascends the raw scores.  Regimes differ only
in how they pick the training horizon:

* ``curriculum``   -- trains at stage h = 1..H, promoting a stage once its
  step probability clears 1 - epsilon;
* ``only_l1``      -- always h = 1;
* ``only_long``    -- always h = H;
* ``uniform_mix``  -- h drawn uniformly from {1..H} each update;
* ``dense_rtg``    -- h = H with the per-step reward-to-go estimator;
* ``mixture``      -- h drawn from explicit weights (the cost/compute search
  uses this to realize length-bin distributions).

Cost is tracked in trajectories and in step-tokens, where one trajectory
contributes min(reach, h) tokens (the number of steps actually executed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    PolicyParams,
    TrajectoryBatch,
    derive_rng,
    prefix_success,
    step_success,
    success_gradients,
)
from .moments import (
    DENSE,
    TERMINAL,
    DegenerateSignalError,
    _score_columns,
    analytic_moments_dense,
    analytic_moments_terminal,
    tail_stats,
    terminal_moment_stats,
)

REGIMES = ("curriculum", "only_l1", "only_long", "uniform_mix", "dense_rtg")

_STREAM_BATCH = 3
_STREAM_HORIZON = 4

OUTCOME_REACHED = "reached_target"
OUTCOME_EXHAUSTED = "budget_exhausted"
OUTCOME_ABORTED = "aborted"


class TrainingAborted(RuntimeError):
    """Raised when an update produced non-finite parameters."""


@dataclass(frozen=True)
class RegimeConfig:
    """Everything a training run needs besides the initial parameters."""

    regime: str
    H: int
    c: float
    epsilon: float
    N: int = 256
    eta: float = 0.5
    max_updates_per_stage: int = 2000
    min_reach: int = 100
    q_oracle: bool = False
    seed: int = 0
    max_trajectories: int | None = None
    max_step_tokens: int | None = None
    baseline: str = "exact"  # "exact" uses the true means; "batch" leave-one-out
    freeze_blocks: frozenset = frozenset()
    mixture_weights: tuple[float, ...] | None = None
    # Optional per-length success requirements (length, level); when set they
    # replace the default end-to-end check s_H >= c.
    bin_targets: tuple[tuple[int, float], ...] | None = None
    # Optional plateau stop: end the run when s_H improved by less than
    # plateau_tol over the last plateau_window updates.
    plateau_window: int | None = None
    plateau_tol: float = 1e-4

    def __post_init__(self) -> None:
        if self.regime not in REGIMES and self.regime != "mixture":
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 0.0 < self.c < 1.0:
            raise ValueError("target c must lie in (0, 1)")
        if (1.0 - self.epsilon) ** self.H < self.c * (1.0 - 1e-12):
            raise ValueError("promotion slack too loose: (1-eps)^H < c")
        if self.N < 1:
            raise ValueError("batch size N must be >= 1")
        if self.eta <= 0.0:
            raise ValueError("step size eta must be positive")
        if self.baseline not in ("exact", "batch"):
            raise ValueError(f"unknown baseline mode {self.baseline!r}")
        if self.regime == "mixture":
            w = self.mixture_weights
            if w is None or len(w) != self.H:
                raise ValueError("mixture regime needs one weight per horizon 1..H")
            if any(x < 0 for x in w) or sum(w) <= 0:
                raise ValueError("mixture weights must be nonnegative and not all zero")
        if self.bin_targets is not None:
            for length, level in self.bin_targets:
                if not 1 <= length <= self.H:
                    raise ValueError(f"bin target length {length} outside 1..{self.H}")
                if not 0.0 < level < 1.0:
                    raise ValueError("bin target levels must lie in (0, 1)")
        if self.plateau_window is not None and self.plateau_window < 1:
            raise ValueError("plateau window must be >= 1")


@dataclass(frozen=True)
class QEstimate:
    """Empirical conditional success rate at one depth; q_hat is None when
    no trajectory reached the step."""

    q_hat: float | None
    reach_count: int


@dataclass(frozen=True)
class TraceRecord:
    """One training-loop iteration: either a gradient update or a promotion."""

    update: int
    event: str  # "update" | "promotion" | "abort"
    stage: int
    horizon: int
    atomic_estimate: float
    block_estimates: tuple[float, ...]  # per depth 2..H, per unit dq_k
    q: tuple[float, ...]
    s_H: float
    trajectories: int
    step_tokens: int


@dataclass
class TrainingTrace:
    """Full log of a run plus the final parameters."""

    config: RegimeConfig
    records: list[TraceRecord] = field(default_factory=list)
    outcome: str = OUTCOME_EXHAUSTED
    final_params: PolicyParams | None = None

    @property
    def trajectories_total(self) -> int:
        return self.records[-1].trajectories if self.records else 0

    @property
    def step_tokens_total(self) -> int:
        return self.records[-1].step_tokens if self.records else 0

    def trajectories_to_target(self) -> int | None:
        """Trajectory count at the first record where the target was met."""
        targets = self.config.bin_targets
        for rec in self.records:
            if targets is None:
                if rec.s_H >= self.config.c:
                    return rec.trajectories
            elif all(
                float(np.prod(rec.q[:length])) >= level for length, level in targets
            ):
                return rec.trajectories
        return None


def make_schedule(regime: str, H: int, c: float, **overrides) -> RegimeConfig:
    """Regime defaults with the exact promotion slack epsilon = 1 - c**(1/H).

    The exact form keeps (1 - epsilon)**H == c, so a curriculum that promotes
    every stage is guaranteed to end at or above the target.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    if not 0.0 < c < 1.0:
        raise ValueError("target c must lie in (0, 1)")
    epsilon = 1.0 - c ** (1.0 / H)
    return RegimeConfig(regime=regime, H=H, c=c, epsilon=epsilon, **overrides)


def estimate_q(batch: TrajectoryBatch, k: int) -> QEstimate:
    """Conditional success rate at depth k among trajectories that reached it."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if not 1 <= k <= batch.horizon:
        raise ValueError(f"depth {k} out of range 1..{batch.horizon}")
    reached = batch.reach >= k
    count = int(reached.sum())
    if count == 0:
        return QEstimate(q_hat=None, reach_count=0)
    return QEstimate(q_hat=float(batch.bits[reached, k - 1].mean()), reach_count=count)


def _sample_batch(params: PolicyParams, h: int, n: int, seed: int, update: int) -> TrajectoryBatch:
    q = params.step_probabilities()[:h]
    rng = derive_rng(seed, _STREAM_BATCH, update)
    raw = rng.random((n, h)) < q
    bits = np.cumprod(raw, axis=1, dtype=np.int8)
    reach = bits.sum(axis=1, dtype=np.int64) + 1
    return TrajectoryBatch(horizon=h, bits=bits, reach=reach)


def _advantages(params: PolicyParams, batch: TrajectoryBatch, h: int,
                dense: bool, baseline: str) -> np.ndarray:
    """(n, h) advantage matrix: column j-1 is the advantage paired with step j.

    Terminal mode repeats the single terminal advantage across columns; dense
    mode uses each step's own return-to-go minus its baseline.
    """
    n = len(batch)
    if dense:
        bits = batch.bits[:, :h].astype(float)
        rtg = np.cumsum(bits[:, ::-1], axis=1)[:, ::-1]
        if baseline == "exact":
            base = np.array([tail_stats(params, j, h).b for j in range(1, h + 1)])
            return rtg - base
        total = rtg.sum(axis=0, keepdims=True)
        return rtg - (total - rtg) / (n - 1)
    rewards = batch.bits[:, h - 1].astype(float)
    if baseline == "exact":
        adv = rewards - prefix_success(params, h)
    else:
        total = rewards.sum()
        adv = rewards - (total - rewards) / (n - 1)
    return np.repeat(adv[:, None], h, axis=1)


def _block_estimates(params: PolicyParams, batch: TrajectoryBatch, h: int,
                     dense: bool, baseline: str) -> tuple[float, np.ndarray]:
    """Atomic estimate (raw-score units) and per-depth estimates (per unit dq)."""
    q = params.step_probabilities()[:h]
    coef = _score_columns(batch, q)
    adv = _advantages(params, batch, h, dense, baseline)
    weighted = adv * coef
    d_atomic, _ = success_gradients(params)
    atomic = float((weighted @ d_atomic[:h]).mean())
    per_depth = weighted.mean(axis=0)  # entry j-1 is the estimate for depth j
    return atomic, per_depth


def train(params: PolicyParams, config: RegimeConfig) -> TrainingTrace:
    """Run one regime until the target, the budget, or an abort.

    Every iteration costs one batch.  Under the curriculum the batch is first
    used to check promotion of the current stage; a promoted stage advances
    without a gradient step (with ``q_oracle`` promotion is checked against
    the true step probability and consumes nothing).
    """
    if params.horizon != config.H:
        raise ValueError("params.horizon must equal config.H")
    if config.baseline == "batch" and config.N < 2:
        raise ValueError("leave-one-out baseline needs N >= 2")
    trace = TrainingTrace(config=config)
    dense = config.regime == "dense_rtg"
    horizon_rng = derive_rng(config.seed, _STREAM_HORIZON)
    mixture_p = None
    if config.regime == "mixture":
        w = np.asarray(config.mixture_weights, dtype=float)
        mixture_p = w / w.sum()

    stage = 1
    stage_updates = 0
    cum_traj = 0
    cum_tokens = 0
    update = 0
    max_total_updates = config.max_updates_per_stage * config.H

    def target_met() -> bool:
        if config.bin_targets is None:
            return prefix_success(params, config.H) >= config.c
        return all(
            prefix_success(params, length) >= level
            for length, level in config.bin_targets
        )

    def snapshot(event: str, horizon: int, atomic: float, blocks: np.ndarray) -> TraceRecord:
        q = params.step_probabilities()
        return TraceRecord(
            update=update,
            event=event,
            stage=stage,
            horizon=horizon,
            atomic_estimate=atomic,
            block_estimates=tuple(float(x) for x in blocks),
            q=tuple(float(x) for x in q),
            s_H=float(np.prod(q)),
            trajectories=cum_traj,
            step_tokens=cum_tokens,
        )

    while True:
        # Oracle promotion costs no samples; sweep as far as the true q allows.
        if config.regime == "curriculum" and config.q_oracle:
            while stage < config.H and step_success(params, stage) >= 1.0 - config.epsilon:
                stage += 1
                stage_updates = 0

        if target_met():
            trace.outcome = OUTCOME_REACHED
            break
        if config.max_trajectories is not None and cum_traj + config.N > config.max_trajectories:
            break
        if config.max_step_tokens is not None and cum_tokens >= config.max_step_tokens:
            break
        if config.plateau_window is not None and len(trace.records) > config.plateau_window:
            window = trace.records[-config.plateau_window - 1 :]
            if window[-1].s_H - window[0].s_H < config.plateau_tol:
                break
        if config.regime == "curriculum":
            if stage_updates >= config.max_updates_per_stage:
                break
        elif update >= max_total_updates:
            break

        if config.regime == "curriculum":
            h = stage
        elif config.regime == "only_l1":
            h = 1
        elif config.regime in ("only_long", "dense_rtg"):
            h = config.H
        elif config.regime == "uniform_mix":
            h = int(horizon_rng.integers(1, config.H + 1))
        else:  # mixture
            h = int(horizon_rng.choice(config.H, p=mixture_p)) + 1

        update += 1
        batch = _sample_batch(params, h, config.N, config.seed, update)
        cum_traj += config.N
        cum_tokens += int(batch.executed_steps().sum())

        if config.regime == "curriculum" and not config.q_oracle and stage < config.H:
            est = estimate_q(batch, stage)
            if (
                est.reach_count >= config.min_reach
                and est.q_hat is not None
                and est.q_hat >= 1.0 - config.epsilon
            ):
                stage += 1
                stage_updates = 0
                trace.records.append(snapshot("promotion", h, 0.0, np.zeros(config.H - 1)))
                continue

        atomic, per_depth = _block_estimates(params, batch, h, dense, config.baseline)
        theta_depth = np.array(params.theta_depth)
        _, d_depth = success_gradients(params)
        new_atomic = params.theta_atomic
        if 0 not in config.freeze_blocks:
            new_atomic = params.theta_atomic + config.eta * atomic
        for j in range(2, h + 1):
            if j in config.freeze_blocks:
                continue
            theta_depth[j - 2] += config.eta * per_depth[j - 1] * d_depth[j - 1]
        if not (math.isfinite(new_atomic) and np.all(np.isfinite(theta_depth))):
            trace.records.append(snapshot("abort", h, atomic, per_depth[1:]))
            trace.outcome = OUTCOME_ABORTED
            trace.final_params = params
            return trace
        params = params.with_scores(new_atomic, theta_depth)
        stage_updates += 1
        blocks_full = np.zeros(config.H - 1)
        blocks_full[: max(h - 1, 0)] = per_depth[1:h]
        trace.records.append(snapshot("update", h, atomic, blocks_full))

    trace.final_params = params
    if not trace.records:
        # A run that starts at (or is budgeted to do) nothing still reports
        # its initial state.
        trace.records.append(snapshot("initial", 0, 0.0, np.zeros(config.H - 1)))
    return trace


def required_batch_for(snr_at_one: float, beta: float) -> int:
    """Smallest N with N * snr_at_one >= beta / (1 - beta)."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if snr_at_one <= 0.0 or math.isnan(snr_at_one):
        raise DegenerateSignalError("per-sample SNR is zero or undefined")
    if math.isinf(snr_at_one):
        return 1
    threshold = beta / (1.0 - beta)
    return max(1, math.ceil(threshold / snr_at_one))


def required_batch_probe(
    params: PolicyParams, h: int, k: int, beta: float, mode: str = TERMINAL
) -> int:
    """Batch size needed for a beta-fraction of the noiseless gain at (h, k)."""
    if mode == TERMINAL:
        report = analytic_moments_terminal(params, h, k, 1)
    elif mode == DENSE:
        report = analytic_moments_dense(params, h, k, 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if report.degenerate:
        raise DegenerateSignalError(f"no signal at (h={h}, k={k})")
    return required_batch_for(report.snr, beta)


def scaling_experiment(
    H_list: list[int],
    regime: str,
    beta: float,
    delta: float,
    seed: int = 0,
    L: float = 1.0,
) -> list[dict]:
    """Required batch sizes across horizons for one regime.

    ``full_horizon`` probes (h, k) = (H, H) on a fresh delta-bounded init;
    ``curriculum`` probes the frontier state (s_{k-1} = c, q_k = 1 - eps with
    c = 0.5), which is a property of the schedule rather than of a particular
    parameter draw.  Noiseless gains are per unit ||dq_k||^2 at the given L.
    """
    from .model import init_params

    if regime not in ("full_horizon", "curriculum"):
        raise ValueError("regime must be 'full_horizon' or 'curriculum'")
    if not H_list:
        raise ValueError("H_list must be nonempty")
    rows = []
    for H in H_list:
        if regime == "full_horizon":
            params = init_params(H, delta, seed)
            s = prefix_success(params, H - 1)
            q = step_success(params, H)
            report = terminal_moment_stats(s, q, 1.0, 1)
            n_star = required_batch_for(report.snr, beta)
            rows.append(
                {
                    "regime": regime,
                    "H": H,
                    "h": H,
                    "k": H,
                    "s": s,
                    "q": q,
                    "snr_at_one": report.snr,
                    "N_star": n_star,
                    "noiseless_gain": report.mean_grad**2 / (2.0 * L),
                }
            )
        else:
            c = 0.5
            epsilon = 1.0 - c ** (1.0 / H)
            q = 1.0 - epsilon
            report = terminal_moment_stats(c, q, 1.0, 1)
            n_star = required_batch_for(report.snr, beta)
            rows.append(
                {
                    "regime": regime,
                    "H": H,
                    "h": H,
                    "k": H,
                    "s": c,
                    "q": q,
                    "snr_at_one": report.snr,
                    "N_star": n_star,
                    "noiseless_gain": report.mean_grad**2 / (2.0 * L),
                }
            )
    return rows


def compare_regimes(
    base_params: PolicyParams,
    configs: list[RegimeConfig],
    budget: int,
) -> list[dict]:
    """Run several regimes from the same start under one trajectory budget."""
    if not configs:
        raise ValueError("need at least one config")
    H, c = configs[0].H, configs[0].c
    for cfg in configs:
        if (cfg.H, cfg.c) != (H, c):
            raise ValueError("all configs must share H and c")
    rows = []
    for cfg in configs:
        run_cfg = replace(cfg, max_trajectories=budget)
        trace = train(base_params, run_cfg)
        final_q = trace.final_params.step_probabilities()
        rows.append(
            {
                "regime": cfg.regime,
                "seed": cfg.seed,
                "outcome": trace.outcome,
                "final_s_H": float(np.prod(final_q)),
                "trajectories_to_target": trace.trajectories_to_target(),
                "trajectories_total": trace.trajectories_total,
                "step_tokens_total": trace.step_tokens_total,
                "updates": sum(1 for r in trace.records if r.event == "update"),
            }
        )
    return rows
