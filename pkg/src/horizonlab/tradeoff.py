"""Cost-vs-compute curriculum search over length-bin sample distributions.

Training data comes in length bins, each with a per-sample cost (default:
its length).  A distribution over bins is *feasible* when a training run
drawing horizons from it reaches the accuracy target within a step-token
budget.  Starting from the uniform distribution, the search casts rays
toward the cheaper side of the probability simplex and bisects each ray for
the last feasible point, mapping out how far data cost can be pushed down
and what extra compute that costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import PolicyParams, derive_rng
from .training import RegimeConfig, TrainingTrace, train

_STREAM_RAYS = 7
_STREAM_VOTES = 8


@dataclass(frozen=True)
class CostBin:
    length: int
    cost: float

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("bin length must be >= 1")
        if self.cost <= 0.0:
            raise ValueError("bin cost must be positive")


@dataclass(frozen=True)
class CostModel:
    """Length bins, a step-token budget, and the accuracy target.

    ``target`` is either a single end-to-end level (success probability at
    the deepest bin length) or one level per bin.
    """

    bins: tuple[CostBin, ...]
    budget_step_tokens: int
    target: "float | tuple[float, ...]"

    def __post_init__(self) -> None:
        if len(self.bins) < 1:
            raise ValueError("need at least one bin")
        lengths = [b.length for b in self.bins]
        if sorted(set(lengths)) != lengths:
            raise ValueError("bin lengths must be strictly increasing")
        # A zero budget is legal and simply makes every distribution whose
        # target is not already met infeasible at the origin.
        if self.budget_step_tokens < 0:
            raise ValueError("budget must be nonnegative")
        targets = self.targets()
        if len(targets) != len(self.bins):
            raise ValueError("need one target per bin")
        if any(not 0.0 < t < 1.0 for t in targets):
            raise ValueError("targets must lie in (0, 1)")

    def targets(self) -> tuple[float, ...]:
        if isinstance(self.target, (int, float)):
            return (float(self.target),) * len(self.bins)
        return tuple(float(t) for t in self.target)

    @classmethod
    def with_default_costs(
        cls, lengths: list[int], budget_step_tokens: int, target
    ) -> "CostModel":
        return cls(
            bins=tuple(CostBin(length=l, cost=float(l)) for l in lengths),
            budget_step_tokens=budget_step_tokens,
            target=target,
        )


@dataclass(frozen=True)
class PointEvaluation:
    """One training run at one distribution over bins."""

    ray: int  # -1 for the uniform origin
    t: float  # position along the ray, in [0, t_max]
    weights: tuple[float, ...]
    distribution_cost: float
    reached_target: bool
    step_tokens: int
    trajectories: int


@dataclass(frozen=True)
class RayResult:
    index: int
    direction: tuple[float, ...]
    t_max: float
    boundary_t: float
    boundary: PointEvaluation


@dataclass
class SimplexSearchReport:
    bins: tuple[CostBin, ...]
    budget_step_tokens: int
    origin_feasible: bool
    origin: PointEvaluation | None = None
    rays: list[RayResult] = field(default_factory=list)
    evaluations: list[PointEvaluation] = field(default_factory=list)

    def boundary_points(self) -> list[PointEvaluation]:
        return [r.boundary for r in self.rays]

    def monotonicity_violations(self) -> int:
        """Rays whose evaluated feasibility is not monotone along t.

        Feasibility should hold up to the boundary and fail beyond; noisy
        feasibility checks can break this, so violations are counted and
        reported rather than raised.
        """
        bad = 0
        for ray in self.rays:
            evals = sorted(
                (e for e in self.evaluations if e.ray == ray.index), key=lambda e: e.t
            )
            ok = all(
                e.reached_target == (e.t <= ray.boundary_t + 1e-12) for e in evals
            )
            bad += 0 if ok else 1
        return bad


def distribution_cost(weights: np.ndarray, bins: tuple[CostBin, ...]) -> float:
    return float(np.dot(weights, [b.cost for b in bins]))


def _mixture_config(base: RegimeConfig, cost_model: CostModel, weights: np.ndarray,
                    seed: int) -> RegimeConfig:
    H = max(b.length for b in cost_model.bins)
    full = np.zeros(H)
    for b, w in zip(cost_model.bins, weights):
        full[b.length - 1] = w
    targets = cost_model.targets()
    bin_targets = tuple(
        (b.length, t) for b, t in zip(cost_model.bins, targets)
    )
    return replace(
        base,
        regime="mixture",
        H=H,
        mixture_weights=tuple(full),
        max_step_tokens=cost_model.budget_step_tokens,
        bin_targets=bin_targets,
        seed=seed,
    )


def evaluate_distribution(
    params: PolicyParams,
    cost_model: CostModel,
    base_config: RegimeConfig,
    weights: np.ndarray,
    seed: int,
    votes: int = 1,
    ray: int = -1,
    t: float = 0.0,
) -> PointEvaluation:
    """Run training under one bin distribution; majority vote over seeds."""
    if votes < 1 or votes % 2 == 0:
        raise ValueError("votes must be a positive odd number")
    outcomes: list[TrainingTrace] = []
    for v in range(votes):
        vote_seed = int(derive_rng(seed, _STREAM_VOTES, v).integers(2**63))
        cfg = _mixture_config(base_config, cost_model, weights, vote_seed)
        outcomes.append(train(params, cfg))
    reached = sum(1 for tr in outcomes if tr.outcome == "reached_target")
    # Report the first vote's cost figures; votes only decide feasibility.
    first = outcomes[0]
    return PointEvaluation(
        ray=ray,
        t=t,
        weights=tuple(float(w) for w in weights),
        distribution_cost=distribution_cost(weights, cost_model.bins),
        reached_target=reached * 2 > votes,
        step_tokens=first.step_tokens_total,
        trajectories=first.trajectories_total,
    )


def _cheaper_direction(rng, k: int, costs: np.ndarray) -> np.ndarray:
    """Random unit direction in the simplex tangent pointing down-cost."""
    for _ in range(1000):
        g = rng.normal(size=k)
        d = g - g.mean()
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            continue
        d /= norm
        slope = float(np.dot(d, costs))
        if abs(slope) < 1e-9:
            continue
        return d if slope < 0 else -d
    raise RuntimeError("could not draw a cost-decreasing direction")


def tradeoff_search(
    params: PolicyParams,
    cost_model: CostModel,
    base_config: RegimeConfig,
    n_rays: int = 8,
    tol: float = 1.0 / 64.0,
    votes: int = 1,
    seed: int = 0,
) -> SimplexSearchReport:
    """Bisect rays from the uniform distribution for the feasibility boundary.

    The boundary point reported for each ray is the last distribution whose
    feasibility was verified by an actual run; if even the uniform
    distribution is infeasible under the budget no rays are cast.
    """
    if len(cost_model.bins) < 2:
        raise ValueError("the search needs at least two bins")
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    k = len(cost_model.bins)
    costs = np.array([b.cost for b in cost_model.bins])
    w0 = np.full(k, 1.0 / k)
    report = SimplexSearchReport(
        bins=cost_model.bins,
        budget_step_tokens=cost_model.budget_step_tokens,
        origin_feasible=False,
    )
    origin = evaluate_distribution(
        params, cost_model, base_config, w0, seed=seed, votes=votes, ray=-1, t=0.0
    )
    report.origin = origin
    report.evaluations.append(origin)
    if not origin.reached_target:
        return report
    report.origin_feasible = True

    rng = derive_rng(seed, _STREAM_RAYS)
    for ray_idx in range(n_rays):
        d = _cheaper_direction(rng, k, costs)
        with np.errstate(divide="ignore"):
            limits = np.where(d < 0, w0 / -d, np.inf)
        t_max = float(limits.min())

        def run(t: float) -> PointEvaluation:
            w = np.clip(w0 + t * d, 0.0, None)
            w /= w.sum()
            ev = evaluate_distribution(
                params, cost_model, base_config, w,
                seed=seed + 1000 * (ray_idx + 1), votes=votes, ray=ray_idx, t=t,
            )
            report.evaluations.append(ev)
            return ev

        lo_t, lo_eval = 0.0, origin
        end = run(t_max)
        if end.reached_target:
            report.rays.append(RayResult(ray_idx, tuple(d), t_max, t_max, end))
            continue
        hi_t = t_max
        while hi_t - lo_t > tol * t_max:
            mid = 0.5 * (lo_t + hi_t)
            ev = run(mid)
            if ev.reached_target:
                lo_t, lo_eval = mid, ev
            else:
                hi_t = mid
        if lo_eval is origin:
            # Re-verify the origin-side endpoint on this ray's own seed so the
            # boundary point always carries an actual run at its coordinates.
            lo_eval = run(lo_t)
        report.rays.append(RayResult(ray_idx, tuple(d), t_max, lo_t, lo_eval))
    return report
