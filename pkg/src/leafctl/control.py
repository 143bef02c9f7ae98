"""Target-reaching density control for the remaining leaves of a stack.

Among all remaining-leaf allocations whose expected stiffness sum closes the
gap to the target, the sum of squared densities is minimized by giving every
remaining leaf the same per-leaf mean, (target - mean) / remaining.  Under an
affine leaf model that pins the next density to

    d = (target - mean) / (alpha * remaining) - beta / alpha

Only the next leaf is committed; the rest are recomputed after the next
measurement (receding horizon).  A plain material-quantity cost (sum of
densities) is degenerate here: it is constant on the whole constraint set,
which ``linear_cost_degeneracy_check`` demonstrates numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import BeliefState, BuildPlan, LeafctlError, ProcessModel


class ZeroAlpha(LeafctlError):
    code = "ZeroAlpha"


class NoLeavesRemaining(LeafctlError):
    code = "NoLeavesRemaining"


class LengthMismatch(LeafctlError):
    code = "LengthMismatch"


@dataclass(frozen=True)
class ControlDecision:
    """Recommended density for the next leaf plus its consequences.

    ``clamped`` is true whenever the recommended density differs from the raw
    optimum (bound clamping or increment rounding).  Prediction fields assume
    every remaining leaf is printed at the recommended density.
    """

    recommended_density: float
    clamped: bool
    unclamped_density: float
    predicted_final_mean: float
    predicted_final_sd: float

    def to_dict(self) -> dict:
        return {
            "recommended_density": self.recommended_density,
            "clamped": self.clamped,
            "unclamped_density": self.unclamped_density,
            "predicted_final_mean": self.predicted_final_mean,
            "predicted_final_sd": self.predicted_final_sd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlDecision":
        return cls(
            recommended_density=float(d["recommended_density"]),
            clamped=bool(d["clamped"]),
            unclamped_density=float(d["unclamped_density"]),
            predicted_final_mean=float(d["predicted_final_mean"]),
            predicted_final_sd=float(d["predicted_final_sd"]),
        )


def allocate_equal_split(target_k: float, current_mean: float, remaining: int) -> float:
    """Per-leaf mean stiffness each remaining leaf must contribute."""
    if remaining < 1:
        raise NoLeavesRemaining("no leaves remaining to allocate")
    return (target_k - current_mean) / remaining


def optimal_density(
    plan: BuildPlan, model: ProcessModel, belief_mean: float, step_i: int
) -> ControlDecision:
    """Density for leaf ``step_i + 1`` given the current stiffness estimate."""
    if model.alpha == 0:
        raise ZeroAlpha("density is undefined for a flat density-stiffness model")
    if not (0 <= step_i < plan.n):
        raise ValueError(f"step_i must be in [0, {plan.n}), got {step_i}")
    remaining = plan.n - step_i
    per_leaf = allocate_equal_split(plan.target_k, belief_mean, remaining)
    d_raw = (per_leaf - model.beta) / model.alpha
    d = min(max(d_raw, plan.d_min), plan.d_max)
    if plan.density_increment is not None:
        d = math.floor(d / plan.density_increment + 0.5) * plan.density_increment
        d = min(max(d, plan.d_min), plan.d_max)
    belief = BeliefState(step=step_i, mean=belief_mean, variance=0.0)
    prediction = predict_final(plan, model, belief, [d] * remaining)
    return ControlDecision(
        recommended_density=d,
        clamped=d != d_raw,
        unclamped_density=d_raw,
        predicted_final_mean=prediction["mean"],
        predicted_final_sd=prediction["sd"],
    )


def predict_final(
    plan: BuildPlan,
    model: ProcessModel,
    belief: BeliefState,
    future_densities: list[float],
) -> dict:
    """Expected final stack stiffness given the planned remaining densities.

    The mean adds each remaining leaf's model mean onto the current estimate.
    The standard deviation propagates the current posterior variance plus one
    process variance per remaining leaf (a documented extension; the mean is
    the primary quantity).
    """
    remaining = plan.n - belief.step
    if len(future_densities) != remaining:
        raise LengthMismatch(
            f"expected {remaining} future densities, got {len(future_densities)}"
        )
    mean = belief.mean + sum(model.leaf_mean(d) for d in future_densities)
    sd = math.sqrt(belief.variance + remaining * model.sigma_p**2)
    return {"mean": mean, "sd": sd}


@dataclass(frozen=True)
class DegeneracyReport:
    """Evidence that total material is allocation-independent on the
    constraint set (so a linear material cost cannot pick an allocation)."""

    allocations: tuple[tuple[float, ...], ...]
    density_sums: tuple[float, ...]
    max_spread: float
    vacuous: bool
    note: str


def linear_cost_degeneracy_check(
    plan: BuildPlan,
    model: ProcessModel,
    current_mean: float = 0.0,
    step_i: int = 0,
) -> DegeneracyReport:
    """Evaluate total density over distinct feasible allocations.

    Every allocation meeting the expected-stiffness constraint has the same
    density sum, ((target - mean) - remaining * beta) / alpha, because the
    leaf model is affine.  With a single remaining leaf the constraint set is
    one point and the demonstration is vacuous.
    """
    if model.alpha == 0:
        raise ZeroAlpha("degeneracy check needs an invertible density-stiffness model")
    remaining = plan.n - step_i
    if remaining < 1:
        raise NoLeavesRemaining("no leaves remaining")
    per_leaf = allocate_equal_split(plan.target_k, current_mean, remaining)
    d_eq = (per_leaf - model.beta) / model.alpha
    if remaining == 1:
        return DegeneracyReport(
            allocations=((d_eq,),),
            density_sums=(d_eq,),
            max_spread=0.0,
            vacuous=True,
            note="single remaining leaf: the constraint set is one point",
        )
    allocations = [tuple([d_eq] * remaining)]
    # zero-sum perturbations keep the expected-stiffness constraint satisfied
    for delta in (1.0, -2.5):
        alloc = [d_eq] * remaining
        alloc[0] += delta
        alloc[-1] -= delta
        allocations.append(tuple(alloc))
    sums = tuple(math.fsum(a) for a in allocations)
    spread = max(sums) - min(sums)
    return DegeneracyReport(
        allocations=tuple(allocations),
        density_sums=sums,
        max_spread=spread,
        vacuous=False,
        note="density sum is constant on the constraint set" if spread <= 1e-9
        else "density sums differ: affine model assumption violated",
    )
