"""Shared domain types, their validation, and the JSON/CSV wire formats.

Units are fixed project-wide: stiffness in kg/mm, infill density in percent.
All types are immutable value objects and safe to share between threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable


class LeafctlError(Exception):
    """Base class for all package errors; ``code`` is the wire-format name."""

    code = "Error"


class InvalidPlan(LeafctlError):
    code = "InvalidPlan"


class InfeasibleTarget(LeafctlError):
    code = "InfeasibleTarget"


@dataclass(frozen=True)
class ProcessModel:
    """Calibrated affine density-to-stiffness model with noise levels.

    alpha:   stiffness gained per density percent (kg/mm per %)
    beta:    stiffness offset of a single leaf (kg/mm)
    sigma_p: per-leaf process noise standard deviation (kg/mm)
    sigma_o: single-measurement observation noise standard deviation (kg/mm)
    """

    alpha: float
    beta: float
    sigma_p: float
    sigma_o: float

    def leaf_mean(self, density: float) -> float:
        """Mean stiffness contributed by one leaf printed at ``density``."""
        return self.alpha * density + self.beta

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "sigma_p": self.sigma_p,
            "sigma_o": self.sigma_o,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessModel":
        return cls(
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            sigma_p=float(d["sigma_p"]),
            sigma_o=float(d["sigma_o"]),
        )


@dataclass(frozen=True)
class BuildPlan:
    """Target and measurement policy for one stack build.

    n:           leaf count
    target_k:    objective stack stiffness K (kg/mm)
    repetitions: bench measurements averaged into one observation
    d_min/d_max: admissible infill density bounds (%)
    density_increment: optional printer rounding step; None means densities
                       are used as real numbers
    """

    n: int
    target_k: float
    repetitions: int = 5
    d_min: float = 0.0
    d_max: float = 100.0
    density_increment: float | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "target_k": self.target_k,
            "repetitions": self.repetitions,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "density_increment": self.density_increment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BuildPlan":
        inc = d.get("density_increment")
        return cls(
            n=int(d["n"]),
            target_k=float(d["target_k"]),
            repetitions=int(d.get("repetitions", 5)),
            d_min=float(d.get("d_min", 0.0)),
            d_max=float(d.get("d_max", 100.0)),
            density_increment=None if inc is None else float(inc),
        )


@dataclass(frozen=True)
class BeliefState:
    """Gaussian posterior over cumulative stack stiffness after ``step`` leaves."""

    step: int
    mean: float
    variance: float

    @classmethod
    def initial(cls) -> "BeliefState":
        # the empty stack has stiffness exactly zero
        return cls(step=0, mean=0.0, variance=0.0)

    def to_dict(self) -> dict:
        return {"step": self.step, "mean": self.mean, "variance": self.variance}

    @classmethod
    def from_dict(cls, d: dict) -> "BeliefState":
        return cls(step=int(d["step"]), mean=float(d["mean"]), variance=float(d["variance"]))


@dataclass(frozen=True)
class StepRecord:
    """One committed leaf: the applied control and what was seen afterwards.

    true_stiffness is only available in simulation; observed_stiffness is
    absent on steps where no measurement was taken (open-loop interior steps).
    """

    step: int
    applied_density: float
    true_stiffness: float | None = None
    observed_stiffness: float | None = None
    belief_after: BeliefState | None = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "applied_density": self.applied_density,
            "true_stiffness": self.true_stiffness,
            "observed_stiffness": self.observed_stiffness,
            "belief_after": None if self.belief_after is None else self.belief_after.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        belief = d.get("belief_after")
        return cls(
            step=int(d["step"]),
            applied_density=float(d["applied_density"]),
            true_stiffness=None if d.get("true_stiffness") is None else float(d["true_stiffness"]),
            observed_stiffness=(
                None if d.get("observed_stiffness") is None else float(d["observed_stiffness"])
            ),
            belief_after=None if belief is None else BeliefState.from_dict(belief),
        )


STRATEGIES = ("filtered", "unfiltered", "open_loop")


@dataclass(frozen=True)
class BuildTrace:
    """Per-step record of one complete or partial build."""

    strategy: str
    steps: tuple[StepRecord, ...] = ()
    final_abs_error_pct: float | None = None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "steps": [s.to_dict() for s in self.steps],
            "final_abs_error_pct": self.final_abs_error_pct,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BuildTrace":
        err = d.get("final_abs_error_pct")
        return cls(
            strategy=str(d["strategy"]),
            steps=tuple(StepRecord.from_dict(s) for s in d["steps"]),
            final_abs_error_pct=None if err is None else float(err),
        )


# --- calibration dataset -------------------------------------------------

BENDING_HEADER = ["specimen_id", "density_pct", "trial", "deflection_mm", "load_kg"]
STIFFNESS_HEADER = ["specimen_id", "density_pct", "trial", "stiffness_kg_per_mm"]


@dataclass(frozen=True)
class BendingRecord:
    specimen_id: str
    density_pct: float
    trial: int
    deflection_mm: float
    load_kg: float


@dataclass(frozen=True)
class StiffnessRecord:
    specimen_id: str
    density_pct: float
    trial: int
    stiffness: float


@dataclass(frozen=True)
class CalibrationDataset:
    """Bending-test data in raw (load/deflection) or reduced (stiffness) form.

    Exactly one of the two record tuples is populated.
    """

    bending: tuple[BendingRecord, ...] = ()
    stiffness: tuple[StiffnessRecord, ...] = ()

    @property
    def is_raw(self) -> bool:
        return bool(self.bending)

    def specimen_densities(self) -> dict[str, float]:
        out: dict[str, float] = {}
        records: Iterable = self.bending if self.is_raw else self.stiffness
        for r in records:
            prev = out.setdefault(r.specimen_id, r.density_pct)
            if prev != r.density_pct:
                raise InvalidDataset(
                    f"specimen {r.specimen_id!r} appears with densities {prev} and {r.density_pct}"
                )
        return out


class InvalidDataset(LeafctlError):
    code = "InvalidDataset"


def check_dataset(data: CalibrationDataset) -> None:
    """Check the dataset invariants needed downstream.

    The dataset as a whole must span >= 2 distinct densities (for the affine
    fit) and every specimen needs >= 2 trials (for noise estimation).  Raw
    bending data additionally needs >= 2 distinct deflections per trial.
    """
    if bool(data.bending) == bool(data.stiffness):
        raise InvalidDataset("dataset must carry bending records or stiffness records, not both")
    densities = set(data.specimen_densities().values())
    if len(densities) < 2:
        raise InvalidDataset("dataset needs >= 2 distinct density values for the affine fit")
    trials: dict[str, set[int]] = {}
    records: Iterable = data.bending if data.is_raw else data.stiffness
    for r in records:
        trials.setdefault(r.specimen_id, set()).add(r.trial)
    for sid, t in sorted(trials.items()):
        if len(t) < 2:
            raise InvalidDataset(f"specimen {sid!r} has fewer than 2 trials")
    if data.is_raw:
        deflections: dict[tuple[str, int], set[float]] = {}
        for r in data.bending:
            deflections.setdefault((r.specimen_id, r.trial), set()).add(r.deflection_mm)
        for (sid, trial), defl in sorted(deflections.items()):
            if len(defl) < 2:
                raise InvalidDataset(
                    f"specimen {sid!r} trial {trial} has fewer than 2 distinct deflections"
                )


# --- validation ----------------------------------------------------------

def open_loop_density(plan: BuildPlan, model: ProcessModel) -> float:
    """Constant density that meets the target in expectation with no feedback."""
    if model.alpha == 0:
        raise InvalidPlan("model.alpha must be nonzero")
    return (plan.target_k / plan.n - model.beta) / model.alpha


def validate(plan: BuildPlan, model: ProcessModel) -> None:
    """Raise unless the plan/model pair is well-formed and feasible.

    InvalidPlan names the violated invariant.  InfeasibleTarget means the
    unclamped open-loop density falls outside [d_min, d_max].
    """
    if model.sigma_p < 0:
        raise InvalidPlan("model.sigma_p >= 0 violated")
    if model.sigma_o < 0:
        raise InvalidPlan("model.sigma_o >= 0 violated")
    if model.alpha == 0:
        raise InvalidPlan("model.alpha != 0 violated")
    if not all(math.isfinite(x) for x in (model.alpha, model.beta, model.sigma_p, model.sigma_o)):
        raise InvalidPlan("model parameters must be finite")
    if plan.n < 1:
        raise InvalidPlan("plan.n >= 1 violated")
    if not (plan.target_k > 0):
        raise InvalidPlan("plan.target_k > 0 violated")
    if plan.repetitions < 1:
        raise InvalidPlan("plan.repetitions >= 1 violated")
    if not (0 <= plan.d_min < plan.d_max):
        raise InvalidPlan("0 <= plan.d_min < plan.d_max violated")
    if plan.density_increment is not None and not (plan.density_increment > 0):
        raise InvalidPlan("plan.density_increment > 0 violated")
    d = open_loop_density(plan, model)
    if not (plan.d_min <= d <= plan.d_max):
        raise InfeasibleTarget(
            f"open-loop density {d:.3f} outside [{plan.d_min}, {plan.d_max}]"
        )


# --- JSON/CSV loaders ----------------------------------------------------

def dumps_json(obj) -> str:
    """Canonical JSON form used for all on-disk artifacts."""
    return json.dumps(obj.to_dict(), indent=2, sort_keys=False) + "\n"


def load_model_json(text: str) -> ProcessModel:
    return ProcessModel.from_dict(json.loads(text))


def load_plan_json(text: str) -> BuildPlan:
    return BuildPlan.from_dict(json.loads(text))


def load_trace_json(text: str) -> BuildTrace:
    return BuildTrace.from_dict(json.loads(text))


def load_calibration_csv(text: str) -> CalibrationDataset:
    """Parse either calibration CSV form, detected from the header row."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidDataset("empty calibration CSV") from None
    header = [h.strip() for h in header]
    rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    try:
        if header == BENDING_HEADER:
            bending = tuple(
                BendingRecord(r[0].strip(), float(r[1]), int(r[2]), float(r[3]), float(r[4]))
                for r in rows
            )
            return CalibrationDataset(bending=bending)
        if header == STIFFNESS_HEADER:
            stiffness = tuple(
                StiffnessRecord(r[0].strip(), float(r[1]), int(r[2]), float(r[3]))
                for r in rows
            )
            return CalibrationDataset(stiffness=stiffness)
    except (ValueError, IndexError) as exc:
        raise InvalidDataset(f"malformed calibration CSV row: {exc}") from exc
    raise InvalidDataset(
        f"unrecognized calibration CSV header {header!r}; expected "
        f"{BENDING_HEADER} or {STIFFNESS_HEADER}"
    )


def dump_calibration_csv(data: CalibrationDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if data.is_raw:
        w.writerow(BENDING_HEADER)
        for r in data.bending:
            w.writerow([r.specimen_id, repr(r.density_pct), r.trial, repr(r.deflection_mm), repr(r.load_kg)])
    else:
        w.writerow(STIFFNESS_HEADER)
        for r in data.stiffness:
            w.writerow([r.specimen_id, repr(r.density_pct), r.trial, repr(r.stiffness)])
    return buf.getvalue()
