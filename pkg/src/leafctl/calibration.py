"""Fit the density-to-stiffness process model from bending-test data.

Pipeline: per-trial stiffness as the least-squares slope of load vs
deflection, per-specimen mean and sample standard deviation, an affine fit of
per-density group means against density, and the two noise levels:

  sigma_p: mean over density groups of the sample sd of specimen means
           (leaf-to-leaf spread of the true stiffness)
  sigma_o: mean over specimens of the per-specimen sample sd
           (repeat-measurement spread on one physical leaf)

Sample standard deviations use the n-1 divisor throughout.  Processing order
is ascending specimen_id, then trial, so results are bit-stable regardless of
input row order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import CalibrationDataset, LeafctlError, ProcessModel, check_dataset


class DegenerateRegression(LeafctlError):
    code = "DegenerateRegression"


class InsufficientReplication(LeafctlError):
    code = "InsufficientReplication"


class CalibrationError(LeafctlError):
    code = "CalibrationError"


@dataclass(frozen=True)
class SpecimenSummary:
    specimen_id: str
    density_pct: float
    trial_stiffnesses: tuple[float, ...]
    mean_stiffness: float
    sd_stiffness: float


def _ols_slope_intercept(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    if sxx == 0.0:
        raise DegenerateRegression("all x values are equal")
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, y_mean - slope * x_mean


def _sample_sd(values: Sequence[float]) -> float:
    n = len(values)
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def stiffness_from_bending(points: Iterable[tuple[float, float]]) -> float:
    """Stiffness of one bending trial: slope of load regressed on deflection.

    ``points`` are (deflection_mm, load_kg) pairs; the intercept is fitted
    and discarded.
    """
    pts = list(points)
    if len(pts) < 2:
        raise DegenerateRegression("need at least 2 load-deflection points")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if len(set(xs)) < 2:
        raise DegenerateRegression("all deflections are equal")
    slope, _ = _ols_slope_intercept(xs, ys)
    return slope


def summarize_specimens(data: CalibrationDataset) -> list[SpecimenSummary]:
    """Per-specimen trial stiffnesses with their mean and sample sd."""
    check_dataset(data)
    densities = data.specimen_densities()
    trial_values: dict[str, dict[int, float]] = {}
    if data.is_raw:
        points: dict[tuple[str, int], list[tuple[float, float]]] = {}
        for r in data.bending:
            points.setdefault((r.specimen_id, r.trial), []).append(
                (r.deflection_mm, r.load_kg)
            )
        for (sid, trial) in sorted(points):
            try:
                stiffness = stiffness_from_bending(points[(sid, trial)])
            except DegenerateRegression as exc:
                raise DegenerateRegression(
                    f"specimen {sid!r} trial {trial}: {exc}"
                ) from exc
            trial_values.setdefault(sid, {})[trial] = stiffness
    else:
        for r in data.stiffness:
            trial_values.setdefault(r.specimen_id, {})[r.trial] = r.stiffness
    out = []
    for sid in sorted(trial_values):
        stiffnesses = tuple(trial_values[sid][t] for t in sorted(trial_values[sid]))
        mean = math.fsum(stiffnesses) / len(stiffnesses)
        out.append(
            SpecimenSummary(
                specimen_id=sid,
                density_pct=densities[sid],
                trial_stiffnesses=stiffnesses,
                mean_stiffness=mean,
                sd_stiffness=_sample_sd(stiffnesses),
            )
        )
    return out


def _group_by_density(summaries: Sequence[SpecimenSummary]) -> dict[float, list[SpecimenSummary]]:
    groups: dict[float, list[SpecimenSummary]] = {}
    for s in sorted(summaries, key=lambda s: (s.density_pct, s.specimen_id)):
        groups.setdefault(s.density_pct, []).append(s)
    return groups


def fit_affine_model(summaries: Sequence[SpecimenSummary]) -> tuple[float, float]:
    """Affine density-to-stiffness fit over per-density group means.

    Specimen means are first averaged within each density group; the line is
    fitted to the (density, group mean) points.  Returns (alpha, beta).
    """
    groups = _group_by_density(summaries)
    if len(groups) < 2:
        raise DegenerateRegression("need >= 2 distinct density values")
    densities = sorted(groups)
    group_means = [
        math.fsum(s.mean_stiffness for s in groups[d]) / len(groups[d]) for d in densities
    ]
    return _ols_slope_intercept(densities, group_means)


def estimate_sigma_p(summaries: Sequence[SpecimenSummary]) -> float:
    """Leaf-to-leaf noise: mean over density groups of the sd of specimen means.

    Groups with a single specimen carry no spread information and are
    skipped; at least one group must be replicated.
    """
    groups = _group_by_density(summaries)
    sds = [
        _sample_sd([s.mean_stiffness for s in group])
        for group in groups.values()
        if len(group) >= 2
    ]
    if not sds:
        raise InsufficientReplication("no density has >= 2 specimens")
    return math.fsum(sds) / len(sds)


def estimate_sigma_o(summaries: Sequence[SpecimenSummary]) -> float:
    """Measurement noise: mean over specimens of the per-specimen sample sd."""
    for s in summaries:
        if len(s.trial_stiffnesses) < 2:
            raise InsufficientReplication(
                f"specimen {s.specimen_id!r} has fewer than 2 trials"
            )
    if not summaries:
        raise InsufficientReplication("no specimens")
    return math.fsum(s.sd_stiffness for s in summaries) / len(summaries)


def calibrate(data: CalibrationDataset) -> ProcessModel:
    """Full pipeline from a calibration dataset to a ProcessModel."""
    stage = "summarize"
    try:
        summaries = summarize_specimens(data)
        stage = "affine fit"
        alpha, beta = fit_affine_model(summaries)
        stage = "process noise"
        sigma_p = estimate_sigma_p(summaries)
        stage = "observation noise"
        sigma_o = estimate_sigma_o(summaries)
    except LeafctlError as exc:
        raise CalibrationError(f"{stage}: {exc}") from exc
    return ProcessModel(alpha=alpha, beta=beta, sigma_p=sigma_p, sigma_o=sigma_o)
