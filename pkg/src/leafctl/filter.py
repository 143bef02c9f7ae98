"""Scalar Gauss-linear filtering of cumulative stack stiffness.

The stack grows by one leaf per step.  With process noise ``sigma_p`` on each
printed leaf and observation noise ``sigma_o`` on each bench reading, the
posterior over cumulative stiffness stays Gaussian and obeys the closed-form
recursions

    mean'     = (kbar * (sp2 + var) + (mean + leaf_mean(d)) * so2) / total
    variance' = so2 * (sp2 + var) / total
    total     = so2 + sp2 + var

where ``so2`` is the effective observation variance (single-measurement
variance divided by the number of averaged repetitions), ``sp2`` the process
variance, and ``var`` the previous posterior variance.

The variance recursion is a Riccati difference equation whose nonnegative
fixed point has a closed form; both are exposed here.  ``posterior_oracle``
re-derives the posterior by direct numerical integration on a stiffness grid
and exists to validate the closed form, never to replace it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BeliefState, LeafctlError, ProcessModel


class DegenerateFilter(LeafctlError):
    code = "DegenerateFilter"


class GridTooCoarse(LeafctlError):
    code = "GridTooCoarse"


@dataclass(frozen=True)
class Observation:
    """One stiffness reading: the averaged value and how many raw
    measurements went into the average."""

    value: float
    repetitions: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def effective_obs_variance(model: ProcessModel, repetitions: int) -> float:
    """Observation variance after averaging ``repetitions`` raw measurements."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    return model.sigma_o**2 / repetitions


def update(
    belief: BeliefState,
    model: ProcessModel,
    applied_density: float,
    obs: Observation,
) -> BeliefState:
    """Advance the belief over cumulative stiffness by one printed leaf.

    Pure math on the inputs; density bounds are the controller's concern.
    Raises DegenerateFilter when every variance is zero, in which case the
    posterior is ill-defined (0/0).
    """
    sp2 = model.sigma_p**2
    so2 = effective_obs_variance(model, obs.repetitions)
    prior_var = sp2 + belief.variance
    total = so2 + prior_var
    if total == 0.0:
        raise DegenerateFilter(
            "all variances are zero; the posterior is undefined (configuration mistake?)"
        )
    if so2 == 0.0:
        # exact observations: the posterior collapses onto the reading
        return BeliefState(step=belief.step + 1, mean=obs.value, variance=0.0)
    predicted_mean = belief.mean + model.leaf_mean(applied_density)
    mean = (obs.value * prior_var + predicted_mean * so2) / total
    variance = so2 * prior_var / total
    return BeliefState(step=belief.step + 1, mean=mean, variance=variance)


def update_with_fallback(
    belief: BeliefState,
    model: ProcessModel,
    applied_density: float,
    obs: Observation,
) -> BeliefState:
    """``update``, but a fully degenerate filter adopts the observation.

    In the limit sigma_o -> 0 the posterior mean tends to the observed value
    with zero variance, so a noiseless configuration collapses to copying the
    (exact) measurement.  Strategy runners and live sessions use this so a
    zero-noise model still drives a well-defined loop.
    """
    try:
        return update(belief, model, applied_density, obs)
    except DegenerateFilter:
        return BeliefState(step=belief.step + 1, mean=obs.value, variance=0.0)


def variance_sequence(model: ProcessModel, repetitions: int, steps: int) -> list[float]:
    """Posterior variances after 1..steps updates, starting from variance 0.

    The sequence depends only on the noise levels, never on observed values.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    sp2 = model.sigma_p**2
    so2 = effective_obs_variance(model, repetitions)
    out = []
    var = 0.0
    for _ in range(steps):
        prior_var = sp2 + var
        total = so2 + prior_var
        var = 0.0 if total == 0.0 else so2 * prior_var / total
        out.append(var)
    return out


def steady_state_variance(model: ProcessModel, repetitions: int) -> float:
    """Nonnegative fixed point of the variance recursion.

    Solving v = so2 (sp2 + v) / (so2 + sp2 + v) for v >= 0 gives
    v = (-sp2 + sqrt(sp2^2 + 4 so2 sp2)) / 2.
    """
    sp2 = model.sigma_p**2
    so2 = effective_obs_variance(model, repetitions)
    return (-sp2 + math.sqrt(sp2**2 + 4.0 * so2 * sp2)) / 2.0


# --- numerical posterior oracle (test instrumentation) --------------------

@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    points: int = 4001


@dataclass(frozen=True)
class OracleResult:
    mean: float
    variance: float


_DEFAULT_POINTS = 4001
_SPAN_SDS = 8.0
_MIN_COVERAGE_SDS = 6.0


def _normal_pdf(x: np.ndarray, mu: float, sd: float) -> np.ndarray:
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def _spike(k: np.ndarray, at: float, dk: float) -> np.ndarray:
    out = np.zeros_like(k)
    out[int(np.argmin(np.abs(k - at)))] = 1.0 / dk
    return out


def _linear_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a) + len(b) - 1
    if len(a) * len(b) < 2_000_000:
        return np.convolve(a, b)
    size = 1 << (n - 1).bit_length()
    out = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(b, size), size)[:n]
    return np.maximum(out, 0.0)  # FFT roundoff can dip a hair below zero


def _predict_onto(
    k_new: np.ndarray,
    k_prev: np.ndarray,
    p_prev: np.ndarray,
    dk: float,
    shift: float,
    sigma_p: float,
) -> np.ndarray:
    """Numerical convolution of the previous posterior with the process
    normal, evaluated on a new grid sharing the same spacing."""
    if sigma_p == 0.0:
        return np.interp(k_new - shift, k_prev, p_prev, left=0.0, right=0.0)
    n = len(k_prev)
    m = len(k_new)
    offsets = float(k_new[0] - k_prev[0]) + np.arange(-(n - 1), m) * dk
    kernel = _normal_pdf(offsets, shift, sigma_p)
    return _linear_convolve(p_prev, kernel)[n - 1 : n - 1 + m] * dk


def _run_steps(
    model: ProcessModel,
    densities: list[float],
    observations: list[Observation],
    grids: list[np.ndarray],
    dk: float,
) -> tuple[float, float, list[float]]:
    """Predict/weight/renormalize over per-step grids of common spacing.

    Returns (mean, variance, per-step normalization constants).  The stack
    starts at exactly zero stiffness, so the first predicted density is the
    process normal itself; later steps integrate the previous posterior
    against the process kernel.
    """
    sp = model.sigma_p
    prev_k: np.ndarray | None = None
    prev_p: np.ndarray | None = None
    norms: list[float] = []
    mean = variance = 0.0
    for i, (d, obs) in enumerate(zip(densities, observations)):
        shift = model.leaf_mean(d)
        k = grids[i]
        if i == 0:
            pred = _normal_pdf(k, shift, sp) if sp > 0 else _spike(k, shift, dk)
        else:
            pred = _predict_onto(k, prev_k, prev_p, dk, shift, sp)
        so_eff = math.sqrt(effective_obs_variance(model, obs.repetitions))
        like = _normal_pdf(obs.value - k, 0.0, so_eff) if so_eff > 0 else _spike(k, obs.value, dk)
        unnorm = pred * like
        z = float(np.sum(unnorm) * dk)
        if z <= 0.0 or not math.isfinite(z):
            raise GridTooCoarse(f"normalization constant {z} at step {i + 1}")
        p = unnorm / z
        norms.append(z)
        mean = float(np.sum(k * p) * dk)
        variance = float(np.sum((k - mean) ** 2 * p) * dk)
        prev_k, prev_p = k, p
    return mean, variance, norms


def _adaptive_grids(
    model: ProcessModel,
    densities: list[float],
    observations: list[Observation],
    points: int,
    refine: int = 1,
) -> tuple[list[np.ndarray], float]:
    """Per-step grids centered on where each posterior can live.

    The running mean/sd come from a coarse propagation of the recursion, used
    for placement only.  Each grid spans the predicted mean and the observed
    value padded by ``_SPAN_SDS`` combined standard deviations; all grids
    share one spacing (the tightest span divided by ``points - 1``) so that
    consecutive steps convolve on aligned offsets.
    """
    spans: list[tuple[float, float]] = []
    run_mean = 0.0
    run_var = 0.0
    for d, obs in zip(densities, observations):
        pred_mean = run_mean + model.leaf_mean(d)
        pred_var = run_var + model.sigma_p**2
        so2 = effective_obs_variance(model, obs.repetitions)
        pad = _SPAN_SDS * (math.sqrt(pred_var) + math.sqrt(so2))
        if pad == 0.0:
            pad = 1e-9 + 1e-12 * abs(pred_mean)
        spans.append((min(pred_mean, obs.value) - pad, max(pred_mean, obs.value) + pad))
        total = so2 + pred_var
        if total == 0.0 or so2 == 0.0:
            run_mean, run_var = obs.value, 0.0
        else:
            run_mean = (obs.value * pred_var + pred_mean * so2) / total
            run_var = so2 * pred_var / total
    cells = (points - 1) * refine
    dk = min(hi - lo for lo, hi in spans) / cells
    grids = [
        lo + dk * np.arange(int(math.ceil((hi - lo) / dk)) + 1) for lo, hi in spans
    ]
    return grids, dk


def posterior_oracle(
    model: ProcessModel,
    densities: list[float],
    observations: list[Observation],
    grid: GridSpec | None = None,
    points: int = _DEFAULT_POINTS,
    refine_tolerance: float = 1e-6,
) -> OracleResult:
    """Posterior mean/variance by direct numerical integration.

    By default every step gets its own grid (``points`` wide) spanning the
    predicted mean and the observation; passing an explicit ``grid`` pins one
    fixed grid for all steps instead.  The recursion runs once as given and
    once at doubled resolution; if any per-step normalization constant moves
    by more than ``refine_tolerance`` (relative), the grid has not converged
    and GridTooCoarse is raised.
    """
    if len(densities) != len(observations) or not densities:
        raise ValueError("densities and observations must have equal length >= 1")
    if grid is None:
        grids, dk = _adaptive_grids(model, densities, observations, points)
        fine, dk_fine = _adaptive_grids(model, densities, observations, points, refine=2)
    else:
        _check_coverage(model, densities, grid)
        grids = [np.linspace(grid.lo, grid.hi, grid.points)] * len(densities)
        dk = (grid.hi - grid.lo) / (grid.points - 1)
        fine = [np.linspace(grid.lo, grid.hi, 2 * grid.points - 1)] * len(densities)
        dk_fine = (grid.hi - grid.lo) / (2 * grid.points - 2)
    mean, variance, norms = _run_steps(model, densities, observations, grids, dk)
    _, _, norms_fine = _run_steps(model, densities, observations, fine, dk_fine)
    for i, (z, zf) in enumerate(zip(norms, norms_fine)):
        if abs(z - zf) > refine_tolerance * max(abs(zf), 1e-300):
            raise GridTooCoarse(
                f"normalization constant at step {i + 1} moved {z} -> {zf} under refinement"
            )
    return OracleResult(mean=mean, variance=variance)


def _check_coverage(model: ProcessModel, densities: list[float], grid: GridSpec) -> None:
    if grid.points < 3:
        raise GridTooCoarse("grid needs at least 3 points")
    m = 0.0
    spread2 = 0.0
    for d in densities:
        m += model.leaf_mean(d)
        spread2 += model.sigma_p**2
        pad = _MIN_COVERAGE_SDS * math.sqrt(spread2)
        if m - pad < grid.lo or m + pad > grid.hi:
            raise GridTooCoarse(
                f"grid [{grid.lo}, {grid.hi}] covers fewer than "
                f"{_MIN_COVERAGE_SDS} standard deviations around predicted mean {m}"
            )
