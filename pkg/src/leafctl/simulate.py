"""Seeded stochastic simulator of the printing loop and strategy comparison.

Reality evolves as cumulative stiffness plus one noisy leaf per step; bench
readings add averaged observation noise.  Three strategies are compared:

  filtered    control from the Kalman posterior mean
  unfiltered  control from the raw (averaged) measurement, taken as exact
  open_loop   constant precomputed density, one measurement at the very end

Noise is addressed by (trial, step, repetition) through counter-based
streams, so single-trial runs, vectorized batches, and chunked parallel
execution all see bit-identical draws.  In paired mode the streams drop the
strategy tag and every strategy experiences the same noise per trial, which
sharpens strategy comparisons.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import control as ctl
from .filter import Observation, effective_obs_variance, update_with_fallback
from .model import (
    STRATEGIES,
    BeliefState,
    BuildPlan,
    BuildTrace,
    ProcessModel,
    StepRecord,
    open_loop_density,
    validate,
)
from .rng import NoiseStreams


@dataclass(frozen=True)
class SimConfig:
    plan: BuildPlan
    model_true: ProcessModel
    model_assumed: ProcessModel | None = None
    trials: int = 1
    seed: int = 0
    paired: bool = False

    @property
    def assumed(self) -> ProcessModel:
        return self.model_assumed if self.model_assumed is not None else self.model_true

    def streams_for(self, kind: str) -> NoiseStreams:
        label = "paired" if self.paired else kind
        return NoiseStreams(self.seed, label)


class LeafNoise:
    """Noise draws addressed to one (trial, step); order of use is irrelevant."""

    def __init__(self, streams: NoiseStreams, trial: int, step: int):
        self._streams = streams
        self.trial = trial
        self.step = step

    def process_draw(self, sigma_p: float) -> float:
        return self._streams.process_noise(self.trial, self.step, sigma_p)

    def observation_mean_draw(self, repetitions: int, sigma_o: float) -> float:
        return self._streams.observation_noise_mean(
            self.trial, self.step, repetitions, sigma_o
        )


def print_leaf(state_k: float, model: ProcessModel, density: float, rng: LeafNoise) -> float:
    """Stack stiffness after printing one leaf at ``density``."""
    return state_k + model.leaf_mean(density) + rng.process_draw(model.sigma_p)


def measure_stack(
    state_k: float, model: ProcessModel, repetitions: int, rng: LeafNoise
) -> Observation:
    """Averaged bench reading of the current stack."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    value = state_k + rng.observation_mean_draw(repetitions, model.sigma_o)
    return Observation(value=value, repetitions=repetitions)


def run_strategy(
    config: SimConfig,
    kind: str,
    streams: NoiseStreams | None = None,
    trial: int = 0,
) -> BuildTrace:
    """Simulate one build with the given strategy; returns the full trace."""
    if kind not in STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}")
    plan = config.plan
    assumed = config.assumed
    true = config.model_true
    validate(plan, assumed)
    if streams is None:
        streams = config.streams_for(kind)
    r = plan.repetitions
    state = 0.0
    belief = BeliefState.initial()
    steps: list[StepRecord] = []
    if kind == "open_loop":
        decision = ctl.optimal_density(plan, assumed, 0.0, 0)
        d = decision.recommended_density
        for i in range(plan.n):
            rng = LeafNoise(streams, trial, i + 1)
            state = print_leaf(state, true, d, rng)
            observed = None
            if i == plan.n - 1:
                observed = measure_stack(state, true, r, rng).value
            steps.append(
                StepRecord(step=i + 1, applied_density=d, true_stiffness=state,
                           observed_stiffness=observed, belief_after=None)
            )
    else:
        for i in range(plan.n):
            decision = ctl.optimal_density(plan, assumed, belief.mean, i)
            d = decision.recommended_density
            rng = LeafNoise(streams, trial, i + 1)
            state = print_leaf(state, true, d, rng)
            obs = measure_stack(state, true, r, rng)
            if kind == "filtered":
                belief = update_with_fallback(belief, assumed, d, obs)
            else:
                belief = BeliefState(step=i + 1, mean=obs.value, variance=0.0)
            steps.append(
                StepRecord(
                    step=i + 1,
                    applied_density=d,
                    true_stiffness=state,
                    observed_stiffness=obs.value,
                    belief_after=belief,
                )
            )
    error_pct = abs(state - plan.target_k) / plan.target_k * 100.0
    return BuildTrace(strategy=kind, steps=tuple(steps), final_abs_error_pct=error_pct)


def replay(
    plan: BuildPlan,
    model: ProcessModel,
    kind: str,
    observations: list[Observation | float],
) -> BuildTrace:
    """Drive a strategy with recorded observations instead of simulated noise.

    Bare floats become observations with the plan's repetition count.  With
    fewer observations than leaves, the trace covers the driven steps plus
    the next recommended density (no measurement attached); with a full list
    the final observation stands in for the unknowable true final stiffness.
    """
    if kind not in STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}")
    validate(plan, model)
    obs_list = [
        o if isinstance(o, Observation) else Observation(float(o), plan.repetitions)
        for o in observations
    ]
    if kind == "open_loop":
        if len(obs_list) > 1:
            raise ValueError("open-loop replay takes at most the final observation")
        covered = plan.n
    else:
        if len(obs_list) > plan.n:
            raise ValueError(f"at most {plan.n} observations, got {len(obs_list)}")
        covered = min(plan.n, len(obs_list) + 1)
    belief = BeliefState.initial()
    steps: list[StepRecord] = []
    final_observed: float | None = None
    d_open = ctl.optimal_density(plan, model, 0.0, 0).recommended_density
    for i in range(covered):
        if kind == "open_loop":
            d = d_open
        else:
            d = ctl.optimal_density(plan, model, belief.mean, i).recommended_density
        observed = None
        belief_after = None
        if kind == "open_loop":
            if i == plan.n - 1 and obs_list:
                observed = obs_list[0].value
        elif i < len(obs_list):
            obs = obs_list[i]
            observed = obs.value
            if kind == "filtered":
                belief = update_with_fallback(belief, model, d, obs)
            else:
                belief = BeliefState(step=i + 1, mean=obs.value, variance=0.0)
            belief_after = belief
        if i == plan.n - 1 and observed is not None:
            final_observed = observed
        steps.append(
            StepRecord(step=i + 1, applied_density=d, true_stiffness=None,
                       observed_stiffness=observed, belief_after=belief_after)
        )
    error_pct = (
        None
        if final_observed is None
        else abs(final_observed - plan.target_k) / plan.target_k * 100.0
    )
    return BuildTrace(strategy=kind, steps=tuple(steps), final_abs_error_pct=error_pct)


# --- Monte Carlo harness ---------------------------------------------------

_QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)


@dataclass(frozen=True)
class StrategyStats:
    mean_abs_error: float
    sd_abs_error: float
    mean_abs_error_pct: float
    sd_abs_error_pct: float
    quantiles: dict[str, float]
    mean_density_per_step: tuple[float, ...]
    final_errors: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "mean_abs_error_kg_mm": self.mean_abs_error,
            "sd_abs_error_kg_mm": self.sd_abs_error,
            "mean_abs_error_pct": self.mean_abs_error_pct,
            "sd_abs_error_pct": self.sd_abs_error_pct,
            "quantiles_kg_mm": self.quantiles,
            "mean_density_per_step": list(self.mean_density_per_step),
            "final_errors_kg_mm": list(self.final_errors),
        }


@dataclass(frozen=True)
class MonteCarloReport:
    plan: BuildPlan
    seed: int
    trials: int
    paired: bool
    strategies: dict[str, StrategyStats]

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "seed": self.seed,
            "trials": self.trials,
            "paired": self.paired,
            "strategies": {k: self.strategies[k].to_dict() for k in STRATEGIES},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        """Flat per-trial table: strategy,trial,final_error_kg_mm,final_error_pct."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "trial", "final_error_kg_mm", "final_error_pct"])
        k = self.plan.target_k
        for kind in STRATEGIES:
            for t, err in enumerate(self.strategies[kind].final_errors):
                w.writerow([kind, t, repr(err), repr(err / k * 100.0)])
        return buf.getvalue()


def _run_block(
    config: SimConfig, kind: str, streams: NoiseStreams, trials: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized strategy run over a block of trial indices.

    Produces exactly the numbers run_strategy produces per trial: identical
    expression order, identical draws.  Returns (final true errors, applied
    densities with shape (len(trials), n)).
    """
    plan = config.plan
    assumed = config.assumed
    true = config.model_true
    r = plan.repetitions
    so2 = effective_obs_variance(assumed, r)
    sp2 = assumed.sigma_p**2
    m = len(trials)
    state = np.zeros(m)
    mean = np.zeros(m)
    variance = 0.0  # posterior variance is data-independent, scalar for the block
    densities = np.empty((m, plan.n))
    if kind == "open_loop":
        d_scalar = ctl.optimal_density(plan, assumed, 0.0, 0).recommended_density
        for i in range(plan.n):
            densities[:, i] = d_scalar
            state = state + (true.alpha * d_scalar + true.beta) + streams.process_noise_block(
                trials, i + 1, true.sigma_p
            )
        return np.abs(state - plan.target_k), densities
    for i in range(plan.n):
        remaining = plan.n - i
        per_leaf = (plan.target_k - mean) / remaining
        d_raw = (per_leaf - assumed.beta) / assumed.alpha
        d = np.minimum(np.maximum(d_raw, plan.d_min), plan.d_max)
        if plan.density_increment is not None:
            d = np.floor(d / plan.density_increment + 0.5) * plan.density_increment
            d = np.minimum(np.maximum(d, plan.d_min), plan.d_max)
        densities[:, i] = d
        state = state + (true.alpha * d + true.beta) + streams.process_noise_block(
            trials, i + 1, true.sigma_p
        )
        obs = state + streams.observation_noise_mean_block(trials, i + 1, r, true.sigma_o)
        if kind == "filtered":
            prior_var = sp2 + variance
            total = so2 + prior_var
            if total == 0.0 or so2 == 0.0:
                mean = obs
                variance = 0.0
            else:
                predicted = mean + (assumed.alpha * d + assumed.beta)
                mean = (obs * prior_var + predicted * so2) / total
                variance = so2 * prior_var / total
        else:
            mean = obs
    return np.abs(state - plan.target_k), densities


def monte_carlo(config: SimConfig, workers: int = 1, chunk_size: int = 20000) -> MonteCarloReport:
    """Run all strategies ``config.trials`` times and aggregate.

    Trials are split into chunks written to preallocated per-trial slots, so
    the report is identical for any worker count or chunk order.
    """
    if config.trials < 1:
        raise ValueError("trials must be >= 1")
    plan = config.plan
    validate(plan, config.assumed)
    n_trials = config.trials
    stats: dict[str, StrategyStats] = {}
    for kind in STRATEGIES:
        streams = config.streams_for(kind)
        errors = np.empty(n_trials)
        densities = np.empty((n_trials, plan.n))

        def run_chunk(lo: int, hi: int, kind=kind, streams=streams):
            errs, dens = _run_block(config, kind, streams, np.arange(lo, hi))
            errors[lo:hi] = errs
            densities[lo:hi, :] = dens

        spans = [(lo, min(lo + chunk_size, n_trials)) for lo in range(0, n_trials, chunk_size)]
        if workers > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda s: run_chunk(*s), spans))
        else:
            for span in spans:
                run_chunk(*span)

        quantiles = {
            f"p{int(q * 100):02d}": float(np.quantile(errors, q)) for q in _QUANTILES
        }
        sd = float(np.std(errors, ddof=1)) if n_trials > 1 else 0.0
        stats[kind] = StrategyStats(
            mean_abs_error=float(np.mean(errors)),
            sd_abs_error=sd,
            mean_abs_error_pct=float(np.mean(errors)) / plan.target_k * 100.0,
            sd_abs_error_pct=sd / plan.target_k * 100.0,
            quantiles=quantiles,
            mean_density_per_step=tuple(float(x) for x in densities.mean(axis=0)),
            final_errors=tuple(float(e) for e in errors),
        )
    return MonteCarloReport(
        plan=plan,
        seed=config.seed,
        trials=n_trials,
        paired=config.paired,
        strategies=stats,
    )
