"""Canonical bench data shipped with the package, plus synthetic generators.

Three committed artifacts live under ``data/``:

  calibration_trials.csv     15 specimens x 5 bench trials (stiffness form).
                             Published summaries carry only per-specimen
                             means and standard deviations, so the trial
                             values are moment-exact reconstructions: each
                             specimen's 5 values hit the published mean and
                             sample sd exactly.
  reference_observations.json  Measured stiffness trajectories of the
                             reference physical builds for each strategy,
                             with their reported final errors.
  reference_densities.json   Infill densities applied at each step of those
                             reference builds.

Tests compare the files byte-exactly against the builder functions here, so
regenerating them is always safe and never changes downstream numbers.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from ..model import CalibrationDataset, ProcessModel, load_calibration_csv
from ..rng import derive_key, normals

_FIXTURE_SEED = 101

# specimen id, infill density (%), published mean and sample sd (kg/mm)
CANONICAL_SPECIMENS: tuple[tuple[str, float, float, float], ...] = (
    ("d10s1", 10.0, 6.4024, 0.4432),
    ("d10s2", 10.0, 7.5183, 0.5480),
    ("d10s3", 10.0, 8.4502, 0.6473),
    ("d15s1", 15.0, 10.2724, 0.4524),
    ("d15s2", 15.0, 8.4851, 0.5990),
    ("d15s3", 15.0, 8.5846, 0.8108),
    ("d20s1", 20.0, 11.7310, 0.5414),
    ("d20s2", 20.0, 9.4587, 0.6596),
    ("d20s3", 20.0, 11.8682, 1.7784),
    ("d25s1", 25.0, 13.1919, 0.7581),
    ("d25s2", 25.0, 11.4165, 0.5805),
    ("d25s3", 25.0, 12.8316, 0.3430),
    ("d30s1", 30.0, 12.9317, 0.9821),
    ("d30s2", 30.0, 14.5737, 0.5072),
    ("d30s3", 30.0, 12.8644, 0.7098),
)

TRIALS_PER_SPECIMEN = 5

# reference physical builds: observed stiffness per step and reported final
# error; open-loop builds measure only once, after the last leaf
REFERENCE_RUNS: tuple[dict, ...] = (
    {"n": 3, "target_k": 30.0, "strategy": "filtered",
     "observations": [11.53, 19.89, 30.43], "final_error_pct": 1.43},
    {"n": 3, "target_k": 30.0, "strategy": "unfiltered",
     "observations": [11.55, 18.65, 29.24], "final_error_pct": 2.53},
    {"n": 3, "target_k": 30.0, "strategy": "open_loop",
     "observations": [33.49], "final_error_pct": 11.63},
    {"n": 3, "target_k": 40.0, "strategy": "filtered",
     "observations": [12.53, 27.86, 40.89], "final_error_pct": 2.23},
    {"n": 3, "target_k": 40.0, "strategy": "unfiltered",
     "observations": [12.67, 26.31, 42.29], "final_error_pct": 5.73},
    {"n": 3, "target_k": 40.0, "strategy": "open_loop",
     "observations": [37.09], "final_error_pct": 7.28},
)

REFERENCE_DENSITY_RUNS: tuple[dict, ...] = (
    {"n": 3, "target_k": 30.0, "strategy": "filtered",
     "densities": [17.705, 15.475, 17.375]},
    {"n": 3, "target_k": 30.0, "strategy": "unfiltered",
     "densities": [17.705, 15.186, 22.108]},
    {"n": 3, "target_k": 30.0, "strategy": "open_loop",
     "densities": [17.705, 17.705, 17.705]},
    {"n": 3, "target_k": 40.0, "strategy": "filtered",
     "densities": [28.552, 29.648, 24.808]},
    {"n": 3, "target_k": 40.0, "strategy": "unfiltered",
     "densities": [28.552, 29.634, 29.734]},
    {"n": 3, "target_k": 40.0, "strategy": "open_loop",
     "densities": [28.552, 28.552, 28.552]},
)


def reference_model() -> ProcessModel:
    """Process model calibrated from the canonical bench dataset."""
    return ProcessModel(alpha=0.3073, beta=4.5593, sigma_p=1.0579, sigma_o=0.6907)


def generate_trials(mean: float, sd: float, count: int, seed: int) -> list[float]:
    """Seeded trial values whose sample mean and sample sd are exact.

    Deterministic normal draws are affinely rescaled so the sample moments
    (sd with the n-1 divisor) match the requested values to float precision.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    if sd < 0:
        raise ValueError("sd must be >= 0")
    if sd == 0.0:
        return [float(mean)] * count
    key = derive_key(seed, "trials")
    z = normals(key, np.arange(count, dtype=np.uint64))
    centered = z - z.mean()
    scale = math.sqrt(float(np.sum(centered**2)) / (count - 1))
    values = mean + sd * centered / scale
    return [float(v) for v in values]


def build_calibration_csv() -> str:
    lines = ["specimen_id,density_pct,trial,stiffness_kg_per_mm"]
    for sid, density, mean, sd in CANONICAL_SPECIMENS:
        trials = generate_trials(mean, sd, TRIALS_PER_SPECIMEN, derive_key(_FIXTURE_SEED, sid))
        for t, value in enumerate(trials, start=1):
            lines.append(f"{sid},{density:g},{t},{value!r}")
    return "\n".join(lines) + "\n"


def build_reference_observations_json() -> str:
    return json.dumps({"runs": list(REFERENCE_RUNS)}, indent=2) + "\n"


def build_reference_densities_json() -> str:
    return json.dumps({"runs": list(REFERENCE_DENSITY_RUNS)}, indent=2) + "\n"


def data_path(name: str) -> Path:
    return Path(str(resources.files(__package__) / "data" / name))


def _read(name: str) -> str:
    return (resources.files(__package__) / "data" / name).read_text(encoding="utf-8")


def calibration_dataset() -> CalibrationDataset:
    """The committed canonical bench dataset, parsed."""
    return load_calibration_csv(_read("calibration_trials.csv"))


def reference_observations() -> list[dict]:
    return json.loads(_read("reference_observations.json"))["runs"]


def reference_densities() -> list[dict]:
    return json.loads(_read("reference_densities.json"))["runs"]


def write_data_files(directory: Path | None = None) -> list[Path]:
    """(Re)write the committed artifacts; used by maintainers and tests."""
    directory = directory or Path(__file__).parent / "data"
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, text in (
        ("calibration_trials.csv", build_calibration_csv()),
        ("reference_observations.json", build_reference_observations_json()),
        ("reference_densities.json", build_reference_densities_json()),
    ):
        path = directory / name
        path.write_text(text, encoding="utf-8")
        out.append(path)
    return out
