import numpy as np
import pytest

from leafctl.calibration import summarize_specimens
from leafctl.fixtures import (
    CANONICAL_SPECIMENS,
    TRIALS_PER_SPECIMEN,
    build_calibration_csv,
    build_reference_densities_json,
    build_reference_observations_json,
    calibration_dataset,
    data_path,
    generate_trials,
    reference_densities,
    reference_model,
    reference_observations,
)


class TestGenerateTrials:
    def test_exact_moments(self):
        values = generate_trials(6.4024, 0.4432, 5, 1234)
        assert len(values) == 5
        assert np.mean(values) == pytest.approx(6.4024, abs=1e-9)
        assert np.std(values, ddof=1) == pytest.approx(0.4432, abs=1e-9)

    def test_zero_sd_returns_copies(self):
        assert generate_trials(3.5, 0.0, 5, 7) == [3.5] * 5

    def test_deterministic_in_seed(self):
        assert generate_trials(1.0, 0.2, 4, 9) == generate_trials(1.0, 0.2, 4, 9)
        assert generate_trials(1.0, 0.2, 4, 9) != generate_trials(1.0, 0.2, 4, 10)

    def test_count_below_two_rejected(self):
        with pytest.raises(ValueError):
            generate_trials(1.0, 0.1, 1, 0)


class TestCommittedFiles:
    def test_files_match_builders_byte_exactly(self):
        assert data_path("calibration_trials.csv").read_text() == build_calibration_csv()
        assert (
            data_path("reference_observations.json").read_text()
            == build_reference_observations_json()
        )
        assert (
            data_path("reference_densities.json").read_text()
            == build_reference_densities_json()
        )

    def test_summaries_reproduce_published_cells(self):
        summaries = {s.specimen_id: s for s in summarize_specimens(calibration_dataset())}
        assert len(summaries) == len(CANONICAL_SPECIMENS)
        for sid, density, mean, sd in CANONICAL_SPECIMENS:
            s = summaries[sid]
            assert s.density_pct == density
            assert len(s.trial_stiffnesses) == TRIALS_PER_SPECIMEN
            assert s.mean_stiffness == pytest.approx(mean, abs=5e-4)
            assert s.sd_stiffness == pytest.approx(sd, abs=5e-4)

    def test_reference_observation_errors_self_consistent(self):
        # reported final errors match the final observation vs the target
        for run in reference_observations():
            final = run["observations"][-1]
            error = abs(final - run["target_k"]) / run["target_k"] * 100.0
            assert error == pytest.approx(run["final_error_pct"], abs=0.01)

    def test_reference_densities_cover_both_builds(self):
        runs = reference_densities()
        assert {(r["n"], r["target_k"]) for r in runs} == {(3, 30.0), (3, 40.0)}
        for run in runs:
            assert len(run["densities"]) == run["n"]

    def test_open_loop_densities_follow_reference_model(self):
        model = reference_model()
        for run in reference_densities():
            if run["strategy"] != "open_loop":
                continue
            expected = (run["target_k"] / run["n"] - model.beta) / model.alpha
            for d in run["densities"]:
                assert d == pytest.approx(expected, abs=1e-3)


def test_reference_model_noise_levels_positive():
    m = reference_model()
    assert m.sigma_p > 0 and m.sigma_o > 0 and m.alpha > 0
