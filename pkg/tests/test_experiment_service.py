"""
Tests for command orchestration and output files
"""
import json

import numpy as np
import pytest

from entangleometer.config import get_settings
from entangleometer.models.schemas import (
    CharacterizeConfig,
    DetectionModel,
    ExperimentConfig,
    FitCommandConfig,
    FitOptions,
    FitModel,
    Mode,
    SampleConfig,
    SweepConfig,
    Table1Bundle,
    Table1Case,
    Table1Sample,
)
from entangleometer.services.detection import derive_seed
from entangleometer.services.errors import InvalidSweepException
from entangleometer.services.experiment_service import (
    ExperimentService,
    config_hash,
    resolve_sample,
    resolve_seed,
)
from tests.helpers import HWP_DELTA

NOISELESS = DetectionModel.noiseless()


def experiment(**overrides) -> ExperimentConfig:
    values = dict(
        compensator=True,
        sample=SampleConfig(theta_deg=45.0, delta=HWP_DELTA),
        sweep=SweepConfig(step_deg=10.0),
        repetitions=2,
        seed=5,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def small_bundle(**overrides) -> Table1Bundle:
    values = dict(
        repetitions=2,
        axis_schedule_deg=[30.0, 45.0, 60.0],
        sweep=SweepConfig(step_deg=10.0),
        seed=8,
    )
    values.update(overrides)
    return Table1Bundle(**values)


def file_bytes(directory) -> dict:
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir())}


class TestProvenance:
    """Test config hashing and seed resolution"""

    def test_hash_is_stable(self):
        """Test equal configs hash equally and different configs differ"""
        assert config_hash(experiment()) == config_hash(experiment())
        assert config_hash(experiment()) != config_hash(experiment(seed=6))
        assert len(config_hash(experiment())) == 64

    def test_seed_precedence(self):
        """Test flag beats config beats settings default"""
        assert resolve_seed(3, 4) == 3
        assert resolve_seed(None, 4) == 4
        assert resolve_seed(None, None) == get_settings().default_seed

    def test_physical_sample(self):
        """Test a 404 nm path difference at 808 nm resolves to pi"""
        config = SampleConfig(
            theta_deg=45.0,
            physical={"wavelength_nm": 808.0, "birefringence": 0.0091, "thickness_nm": 44395.6},
        )
        sample = resolve_sample(config)
        assert sample.delta == pytest.approx(np.pi, abs=1e-6)
        assert sample.theta == pytest.approx(np.pi / 4)

    def test_sample_needs_exactly_one_source(self):
        with pytest.raises(ValueError):
            SampleConfig(theta_deg=45.0)


class TestSimulate:
    """Test the simulate command"""

    def test_dataset_per_repetition(self):
        """Test one dataset per repetition with derived seeds"""
        output = ExperimentService().simulate(experiment())
        assert list(output.datasets) == ["dataset_000", "dataset_001"]
        seeds = [entry["seed"] for entry in output.report["datasets"]]
        assert len(set(seeds)) == 2
        assert output.report["config_hash"] == config_hash(experiment())

    def test_refuses_uninformative_axis(self):
        """Test theta = 90 degrees without override is refused"""
        config = experiment(compensator=False, sample=SampleConfig(theta_deg=90.0, delta=1.0))
        with pytest.raises(InvalidSweepException):
            ExperimentService().simulate(config)

    def test_override_validity(self):
        """Test the override flag lets the uninformative sweep through"""
        config = experiment(compensator=False, sample=SampleConfig(theta_deg=90.0, delta=1.0))
        output = ExperimentService().simulate(config, override_validity=True)
        assert len(output.datasets) == 2

    def test_axis_schedule_skips_invalid(self):
        """Test scheduled axes violating the sensitivity condition are listed as skipped"""
        config = experiment(repetitions=1, axis_schedule_deg=[0.0, 45.0, 90.0, 135.0])
        output = ExperimentService().simulate(config)
        assert [entry["theta_deg"] for entry in output.report["datasets"]] == pytest.approx([45.0, 135.0])
        assert [entry["theta_deg"] for entry in output.report["skipped"]] == pytest.approx([0.0, 90.0])

    def test_files_independent_of_workers(self, tmp_path):
        """Test outputs are byte-identical for one and four workers"""
        config = experiment(repetitions=6)
        ExperimentService(workers=1).simulate(config).write(tmp_path / "serial")
        ExperimentService(workers=4).simulate(config).write(tmp_path / "parallel")
        assert file_bytes(tmp_path / "serial") == file_bytes(tmp_path / "parallel")

    def test_written_files(self, tmp_path):
        """Test CSV, sidecar and summary are written"""
        written = ExperimentService().simulate(experiment(repetitions=1)).write(tmp_path)
        assert sorted(path.name for path in written) == ["dataset_000.csv", "dataset_000.json", "simulate_summary.json"]
        assert (tmp_path / "simulate_summary.json").read_text().endswith("}\n")


class TestFit:
    """Test the fit command"""

    def test_geometry_from_metadata(self):
        """Test fitting a simulated HWP run without a config"""
        dataset = ExperimentService().simulate(experiment(detection=NOISELESS)).datasets["dataset_000"]
        report = ExperimentService().fit(dataset).report
        assert report["fit"]["model"] == FitModel.COMPENSATOR.value
        assert report["fit"]["delta_hat"] == pytest.approx(HWP_DELTA, abs=1e-9)
        assert "sensitivity" not in report

    def test_relative_error_and_sensitivity(self):
        """Test delta_std and the sensitivity scan land in the report"""
        dataset = ExperimentService().simulate(experiment()).datasets["dataset_000"]
        report = ExperimentService().fit(dataset, sensitivity=True, delta_std=HWP_DELTA).report
        assert report["relative_error"] >= 0
        assert set(report["sensitivity"]) >= {"spread", "dependent", "threshold", "scale_anchors"}

    def test_senarmont_extremum(self):
        """Test the Senarmont family also reports the extremum reading"""
        dataset = ExperimentService().simulate(experiment(detection=NOISELESS)).datasets["dataset_000"]
        config = FitCommandConfig(fit=FitOptions(model=FitModel.SENARMONT))
        report = ExperimentService().fit(dataset, config).report
        assert report["senarmont_extremum"]["delta_hat"] == pytest.approx(report["fit"]["delta_hat"], abs=1e-6)

    def test_fit_curve_table(self):
        """Test the fitted curve overlays the data on noise-free input"""
        dataset = ExperimentService().simulate(experiment(detection=NOISELESS)).datasets["dataset_000"]
        curve = ExperimentService().fit(dataset).tables["fit_curve"]
        assert list(curve.columns) == ["angle_rad", "counts", "fitted"]
        assert np.allclose(curve["counts"], curve["fitted"], rtol=1e-9, atol=1e-6)


class TestCharacterize:
    """Test the characterize command"""

    def test_ideal_source(self):
        """Test v = 1 without noise"""
        output = ExperimentService().characterize(CharacterizeConfig(detection=NOISELESS))
        report = output.report
        assert report["visibility_h"]["visibility"] == pytest.approx(1.0, abs=1e-9)
        assert report["visibility_d"]["visibility"] == pytest.approx(1.0, abs=1e-9)
        assert report["chsh"]["s_value"] == pytest.approx(2.8284, abs=1e-4)
        assert report["tomography"]["fidelity_to_target"] == pytest.approx(1.0, abs=1e-6)
        assert set(output.tables) == {"fringes_H", "fringes_D", "chsh", "tomography_counts"}
        assert {"real", "imag", "config_hash", "seed"} <= set(output.documents["rho"])

    def test_werner_fidelity(self):
        """Test v = 0.97 gives F close to 0.9775"""
        report = ExperimentService().characterize(CharacterizeConfig(source_visibility=0.97, seed=4)).report
        assert report["tomography"]["fidelity_to_target"] == pytest.approx(0.9775, abs=0.01)
        assert report["chsh_violation_sigmas"] > 3


class TestTable1:
    """Test the Table-1 comparison"""

    def test_grid_shape(self, tmp_path):
        """Test the default cases and samples give a 3 x 2 grid"""
        output = ExperimentService().table1(small_bundle())
        cells = output.report["cells"]
        assert len(cells) == 6
        assert all(cell["status"] == "ok" for cell in cells)
        assert output.report["note"].startswith("Values are simulated")
        written = output.write(tmp_path)
        expected = {"table1.txt", "table1.json", "time_series.csv", "time_series.json", "axes_scan.csv", "axes_scan.json"}
        assert expected == {p.name for p in written}
        text = (tmp_path / "table1.txt").read_text()
        assert "Initial condition dependence" in text

    def test_noise_free_exact(self):
        """Test noise-free cells have relative errors below 1e-8"""
        bundle = small_bundle(
            detection=NOISELESS,
            samples=[Table1Sample(label="HWP", delta_std=HWP_DELTA), Table1Sample(label="QWP", delta_std=1.5522)],
        )
        output = ExperimentService().table1(bundle)
        for cell in output.report["cells"]:
            assert cell["long_duration"]["max_abs_relative_error"] < 1e-8
            assert cell["varying_axes"]["max_abs_relative_error"] < 1e-8
        assert output.tables["time_series"]["relative_error"].abs().max() < 1e-8

    def test_failed_cells_marked(self):
        """Test a cell whose nominal axis is uninformative is marked failed"""
        output = ExperimentService().table1(small_bundle(nominal_theta_deg=0.0))
        assert all(cell["status"] == "failed" for cell in output.report["cells"])
        assert "failed" in output.texts["table1.txt"]

    def test_workers_do_not_change_report(self):
        """Test the report is independent of the worker count"""
        bundle = small_bundle()
        assert ExperimentService(workers=1).table1(bundle).report == ExperimentService(workers=3).table1(bundle).report

    @pytest.mark.slow
    def test_quantum_beats_classical_at_matched_counts(self):
        """Test the dark-count floor makes the classical spread larger at matched signal"""
        # classical fraction is twice the compensator fraction, so half the singles match the signal
        pair_budget = 2.0e4 * 0.6 * 0.6
        bundle = small_bundle(
            cases=[
                Table1Case(label="quantum", mode=Mode.QUANTUM, compensator=True),
                Table1Case(label="classical", mode=Mode.CLASSICAL, compensator=True),
            ],
            samples=[Table1Sample(label="QWP", delta_std=1.56, delta_true=1.5522)],
            repetitions=400,
            axis_schedule_deg=[30.0, 60.0],
            sweep=SweepConfig(step_deg=5.0),
            detection=DetectionModel(singles_rate_classical=pair_budget / 2),
        )
        quantum, classical = ExperimentService(workers=4).table1(bundle).report["cells"]
        assert quantum["long_duration"]["std_delta"] <= classical["long_duration"]["std_delta"]


def provenance_of(path) -> dict:
    """Provenance carried by a written file, through its JSON sidecar for CSVs"""
    if path.suffix == ".csv":
        return json.loads(path.with_suffix(".json").read_text())
    if path.suffix == ".json":
        return json.loads(path.read_text())
    header = path.read_text().splitlines()[1]
    config_part, seed_part = header.split("  ")
    return {"config_hash": config_part.split(": ")[1], "seed": int(seed_part.split(": ")[1])}


class TestOutputProvenance:
    """Test every written file records the config hash and seed"""

    def assert_provenance(self, written, config_hash_value, seed):
        assert written
        for path in written:
            payload = provenance_of(path)
            assert payload["config_hash"] == config_hash_value, path.name
            assert payload["seed"] == seed, path.name

    def test_simulate_files(self, tmp_path):
        """Test the summary records the root seed and each dataset its derived seed"""
        config = experiment(repetitions=1)
        written = ExperimentService().simulate(config).write(tmp_path)
        summary = [p for p in written if p.name == "simulate_summary.json"]
        datasets = [p for p in written if p.name.startswith("dataset_")]
        self.assert_provenance(summary, config_hash(config), 5)
        self.assert_provenance(datasets, config_hash(config), derive_seed(5, 0, 0))

    def test_fit_files(self, tmp_path):
        """Test the fit report and the fitted-curve table"""
        dataset = ExperimentService().simulate(experiment(repetitions=1)).datasets["dataset_000"]
        written = ExperimentService().fit(dataset).write(tmp_path)
        assert {"fit_curve.csv", "fit_curve.json", "fit_report.json"} == {p.name for p in written}
        self.assert_provenance(written, config_hash(FitCommandConfig()), dataset.metadata.seed)

    def test_characterize_files(self, tmp_path):
        """Test fringes, CHSH and tomography tables alongside rho and the summary"""
        config = CharacterizeConfig(detection=NOISELESS, seed=12)
        written = ExperimentService().characterize(config).write(tmp_path)
        assert "tomography_counts.json" in {p.name for p in written}
        self.assert_provenance(written, config_hash(config), 12)

    def test_table1_files(self, tmp_path):
        """Test time series, axes scan, text table and JSON report"""
        bundle = small_bundle(detection=NOISELESS)
        written = ExperimentService().table1(bundle).write(tmp_path)
        self.assert_provenance(written, config_hash(bundle), 8)

    def test_table_sidecar_lists_columns(self, tmp_path):
        ExperimentService().characterize(CharacterizeConfig(detection=NOISELESS)).write(tmp_path)
        sidecar = json.loads((tmp_path / "chsh.json").read_text())
        assert sidecar["file"] == "chsh.csv"
        assert sidecar["columns"][:2] == ["a_deg", "b_deg"]
