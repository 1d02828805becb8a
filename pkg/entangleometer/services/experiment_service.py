"""
Experiment Service
Command orchestration shared by the CLI and the HTTP surface: config
resolution, seeded repetitions, source characterization, Table-1 assembly
and deterministic output files
"""
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from entangleometer.config import SCHEMA_VERSION, get_settings
from entangleometer.models.schemas import (
    CharacterizeConfig,
    ExperimentConfig,
    FitCommandConfig,
    FitConfig,
    FitModel,
    FitOptions,
    Mode,
    PhysicalSample,
    SampleConfig,
    SampleSpec,
    SweepConfig,
    SweepDataset,
    SweepPlan,
    SweptParameter,
    Table1Bundle,
    Table1Case,
    Table1Sample,
)
from entangleometer.services.biphoton import bell_phi_plus, depolarize, sweep_validity
from entangleometer.services.characterization import rho_to_json, simulate_characterization
from entangleometer.services.classical_psa import classical_validity
from entangleometer.services.detection import (
    dataset_frame,
    derive_seed,
    run_sweep,
    save_dataset,
    write_csv,
    write_json,
)
from entangleometer.services.errors import (
    DegenerateSweepException,
    EntangleometerException,
    InvalidSweepException,
)
from entangleometer.services.estimation import (
    aggregate,
    fit_retardance,
    model_curve,
    relative_error,
    senarmont_estimate,
    sensitivity_scan,
    signed_relative_error,
)
from entangleometer.services.polcore import retardance_of

logger = logging.getLogger(__name__)

SIMULATED_NOTE = "Values are simulated by entangleometer; they are not hardware measurements."


# ==================== Provenance ====================

def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: BaseModel) -> str:
    """sha256 of the canonical JSON form of a validated config"""
    return hashlib.sha256(canonical_json(config.model_dump(mode="json")).encode("utf-8")).hexdigest()


def resolve_seed(override: Optional[int], configured: Optional[int]) -> int:
    """Flag beats config file beats the settings default"""
    if override is not None:
        return override
    return configured if configured is not None else get_settings().default_seed


@dataclass
class CommandOutput:
    """
    Report plus the files a command writes; nothing touches disk until write()

    Every table gets a `<name>.json` sidecar carrying the provenance (config
    hash and seed) and its column list.
    """
    report: dict
    provenance: Dict[str, object] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    documents: Dict[str, dict] = field(default_factory=dict)
    datasets: Dict[str, SweepDataset] = field(default_factory=dict)
    texts: Dict[str, str] = field(default_factory=dict)

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written: List[Path] = []
        for name, dataset in self.datasets.items():
            written.extend(save_dataset(dataset, out_dir / f"{name}.csv"))
        for name, frame in self.tables.items():
            written.append(write_csv(out_dir / f"{name}.csv", frame))
            written.append(write_json(out_dir / f"{name}.json", self.table_sidecar(name, frame)))
        for name, payload in self.documents.items():
            written.append(write_json(out_dir / f"{name}.json", payload))
        for name, text in self.texts.items():
            path = out_dir / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        logger.info("Wrote %d files to %s", len(written), out_dir)
        return written

    def table_sidecar(self, name: str, frame: pd.DataFrame) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "file": f"{name}.csv",
            "columns": [str(column) for column in frame.columns],
            **self.provenance,
        }


# ==================== Config Resolution ====================

def resolve_sample(config: SampleConfig) -> SampleSpec:
    theta = float(np.deg2rad(config.theta_deg))
    if config.delta is not None:
        return SampleSpec(theta=theta, delta=config.delta)
    physical = PhysicalSample(**config.physical.model_dump(), axis=theta)
    return SampleSpec(theta=theta, delta=retardance_of(physical))


def default_model(mode: Mode, compensator: bool) -> FitModel:
    if mode == Mode.CLASSICAL:
        return FitModel.CLASSICAL_PSA
    return FitModel.COMPENSATOR if compensator else FitModel.NO_COMPENSATOR


def build_plan(mode: Mode, compensator: bool, sweep: SweepConfig, source_visibility: float = 1.0) -> SweepPlan:
    return SweepPlan(
        mode=mode,
        swept_parameter=SweptParameter.IDLER_HWP if mode == Mode.QUANTUM else SweptParameter.ANALYZER,
        angles=sweep.angles_rad(),
        signal_hwp=float(np.deg2rad(sweep.signal_hwp_deg)),
        polarizer_angle=float(np.deg2rad(sweep.polarizer_deg)),
        compensator_present=compensator,
        source_visibility=source_visibility,
    )


def build_fit_config(options: FitOptions, model: FitModel, plan: SweepPlan, theta: float, compensator: bool) -> FitConfig:
    """Fit geometry comes from the plan and the sample axis; options pick the family and optimizer knobs"""
    return FitConfig(
        model=options.model or model,
        signal_hwp=plan.signal_hwp,
        theta=theta,
        polarizer_angle=plan.polarizer_angle,
        compensator=compensator,
        **options.model_dump(exclude={"model"}),
    )


def plan_is_valid(plan: SweepPlan, theta: float) -> bool:
    if plan.mode == Mode.QUANTUM:
        return sweep_validity(plan.signal_hwp, theta)
    return classical_validity(plan.polarizer_angle, theta)


# ==================== Service ====================

class ExperimentService:
    """Runs the batch commands; every result is a pure function of (config, seed)"""

    def __init__(self, workers: int = 1):
        self.workers = workers

    def _map(self, function: Callable, items: Sequence, workers: Optional[int] = None) -> list:
        """Ordered map; results do not depend on the worker count"""
        workers = workers or self.workers
        if workers <= 1 or len(items) <= 1:
            return [function(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))

    # -------------------- simulate --------------------

    def simulate(
        self,
        config: ExperimentConfig,
        seed: Optional[int] = None,
        override_validity: bool = False,
        workers: Optional[int] = None,
    ) -> CommandOutput:
        """
        One dataset per (sample axis, repetition)

        Without an axis schedule a sweep violating the sensitivity condition
        is refused; with a schedule such axes are skipped and listed.
        """
        seed = resolve_seed(seed, config.seed)
        override = config.override_validity or override_validity
        digest = config_hash(config)
        sample = resolve_sample(config.sample)
        plan = build_plan(config.mode, config.compensator, config.sweep, config.source_visibility)

        if config.axis_schedule_deg is None:
            thetas = [sample.theta]
        else:
            thetas = [float(np.deg2rad(theta)) for theta in config.axis_schedule_deg]
        jobs = [
            (axis_index, theta, repetition)
            for axis_index, theta in enumerate(thetas)
            for repetition in range(config.repetitions)
        ]

        def job(item):
            axis_index, theta, repetition = item
            try:
                return run_sweep(
                    plan,
                    SampleSpec(theta=theta, delta=sample.delta),
                    config.detection,
                    seed=derive_seed(seed, axis_index, repetition),
                    override_validity=override,
                    config_hash=digest,
                )
            except InvalidSweepException as e:
                if config.axis_schedule_deg is None:
                    raise
                return e

        output = CommandOutput(report={})
        entries, skipped = [], []
        for index, ((axis_index, theta, repetition), result) in enumerate(zip(jobs, self._map(job, jobs, workers))):
            theta_deg = float(np.rad2deg(theta))
            if isinstance(result, InvalidSweepException):
                skipped.append({"theta_deg": theta_deg, "repetition": repetition, "reason": result.reason})
                continue
            name = f"dataset_{index:03d}"
            output.datasets[name] = result
            entries.append({
                "file": f"{name}.csv",
                "theta_deg": theta_deg,
                "repetition": repetition,
                "seed": result.metadata.seed,
            })

        output.report = {
            "command": "simulate",
            "schema_version": SCHEMA_VERSION,
            "config_hash": digest,
            "seed": seed,
            "mode": config.mode.value,
            "delta_true": sample.delta,
            "datasets": entries,
            "skipped": skipped,
        }
        output.documents["simulate_summary"] = output.report
        logger.info("Simulated %d datasets (%d skipped)", len(entries), len(skipped))
        return output

    # -------------------- fit --------------------

    def fit(
        self,
        dataset: SweepDataset,
        config: Optional[FitCommandConfig] = None,
        sensitivity: bool = False,
        delta_std: Optional[float] = None,
    ) -> CommandOutput:
        """Fit one dataset; geometry defaults to its metadata"""
        config = config or FitCommandConfig()
        metadata = dataset.metadata
        plan = metadata.plan
        if config.signal_hwp_deg is not None or config.polarizer_deg is not None:
            plan = plan.model_copy(update={
                "signal_hwp": plan.signal_hwp if config.signal_hwp_deg is None else float(np.deg2rad(config.signal_hwp_deg)),
                "polarizer_angle": plan.polarizer_angle if config.polarizer_deg is None else float(np.deg2rad(config.polarizer_deg)),
            })
        if config.theta_deg is not None:
            theta = float(np.deg2rad(config.theta_deg))
        elif metadata.ground_truth is not None:
            theta = metadata.ground_truth.theta
        else:
            theta = FitConfig.model_fields["theta"].default
        compensator = plan.compensator_present if config.compensator is None else config.compensator

        fit_config = build_fit_config(config.fit, default_model(metadata.mode, compensator), plan, theta, compensator)
        result = fit_retardance(dataset, fit_config)

        report = {
            "command": "fit",
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash(config),
            "dataset_config_hash": metadata.config_hash,
            "seed": metadata.seed,
            "fit_config": fit_config.model_dump(mode="json"),
            "fit": result.model_dump(mode="json"),
        }
        if fit_config.model == FitModel.SENARMONT:
            try:
                report["senarmont_extremum"] = senarmont_estimate(dataset).model_dump(mode="json")
            except DegenerateSweepException as e:
                report["senarmont_extremum"] = e.to_dict()

        reference = delta_std if delta_std is not None else config.delta_std
        if reference is not None:
            report["delta_std"] = reference
            report["relative_error"] = relative_error(result.delta_hat, reference)
            report["signed_relative_error"] = signed_relative_error(result.delta_hat, reference)
        if sensitivity:
            report["sensitivity"] = sensitivity_scan(dataset, fit_config).model_dump(mode="json")

        fraction, _ = model_curve(fit_config)(dataset.angles(), result.delta_hat)
        curve = pd.DataFrame({
            "angle_rad": dataset.angles(),
            "counts": dataset.counts(),
            "fitted": result.scale_hat * fraction,
        })
        logger.info("Fit %s: delta_hat=%.6f scale_hat=%.1f", fit_config.model.value, result.delta_hat, result.scale_hat)
        return CommandOutput(
            report=report,
            provenance={"config_hash": report["config_hash"], "seed": metadata.seed},
            tables={"fit_curve": curve},
            documents={"fit_report": report},
        )

    # -------------------- characterize --------------------

    def characterize(self, config: CharacterizeConfig, seed: Optional[int] = None) -> CommandOutput:
        """Fringes, CHSH and tomography for phi+ depolarized to the configured visibility"""
        seed = resolve_seed(seed, config.seed)
        digest = config_hash(config)
        rho = depolarize(bell_phi_plus(), config.source_visibility)
        suite = simulate_characterization(
            rho,
            config.detection,
            seed=seed,
            counts_per_setting=config.counts_per_setting,
            settings=config.chsh.to_settings(),
            fringe_points=config.fringe_points,
        )

        chsh_rows = []
        for (alpha, beta), counts, correlation, std in zip(
            suite.chsh.settings.pairs(), suite.chsh.counts, suite.chsh.correlations, suite.chsh.correlation_stds
        ):
            chsh_rows.append({
                "a_deg": float(np.rad2deg(alpha)),
                "b_deg": float(np.rad2deg(beta)),
                "counts_tt": counts[0],
                "counts_tr": counts[1],
                "counts_rt": counts[2],
                "counts_rr": counts[3],
                "correlation": correlation,
                "correlation_std": std,
            })

        visibility_h = suite.visibility_h.visibility
        s_value, s_std = suite.chsh.s_value, suite.chsh.s_std
        report = {
            "command": "characterize",
            "schema_version": SCHEMA_VERSION,
            "config_hash": digest,
            "seed": seed,
            "source_visibility": config.source_visibility,
            "visibility_h": suite.visibility_h.model_dump(mode="json"),
            "visibility_d": suite.visibility_d.model_dump(mode="json"),
            "chsh": suite.chsh.model_dump(mode="json"),
            "chsh_violation_sigmas": (s_value - 2.0) / s_std if s_std > 0 else None,
            "tomography": {
                "fidelity_to_target": suite.tomography.fidelity_to_target,
                "log_likelihood": suite.tomography.log_likelihood,
                "iterations": suite.tomography.iterations,
            },
            "fidelity_from_visibility": (1.0 + 3.0 * visibility_h) / 4.0,
        }
        rho_document = rho_to_json(suite.tomography.rho)
        rho_document.update({"config_hash": digest, "seed": seed})
        return CommandOutput(
            report=report,
            provenance={"config_hash": digest, "seed": seed},
            tables={
                "fringes_H": dataset_frame(suite.fringe_h),
                "fringes_D": dataset_frame(suite.fringe_d),
                "chsh": pd.DataFrame(chsh_rows),
                "tomography_counts": suite.tomography_counts,
            },
            documents={"rho": rho_document, "characterization": report},
        )

    # -------------------- table1 --------------------

    def table1(self, bundle: Table1Bundle, seed: Optional[int] = None, workers: Optional[int] = None) -> CommandOutput:
        """
        Table-1 style comparison over cases x samples

        Each cell reports the long-duration spread (repeated sweeps at the
        nominal axis), the varying-axes spread (one sweep per scheduled axis)
        and the initial-scale dependence flag. A failing cell is marked and
        the run continues.
        """
        seed = resolve_seed(seed, bundle.seed)
        digest = config_hash(bundle)
        cells = [
            (case_index, case, sample_index, sample)
            for case_index, case in enumerate(bundle.cases)
            for sample_index, sample in enumerate(bundle.samples)
        ]

        def cell(item):
            case_index, case, sample_index, sample = item
            try:
                return self._table1_cell(bundle, seed, case_index, case, sample_index, sample)
            except EntangleometerException as e:
                logger.warning("⚠️ Table cell %s / %s failed: %s", case.label, sample.label, e.reason)
                failed = {"case": case.label, "sample": sample.label, "status": "failed", "error": e.to_dict()}
                return failed, [], []

        results = self._map(cell, cells, workers)
        report = {
            "command": "table1",
            "schema_version": SCHEMA_VERSION,
            "config_hash": digest,
            "seed": seed,
            "note": SIMULATED_NOTE,
            "spread_labels": {
                "long_duration": "sample std over repeated sweeps at the nominal sample axis",
                "varying_axes": "sample std over one sweep per scheduled sample axis",
            },
            "cells": [result[0] for result in results],
        }
        time_rows = [row for result in results for row in result[1]]
        axis_rows = [row for result in results for row in result[2]]
        return CommandOutput(
            report=report,
            provenance={"config_hash": digest, "seed": seed},
            tables={
                "time_series": pd.DataFrame(time_rows, columns=["case", "sample", "repetition", "delta_hat", "relative_error"]),
                "axes_scan": pd.DataFrame(axis_rows, columns=["case", "sample", "theta_deg", "status", "delta_hat", "relative_error"]),
            },
            documents={"table1": report},
            texts={"table1.txt": format_table1(report)},
        )

    def _table1_cell(
        self,
        bundle: Table1Bundle,
        seed: int,
        case_index: int,
        case: Table1Case,
        sample_index: int,
        sample: Table1Sample,
    ):
        plan = build_plan(case.mode, case.compensator, bundle.sweep, bundle.source_visibility)
        model = default_model(case.mode, case.compensator)
        nominal = float(np.deg2rad(bundle.nominal_theta_deg))
        labels = {"case": case.label, "sample": sample.label}

        nominal_fit = build_fit_config(bundle.fit, model, plan, nominal, case.compensator)
        datasets = [
            run_sweep(
                plan,
                SampleSpec(theta=nominal, delta=sample.truth),
                bundle.detection,
                seed=derive_seed(seed, case_index, sample_index, 0, repetition),
            )
            for repetition in range(bundle.repetitions)
        ]
        fits = [fit_retardance(dataset, nominal_fit) for dataset in datasets]
        time_rows = [
            {**labels, "repetition": repetition, "delta_hat": result.delta_hat,
             "relative_error": signed_relative_error(result.delta_hat, sample.delta_std)}
            for repetition, result in enumerate(fits)
        ]

        axis_fits, axis_rows, skipped = [], [], []
        for axis_index, theta_deg in enumerate(bundle.axis_schedule_deg):
            theta = float(np.deg2rad(theta_deg))
            if not plan_is_valid(plan, theta):
                skipped.append(theta_deg)
                axis_rows.append({**labels, "theta_deg": theta_deg, "status": "skipped",
                                  "delta_hat": None, "relative_error": None})
                continue
            dataset = run_sweep(
                plan,
                SampleSpec(theta=theta, delta=sample.truth),
                bundle.detection,
                seed=derive_seed(seed, case_index, sample_index, 1, axis_index),
            )
            result = fit_retardance(dataset, build_fit_config(bundle.fit, model, plan, theta, case.compensator))
            axis_fits.append(result)
            axis_rows.append({**labels, "theta_deg": theta_deg, "status": "ok", "delta_hat": result.delta_hat,
                              "relative_error": signed_relative_error(result.delta_hat, sample.delta_std)})

        scan = sensitivity_scan(datasets[0], nominal_fit)
        report = {
            **labels,
            "status": "ok",
            "mode": case.mode.value,
            "compensator": case.compensator,
            "delta_std": sample.delta_std,
            "delta_true": sample.truth,
            "long_duration": aggregate(fits, sample.delta_std).model_dump(mode="json"),
            "varying_axes": aggregate(axis_fits, sample.delta_std).model_dump(mode="json") if len(axis_fits) >= 2 else None,
            "skipped_axes_deg": skipped,
            "dependent": scan.dependent,
            "sensitivity": scan.model_dump(mode="json"),
        }
        return report, time_rows, axis_rows


# ==================== Text Table ====================

def format_table1(report: dict) -> str:
    """Aligned plain-text rendering of a table1 report"""
    rows = []
    for cell in report["cells"]:
        if cell["status"] != "ok":
            rows.append({"Case": cell["case"], "Sample": cell["sample"], "Long-duration": "failed",
                         "Rel. error (LD)": "", "Varying axes": "failed", "Rel. error (VA)": "",
                         "Initial condition dependence": cell["error"]["error"]})
            continue
        axes = cell["varying_axes"]
        rows.append({
            "Case": cell["case"],
            "Sample": cell["sample"],
            "Long-duration": cell["long_duration"]["delta_cell"],
            "Rel. error (LD)": cell["long_duration"]["relative_error_cell"],
            "Varying axes": axes["delta_cell"] if axes else "n/a",
            "Rel. error (VA)": axes["relative_error_cell"] if axes else "n/a",
            "Initial condition dependence": "Yes" if cell["dependent"] else "No",
        })
    table = pd.DataFrame(rows).to_string(index=False)
    return f"{report['note']}\nconfig_hash: {report['config_hash']}  seed: {report['seed']}\n\n{table}\n"


experiment_service = ExperimentService()
