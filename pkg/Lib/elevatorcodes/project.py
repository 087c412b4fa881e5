"""Pipeline stages behind the command line: codes, circuits, samples, decoding, fits."""
from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np
from fontTools.misc.cliTools import makeOutputFileName
from fontTools.misc.loggingTools import Timer

from elevatorcodes import overhead as overhead_mod
from elevatorcodes.circuit import Circuit, NoiseModel
from elevatorcodes.codes import combine, is_matchable, resolve_outer
from elevatorcodes.decoder import BpOsdDecoder
from elevatorcodes.dem import DetectorErrorModel
from elevatorcodes.errors import CodeFormatError, FitError
from elevatorcodes.experiments import (
    CSV_COLUMNS,
    FIT_INPUTS,
    build_memory_circuit,
    points_for_fit,
    read_results,
    run_memory,
    write_result_json,
    write_results_csv,
)
from elevatorcodes.fitting import (
    fit_power_law,
    load_models,
    model_registry,
    save_models,
)
from elevatorcodes.layout import count_resources
from elevatorcodes.sim import (
    extract_dem,
    pack_rows,
    read_packed_rows,
    sample,
    write_samples,
)
from elevatorcodes.verification import CodeChecker

logger = logging.getLogger(__name__)
timer = Timer(logging.getLogger("elevatorcodes.timer"), level=logging.DEBUG)

# desk-scale repetition operating points used to refit rep_z and rep_x
DESK_DISTANCES = (3, 5, 7)
DESK_P_Z = (1e-2, 2e-2)
DESK_P_X = (5e-4, 1e-3)

FIGURES = {
    "fig1": {"kind": "eta", "p_z": 1e-3, "target": 1e-12},
    "fig3a": {"kind": "target", "p_z": 1e-3, "eta": 1e6},
    "fig3b": {"kind": "target", "p_z": 1e-2, "eta": 1e6},
}


def _ensure_parent_dir(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return path


def _probability(p):
    return float(f"{p:.5e}")


class ElevatorProject:
    """Provides methods for building and evaluating elevator codes."""

    def __init__(self, threads=1):
        self.threads = threads or 1
        logger.debug("Using %d worker process(es)", self.threads)

    def _output_path(self, name, ext, output_dir=None):
        return makeOutputFileName(
            name, outputDir=output_dir or os.getcwd(), extension=ext, overWrite=True
        )

    # -- codes ---------------------------------------------------------------

    @timer()
    def code_info(self, code, d_z=None, check=False, bruteforce=True):
        outer = resolve_outer(code)
        info = {
            "name": outer.name,
            "n": outer.n,
            "k": outer.k,
            "d": outer.claimed_distance,
            "m": outer.m,
            "matchable": is_matchable(outer),
        }
        if d_z is not None:
            css = combine(outer, d_z)
            n, k, d_x, dz = css.parameters
            info["css"] = {
                "n": n,
                "k": k,
                "d_x": d_x,
                "d_z": dz,
                "rate": _probability(css.rate),
                "label": css.label,
            }
            if check:
                info["checks_passed"] = CodeChecker(css, bruteforce).check()
        elif check:
            info["checks_passed"] = CodeChecker(combine(outer, 1), bruteforce).check()
        if info["d"] is None and bruteforce:
            info["d"] = outer.distance
        return info

    # -- circuits ------------------------------------------------------------

    @timer()
    def build_circuit(
        self,
        d_z,
        basis,
        outer=None,
        ancillae=1,
        rounds=None,
        noise=None,
        output=None,
    ):
        family = "concat" if outer else "repetition"
        circuit, _, _ = build_memory_circuit(
            family,
            d_z,
            basis,
            noise,
            outer=outer,
            ancillae=ancillae,
            rounds=rounds if family == "repetition" else None,
            outer_rounds=rounds if family == "concat" else None,
        )
        if output is None:
            prefix = Path(outer).stem if outer else "repetition"
            stem = f"{prefix}_d{d_z}_{basis.lower()}mem"
            output = self._output_path(stem, ".circuit")
        logger.info("Saving %s", output)
        circuit.save(_ensure_parent_dir(output))
        resources = count_resources(circuit)
        return {
            "path": str(output),
            "name": circuit.name,
            "qubits": resources.qubits,
            "inner_rounds": resources.inner_rounds,
            "cnot_count": resources.cnot_count,
            "detectors": circuit.detector_count,
            "observables": circuit.observable_count,
            "noisy": circuit.has_noise,
        }

    @timer()
    def sample(self, circuit_path, shots, seed, output):
        circuit = Circuit.load(circuit_path)
        result = sample(circuit, shots, seed, threads=self.threads)
        logger.info("Saving %s", output)
        write_samples(result, _ensure_parent_dir(output))
        return result.header()

    @timer()
    def extract_dem(self, circuit_path, output):
        circuit = Circuit.load(circuit_path)
        dem = extract_dem(circuit)
        logger.info("Saving %s", output)
        dem.save(_ensure_parent_dir(output))
        return {
            "path": str(output),
            "detectors": dem.detector_count,
            "observables": dem.observable_count,
            "mechanisms": dem.mechanism_count,
            "hyperedges": len(dem.hyperedges),
        }

    @timer()
    def decode(self, dem_path, detectors_path, output, config, observables_path=None):
        dem = DetectorErrorModel.load(dem_path)
        detectors = read_packed_rows(detectors_path, dem.detector_count)
        predictions = BpOsdDecoder(dem, config).decode_batch(detectors)
        logger.info("Saving %s", output)
        Path(_ensure_parent_dir(output)).write_bytes(pack_rows(predictions).tobytes())
        summary = {"path": str(output), "shots": int(detectors.shape[0])}
        if observables_path is not None:
            actual = read_packed_rows(observables_path, dem.observable_count)
            if actual.shape != predictions.shape:
                raise CodeFormatError(
                    "observable file does not match the detector file", observables_path
                )
            summary["failures"] = int((actual != predictions).any(axis=1).sum())
        return summary

    # -- experiments -------------------------------------------------------

    @timer()
    def memory(
        self,
        family,
        distances,
        basis,
        p_x_values,
        p_z_values,
        shots,
        seed,
        outer=None,
        ancillae=1,
        rounds=None,
        outer_rounds=None,
        decoder_config=None,
        output=None,
        json_dir=None,
    ):
        results = []
        for d_z in distances:
            for p_x in p_x_values:
                for p_z in p_z_values:
                    result = run_memory(
                        family,
                        d_z,
                        basis,
                        NoiseModel(p_x, p_z),
                        shots,
                        seed=seed,
                        outer=outer,
                        ancillae=ancillae,
                        rounds=rounds,
                        outer_rounds=outer_rounds,
                        decoder_config=decoder_config,
                        threads=self.threads,
                    )
                    results.append(result)
                    if json_dir is not None:
                        stem = (
                            f"{family}_{result.outer or 'rep'}_d{d_z}_{basis.lower()}"
                            f"_px{p_x:.1e}_pz{p_z:.1e}"
                        ).replace(".", "p")
                        path = self._output_path(stem, ".json", json_dir)
                        logger.info("Saving %s", path)
                        write_result_json(result, path)
        if output is not None:
            logger.info("Saving %s", output)
            write_results_csv(results, _ensure_parent_dir(output))
        return results

    @timer()
    def fit(self, csv_path, families=None, outer=None, ancillae=None, output=None):
        rows = read_results(csv_path)
        families = families or [
            f for f in FIT_INPUTS if points_for_fit(rows, f, outer, ancillae)
        ]
        if not families:
            raise FitError("no rows with failures to fit", csv_path)
        models = []
        for family in families:
            points = points_for_fit(rows, family, outer, ancillae)
            extra = {}
            if family.startswith("concat"):
                names = sorted({r["outer"] for r in rows if r["family"] == "concat"})
                name = outer or (names[0] if len(names) == 1 else None)
                if name is None:
                    raise FitError(f"{family} fit needs --outer; data has {names}")
                code = resolve_outer(name)
                count = ancillae or 1
                extra = {"outer": code.name, "ancillae": count}
                if family == "concat_z":
                    extra.update(n_b=code.n + count, k=code.k)
            try:
                models.append(fit_power_law(points, family, **extra))
            except FitError as e:
                e.source_trail.append(csv_path)
                raise
        if output is not None:
            logger.info("Saving %s", output)
            save_models(models, _ensure_parent_dir(output))
        return models

    def registry(self, models_path=None, extra_models=()):
        overrides = list(load_models(models_path)) if models_path else []
        return model_registry(overrides + list(extra_models))

    @timer()
    def overhead(self, p_z, etas, targets, families, registry, output=None):
        points = []
        for target in targets:
            points.extend(
                overhead_mod.eta_sweep(p_z, target, etas, families, registry)
            )
        if output is not None:
            logger.info("Saving %s", output)
            overhead_mod.write_sweep_csv(points, _ensure_parent_dir(output))
        return points

    @timer()
    def desk_scale_models(self, shots, seed):
        """Fit rep_z and rep_x to short repetition-code simulations."""
        rows = []
        for basis, p_x_values, p_z_values in (
            ("X", (0.0,), DESK_P_Z),
            ("Z", DESK_P_X, (0.0,)),
        ):
            results = self.memory(
                "repetition", DESK_DISTANCES, basis, p_x_values, p_z_values, shots, seed
            )
            rows.extend({c: getattr(r, c) for c in CSV_COLUMNS} for r in results)
        return [
            fit_power_law(points_for_fit(rows, "rep_z"), "rep_z"),
            fit_power_law(points_for_fit(rows, "rep_x"), "rep_x"),
        ]

    @timer()
    def reproduce(
        self,
        figure,
        desk_scale=False,
        shots=2000,
        seed=0,
        models_path=None,
        output=None,
    ):
        fitted = self.desk_scale_models(shots, seed) if desk_scale else []
        registry = self.registry(models_path, fitted)
        setup = FIGURES[figure]
        if setup["kind"] == "eta":
            points = overhead_mod.eta_sweep(
                setup["p_z"], setup["target"], overhead_mod.FIG1_ETAS, registry=registry
            )
        else:
            targets = (
                overhead_mod.FIG3A_TARGETS
                if figure == "fig3a"
                else overhead_mod.FIG3B_TARGETS
            )
            points = overhead_mod.target_sweep(
                setup["p_z"], setup["eta"], targets, registry=registry
            )
        if output is None:
            output = self._output_path(figure, ".csv")
        logger.info("Saving %s", output)
        overhead_mod.write_sweep_csv(points, _ensure_parent_dir(output))
        return points, fitted, output


def summarize_points(points):
    summary = []
    for point in points:
        row = point.row()
        entry = {
            "family": row["family"],
            "p_z": _probability(point.p_z),
            "eta": None if np.isinf(point.eta) else _probability(point.eta),
            "target": _probability(point.target),
            "reachable": point.reachable,
        }
        if point.reachable:
            entry.update(
                label=point.candidate.label,
                d_z=point.d_z,
                qubits_per_logical=_probability(point.qubits_per_logical),
                p_l=_probability(point.p_l),
            )
        summary.append(entry)
    return summary
