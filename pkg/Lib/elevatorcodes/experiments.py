"""Memory experiments: build, sample, decode, count and convert to per-round rates."""
from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from fontTools.misc.loggingTools import Timer
from scipy.stats import beta

from elevatorcodes.circuit import NoiseModel
from elevatorcodes.codes import resolve_outer
from elevatorcodes.decoder import BpOsdDecoder, DecoderConfig
from elevatorcodes.errors import CodeFormatError
from elevatorcodes.layout import (
    ElevatorSpec,
    build_elevator_memory,
    build_repetition_memory,
)
from elevatorcodes.sim import batch_sizes, extract_dem, parallel_map, sample_batch

logger = logging.getLogger(__name__)
timer = Timer(logging.getLogger("elevatorcodes.timer"), level=logging.DEBUG)

MEMORY_FAMILIES = ("repetition", "concat")

CSV_COLUMNS = (
    "family",
    "outer",
    "d_z",
    "ancillae",
    "basis",
    "p_x",
    "p_z",
    "shots",
    "failures",
    "rounds",
    "p_shot",
    "p_round",
    "ci_lo",
    "ci_hi",
)
_INT_COLUMNS = {"d_z", "ancillae", "shots", "failures", "rounds"}
_FLOAT_COLUMNS = {"p_x", "p_z", "p_shot", "p_round", "ci_lo", "ci_hi"}


def per_round_rate(p_shot, rounds):
    """Per-round flip probability that compounds to ``p_shot`` over ``rounds``.

    Rates at or above 1/2 carry no information and are clamped to 1/2.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be positive, got {rounds}")
    if not 0 <= p_shot <= 1:
        raise ValueError(f"p_shot must be a probability, got {p_shot}")
    if is_saturated(p_shot):
        return 0.5
    return (1 - (1 - 2 * p_shot) ** (1 / rounds)) / 2


def is_saturated(p_shot):
    return p_shot >= 0.5


def per_shot_rate(p_round, rounds):
    return (1 - (1 - 2 * p_round) ** rounds) / 2


def total_rate(p_zl, p_xl):
    return p_zl + p_xl


def clopper_pearson(failures, shots, confidence=0.95):
    """Exact binomial confidence interval for ``failures / shots``."""
    if shots == 0:
        return 0.0, 1.0
    alpha = 1 - confidence
    lo = 0.0 if failures == 0 else beta.ppf(alpha / 2, failures, shots - failures + 1)
    hi = (
        1.0
        if failures == shots
        else beta.ppf(1 - alpha / 2, failures + 1, shots - failures)
    )
    return float(lo), float(hi)


@dataclasses.dataclass(frozen=True)
class MemoryResult:
    """One memory experiment.

    ``p_round`` and the confidence bounds are per inner round and per logical
    qubit; a shot fails when any logical observable is mispredicted.
    """

    family: str
    outer: str
    d_z: int
    ancillae: int
    basis: str
    p_x: float
    p_z: float
    shots: int
    failures: int
    rounds: int
    p_shot: float
    p_round: float
    ci_lo: float
    ci_hi: float
    k: int = 1
    seed: int = 0
    failures_per_observable: Tuple[int, ...] = ()
    saturated: bool = False

    def csv_row(self):
        row = {}
        for column in CSV_COLUMNS:
            value = getattr(self, column)
            row[column] = f"{value:.5e}" if column in _FLOAT_COLUMNS else value
        return row

    def to_json(self):
        record = {column: getattr(self, column) for column in CSV_COLUMNS}
        record.update(
            k=self.k,
            seed=self.seed,
            failures_per_observable=list(self.failures_per_observable),
            saturated=self.saturated,
        )
        for column in _FLOAT_COLUMNS:
            record[column] = float(f"{record[column]:.5e}")
        return record


def build_memory_circuit(
    family,
    d_z,
    basis,
    noise=None,
    outer=None,
    ancillae=1,
    rounds=None,
    outer_rounds=None,
):
    """Return ``(circuit, k, outer_name)`` for a memory experiment of ``family``."""
    if family == "repetition":
        circuit = build_repetition_memory(d_z, rounds or 3 * d_z, basis, noise)
        return circuit, 1, ""
    if family == "concat":
        if outer is None:
            raise ValueError("the concat family needs an outer code")
        code = resolve_outer(outer) if isinstance(outer, str) else outer
        spec = ElevatorSpec(code, d_z, ancillae, basis, outer_rounds)
        return build_elevator_memory(spec, noise), code.k, code.name
    raise ValueError(f"unknown memory family {family!r}")


def _memory_task(circuit, dem, config, seed, batches):
    decoder = BpOsdDecoder(dem, config) if dem.mechanism_count else None
    failures = 0
    per_observable = np.zeros(circuit.observable_count, dtype=np.int64)
    for batch, size in batches:
        detectors, observables = sample_batch(circuit, seed, batch, size)
        if decoder is None:
            predicted = np.zeros_like(observables)
        else:
            predicted = decoder.decode_batch(detectors)
        wrong = predicted != observables
        failures += int(wrong.any(axis=1).sum())
        per_observable += wrong.sum(axis=0)
    return failures, per_observable


def _split(items, parts):
    parts = max(1, min(parts, len(items)))
    size = -(-len(items) // parts)
    return [items[i : i + size] for i in range(0, len(items), size)]


@timer()
def run_memory(
    family,
    d_z,
    basis,
    noise,
    shots,
    seed=0,
    outer=None,
    ancillae=1,
    rounds=None,
    outer_rounds=None,
    decoder_config=None,
    threads=1,
):
    """Sample, decode and count logical failures of a memory experiment."""
    if shots < 1:
        raise ValueError(f"shots must be positive, got {shots}")
    if noise is None:
        noise = NoiseModel(0.0, 0.0)
    circuit, k, outer_name = build_memory_circuit(
        family, d_z, basis, noise, outer, ancillae, rounds, outer_rounds
    )
    dem = extract_dem(circuit)
    config = decoder_config or DecoderConfig()
    batches = list(enumerate(batch_sizes(shots)))
    task = functools.partial(_memory_task, circuit, dem, config, seed)
    outcomes = parallel_map(task, _split(batches, threads or 1), threads)
    failures = sum(f for f, _ in outcomes)
    per_observable = np.sum([p for _, p in outcomes], axis=0)

    rounds_run = circuit.inner_rounds
    p_shot = failures / shots
    saturated = is_saturated(p_shot)
    if saturated:
        logger.warning(
            "%s: logical failure rate %.3f is saturated; per-round rate is clamped",
            circuit.name,
            p_shot,
        )
    lo, hi = clopper_pearson(failures, shots)

    def per_logical_round(p):
        return per_round_rate(min(p, 0.5), rounds_run) / k

    result = MemoryResult(
        family=family,
        outer=outer_name,
        d_z=d_z,
        ancillae=ancillae if family == "concat" else 0,
        basis=basis,
        p_x=noise.p_x,
        p_z=noise.p_z,
        shots=shots,
        failures=failures,
        rounds=rounds_run,
        p_shot=p_shot,
        p_round=per_logical_round(p_shot),
        ci_lo=per_logical_round(lo),
        ci_hi=per_logical_round(hi),
        k=k,
        seed=seed,
        failures_per_observable=tuple(int(x) for x in np.atleast_1d(per_observable)),
        saturated=saturated,
    )
    logger.info(
        "%s: %d/%d shots failed, p_round=%.5e",
        circuit.name,
        failures,
        shots,
        result.p_round,
    )
    return result


def write_results_rows(results, stream):
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for result in results:
        writer.writerow(result.csv_row())


def write_results_csv(results, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        write_results_rows(results, f)
    return path


def write_result_json(result, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def read_results(path):
    """Read rows written by :func:`write_results_csv` as typed dicts."""
    path = Path(path)
    rows = []
    try:
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise CodeFormatError(f"missing columns {sorted(missing)}", path)
            for raw in reader:
                row = dict(raw)
                for column in _INT_COLUMNS:
                    row[column] = int(row[column])
                for column in _FLOAT_COLUMNS:
                    row[column] = float(row[column])
                rows.append(row)
    except OSError as e:
        raise CodeFormatError("Reading results failed", path) from e
    except ValueError as e:
        raise CodeFormatError("Malformed results row", path) from e
    return rows


FIT_INPUTS = {
    # family: (memory family, memory basis, noise column)
    "rep_z": ("repetition", "X", "p_z"),
    "rep_x": ("repetition", "Z", "p_x"),
    "concat_z": ("concat", "X", "p_z"),
    "concat_x": ("concat", "Z", "p_x"),
}


def points_for_fit(rows, fit_family, outer: Optional[str] = None, ancillae=None):
    """``(p, d_z, p_round)`` points of the rows that feed ``fit_family``."""
    memory_family, basis, column = FIT_INPUTS[fit_family]
    points = []
    for row in rows:
        if row["family"] != memory_family or row["basis"] != basis:
            continue
        if outer is not None and row["outer"] != outer:
            continue
        if ancillae is not None and row["ancillae"] != ancillae:
            continue
        if row["failures"] == 0:
            logger.warning(
                "Skipping %s point d_z=%d %s=%.5e without failures",
                fit_family,
                row["d_z"],
                column,
                row[column],
            )
            continue
        points.append((row[column], row["d_z"], row["p_round"]))
    return points
