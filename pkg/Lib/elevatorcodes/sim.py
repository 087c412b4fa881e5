"""Bit-packed Pauli-frame sampling and detector error model extraction.

Frames hold one bit per shot in ``uint64`` words: ``x[q]`` and ``z[q]`` are
the X and Z components of the error on qubit ``q`` relative to a noiseless
reference run. Like other frame simulators, preparations and measurements
randomise the frame component their eigenstate is insensitive to, so any
detector that is not deterministic shows up as a random bit even without
noise.
"""
from __future__ import annotations

import dataclasses
import functools
import json
import logging
import multiprocessing
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from fontTools.misc.loggingTools import Timer

from elevatorcodes.circuit import Gate
from elevatorcodes.dem import DetectorErrorModel, ErrorMechanism, merge_probabilities
from elevatorcodes.errors import CodeFormatError, InvariantError
from elevatorcodes.gf2 import unpack_bits

logger = logging.getLogger(__name__)
timer = Timer(logging.getLogger("elevatorcodes.timer"), level=logging.DEBUG)

BATCH_SHOTS = 1024
FAULT_CHUNK = 4096

_ONE = np.uint64(1)


def batch_rng(seed, batch):
    """Counter-based generator for one batch of shots."""
    return np.random.Generator(np.random.Philox(key=seed, counter=batch << 128))


def parallel_map(func, items, threads=1):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(min(threads, len(items))) as pool:
        return pool.map(func, items)


class _Op:
    __slots__ = ("kind", "basis", "qubits", "targets", "meas", "channel", "rows")

    def __init__(self, kind, basis=None, channel=None):
        self.kind = kind
        self.basis = basis
        self.channel = channel
        self.qubits = set()
        self.targets = []
        self.meas = []
        self.rows = []


def _compile(circuit):
    """Group consecutive same-kind instructions on disjoint qubits."""
    ops = []
    fault_site = {}
    m = 0
    for index, ins in enumerate(circuit.instructions):
        gate = ins.gate
        if gate is Gate.TICK:
            continue
        if gate is Gate.CNOT:
            kind, basis, channel = "cnot", None, None
        elif gate.is_prep:
            kind, basis, channel = "prep", gate.basis, None
        elif gate.is_measurement:
            kind, basis, channel = "meas", gate.basis, None
        else:
            kind, basis, channel = "error", None, ins.channel
        last = ops[-1] if ops else None
        if (
            last is None
            or last.kind != kind
            or last.basis != basis
            or last.channel != channel
            or last.qubits.intersection(ins.targets)
            or (kind == "error" and len(last.targets[0]) != len(ins.targets))
        ):
            last = _Op(kind, basis, channel)
            ops.append(last)
        last.qubits.update(ins.targets)
        if kind == "error":
            fault_site[index] = (len(ops) - 1, len(last.targets))
        last.targets.append(ins.targets)
        if kind == "meas":
            last.meas.append(m)
            m += 1
    for op in ops:
        op.targets = np.asarray(op.targets, dtype=np.int64)
        op.meas = np.asarray(op.meas, dtype=np.int64)
    return ops, fault_site


def _bernoulli_positions(rng, n, p):
    """Sorted positions in ``range(n)`` that fire independently with prob. p."""
    if n == 0 or p <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    found = []
    pos = -1
    while True:
        k = int((n - pos) * p * 1.2) + 16
        candidates = pos + np.cumsum(rng.geometric(p, size=k), dtype=np.int64)
        found.append(candidates[candidates < n])
        if candidates[-1] >= n:
            break
        pos = int(candidates[-1])
    return np.concatenate(found)


def _shot_masks(shots):
    return np.left_shift(_ONE, (shots & 63).astype(np.uint64))


class FrameSimulator:
    """Propagates packed Pauli frames through a compiled circuit."""

    def __init__(self, circuit):
        self.circuit = circuit
        self.ops, self.fault_site = _compile(circuit)

    def run(self, columns, rng=None, randomize=True, injections=None, start=0):
        """Simulate ``columns`` frames; return packed measurement flips.

        ``injections`` maps an op index to ``[(row, paulis, column), ...]``
        deterministic faults; noise is only sampled when ``rng`` is given.
        """
        words = max(1, -(-columns // 64))
        n = self.circuit.qubit_count
        x = np.zeros((n, words), dtype=np.uint64)
        z = np.zeros((n, words), dtype=np.uint64)
        record = np.zeros((self.circuit.measurement_count, words), dtype=np.uint64)
        for index in range(start, len(self.ops)):
            op = self.ops[index]
            if op.kind == "cnot":
                c, t = op.targets[:, 0], op.targets[:, 1]
                x[t] ^= x[c]
                z[c] ^= z[t]
            elif op.kind == "prep":
                q = op.targets[:, 0]
                x[q] = 0
                z[q] = 0
                if randomize:
                    self._randomize(x if op.basis == "X" else z, q, rng, words)
            elif op.kind == "meas":
                q = op.targets[:, 0]
                record[op.meas] = x[q] if op.basis == "Z" else z[q]
                if randomize:
                    self._randomize(z if op.basis == "Z" else x, q, rng, words)
            else:
                if rng is not None:
                    self._sample_noise(op, x, z, rng, columns)
                if injections and index in injections:
                    self._inject(op, injections[index], x, z)
        return record

    @staticmethod
    def _randomize(frame, qubits, rng, words):
        raw = rng.bit_generator.random_raw(len(qubits) * words)
        frame[qubits] = np.asarray(raw, dtype=np.uint64).reshape(len(qubits), words)

    @staticmethod
    def _apply(x, z, qubits, shots, paulis_per_event):
        masks = _shot_masks(shots)
        word = shots >> 6
        for j in range(qubits.shape[1]):
            letters = paulis_per_event[:, j]
            has_x = (letters == "X") | (letters == "Y")
            has_z = (letters == "Z") | (letters == "Y")
            if has_x.any():
                np.bitwise_xor.at(x, (qubits[has_x, j], word[has_x]), masks[has_x])
            if has_z.any():
                np.bitwise_xor.at(z, (qubits[has_z, j], word[has_z]), masks[has_z])

    def _sample_noise(self, op, x, z, rng, columns):
        outcomes = op.channel.outcomes
        total = op.channel.total
        locations = op.targets.shape[0]
        events = _bernoulli_positions(rng, locations * columns, total)
        if events.size == 0:
            return
        if len(outcomes) == 1:
            choice = np.zeros(events.size, dtype=np.int64)
        else:
            probs = np.array([p for p, _ in outcomes]) / total
            choice = rng.choice(len(outcomes), size=events.size, p=probs)
        table = np.array([list(paulis) for _, paulis in outcomes])
        rows = events // columns
        shots = events % columns
        self._apply(x, z, op.targets[rows], shots, table[choice])

    def _inject(self, op, faults, x, z):
        rows = np.array([row for row, _, _ in faults], dtype=np.int64)
        columns = np.array([col for _, _, col in faults], dtype=np.int64)
        letters = np.array([list(paulis) for _, paulis, _ in faults])
        self._apply(x, z, op.targets[rows], columns, letters)


def _parities(record, groups):
    out = np.zeros((len(groups), record.shape[1]), dtype=np.uint64)
    for i, members in enumerate(groups):
        if members:
            out[i] = np.bitwise_xor.reduce(record[list(members)], axis=0)
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class SampleResult:
    detectors: np.ndarray
    observables: np.ndarray
    seed: int = 0

    @property
    def shots(self):
        return self.detectors.shape[0]

    def header(self):
        return {
            "shots": int(self.shots),
            "detectors": int(self.detectors.shape[1]),
            "observables": int(self.observables.shape[1]),
            "seed": int(self.seed),
        }


def sample_batch(circuit, seed, batch, shots):
    sim = FrameSimulator(circuit)
    rng = batch_rng(seed, batch)
    record = sim.run(shots, rng=rng)
    dets = unpack_bits(_parities(record, circuit.detectors), shots).T
    obs = unpack_bits(_parities(record, circuit.observables), shots).T
    return dets.astype(bool), obs.astype(bool)


def batch_sizes(shots):
    full, rest = divmod(shots, BATCH_SHOTS)
    sizes = [BATCH_SHOTS] * full
    if rest:
        sizes.append(rest)
    return sizes


@timer()
def sample(circuit, shots, seed, threads=1):
    """Sample detector and observable flips for ``shots`` shots.

    Shots are split into fixed-size batches and batch ``b`` draws from its
    own counter-based stream, so the output is independent of ``threads``.
    """
    if shots < 0:
        raise ValueError(f"shots must be non-negative, got {shots}")
    sizes = batch_sizes(shots)
    work = functools.partial(_sample_batch_star, circuit, seed)
    results = parallel_map(work, list(enumerate(sizes)), threads)
    if results:
        dets = np.concatenate([r[0] for r in results])
        obs = np.concatenate([r[1] for r in results])
    else:
        dets = np.zeros((0, circuit.detector_count), dtype=bool)
        obs = np.zeros((0, circuit.observable_count), dtype=bool)
    logger.debug("Sampled %d shots in %d batches", shots, len(sizes))
    return SampleResult(dets, obs, seed)


def _sample_batch_star(circuit, seed, item):
    batch, size = item
    return sample_batch(circuit, seed, batch, size)


def _column_supports(record, parities, columns):
    matrix = sp.csc_matrix(unpack_bits(_parities(record, parities), columns))
    return [
        tuple(int(i) for i in matrix.indices[matrix.indptr[c] : matrix.indptr[c + 1]])
        for c in range(columns)
    ]


@timer()
def extract_dem(circuit, allow_undetectable: Optional[bool] = None):
    """Detector error model of a noisy circuit by single-fault propagation.

    Every elementary fault (one outcome of one error channel) is propagated
    as its own frame column. Faults with the same detector and observable
    signature merge; faults that flip nothing are dropped. A fault flipping
    observables but no detector is an error unless the circuit's logical
    distance is 1 (or ``allow_undetectable`` says otherwise).
    """
    if allow_undetectable is None:
        allow_undetectable = circuit.logical_distance <= 1
    sim = FrameSimulator(circuit)
    faults = []
    for index, ins in enumerate(circuit.instructions):
        if ins.gate is Gate.ERROR:
            for p, paulis in ins.channel.outcomes:
                if p > 0:
                    faults.append((index, p, paulis))

    merged = {}
    silent = 0
    undetectable = 0
    for start in range(0, len(faults), FAULT_CHUNK):
        chunk = faults[start : start + FAULT_CHUNK]
        injections = {}
        for column, (index, _, paulis) in enumerate(chunk):
            op_index, row = sim.fault_site[index]
            injections.setdefault(op_index, []).append((row, paulis, column))
        first = min(injections)
        record = sim.run(
            len(chunk), randomize=False, injections=injections, start=first
        )
        dets = _column_supports(record, circuit.detectors, len(chunk))
        obs = _column_supports(record, circuit.observables, len(chunk))
        for column, (index, p, paulis) in enumerate(chunk):
            d, o = dets[column], obs[column]
            if not d:
                if not o:
                    silent += 1
                    continue
                if not allow_undetectable:
                    raise InvariantError(
                        f"fault {paulis} at instruction {index} flips observables "
                        f"{list(o)} without triggering any detector",
                        circuit.name or None,
                    )
                undetectable += 1
            key = (tuple(sorted(d)), tuple(sorted(o)))
            merged[key] = merge_probabilities(merged[key], p) if key in merged else p

    mechanisms = tuple(ErrorMechanism(p, d, o) for (d, o), p in merged.items())
    logger.debug(
        "Extracted %d mechanisms from %d faults (%d silent, %d undetectable)",
        len(mechanisms),
        len(faults),
        silent,
        undetectable,
    )
    return DetectorErrorModel(
        circuit.detector_count, circuit.observable_count, mechanisms, circuit.name
    )


def write_samples(result, path):
    """Write bit-packed detector rows, observable rows and a JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pack_rows(result.detectors).tobytes())
    Path(f"{path}.obs").write_bytes(pack_rows(result.observables).tobytes())
    Path(f"{path}.json").write_text(
        json.dumps(result.header(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def pack_rows(bits):
    return np.packbits(np.asarray(bits, dtype=bool), axis=1, bitorder="little")


def read_packed_rows(path, width):
    """Read a file of bit-packed rows, ``width`` bits per row."""
    path = Path(path)
    row_bytes = -(-width // 8)
    try:
        raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    except OSError as e:
        raise CodeFormatError("Reading bit-packed rows failed", path) from e
    if row_bytes == 0:
        return np.zeros((0, 0), dtype=bool)
    if raw.size % row_bytes:
        raise CodeFormatError(
            f"file size {raw.size} is not a multiple of {row_bytes}-byte rows", path
        )
    rows = raw.reshape(-1, row_bytes)
    return np.unpackbits(rows, axis=1, bitorder="little")[:, :width].astype(bool)
