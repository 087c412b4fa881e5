"""Stabilizer circuit IR with detectors, observables and Pauli noise."""
from __future__ import annotations

import dataclasses
import enum
import functools
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

from elevatorcodes.errors import CodeFormatError

logger = logging.getLogger(__name__)


class Gate(enum.Enum):
    PREP_Z = "PREPZ"
    PREP_X = "PREPX"
    MEAS_Z = "MZ"
    MEAS_X = "MX"
    CNOT = "CNOT"
    TICK = "TICK"
    ERROR = "ERROR"

    @property
    def is_prep(self):
        return self in (Gate.PREP_Z, Gate.PREP_X)

    @property
    def is_measurement(self):
        return self in (Gate.MEAS_Z, Gate.MEAS_X)

    @property
    def basis(self):
        if self in (Gate.PREP_Z, Gate.MEAS_Z):
            return "Z"
        if self in (Gate.PREP_X, Gate.MEAS_X):
            return "X"
        return None


PAULIS = "IXYZ"


@dataclasses.dataclass(frozen=True)
class ErrorChannel:
    """Mutually exclusive Pauli outcomes on an instruction's targets.

    ``outcomes`` holds ``(probability, paulis)`` pairs, one Pauli letter per
    target; with the remaining probability nothing happens.
    """

    outcomes: Tuple[Tuple[float, str], ...]

    def __post_init__(self):
        for p, paulis in self.outcomes:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"error probability {p} outside [0, 1]")
            if set(paulis) - set(PAULIS):
                raise ValueError(f"bad Pauli string {paulis!r}")
        if self.total > 1.0 + 1e-12:
            raise ValueError(f"outcome probabilities sum to {self.total} > 1")

    @property
    def total(self):
        return math.fsum(p for p, _ in self.outcomes)


@dataclasses.dataclass(frozen=True)
class Instruction:
    gate: Gate
    targets: Tuple[int, ...] = ()
    channel: Optional[ErrorChannel] = None


@dataclasses.dataclass(frozen=True)
class Circuit:
    """An immutable circuit.

    Measurement indices follow the order of MZ/MX instructions. Detectors and
    observables are parities of measurement outcomes. ``round_markers`` holds
    the instruction position at which each inner syndrome round starts.
    ``logical_distance`` is the distance protecting the observables against
    the errors the memory basis is sensitive to.
    """

    qubit_count: int
    instructions: Tuple[Instruction, ...]
    detectors: Tuple[Tuple[int, ...], ...] = ()
    observables: Tuple[Tuple[int, ...], ...] = ()
    round_markers: Tuple[int, ...] = ()
    basis: str = "Z"
    logical_distance: int = 1
    name: str = ""

    @functools.cached_property
    def measurement_count(self):
        return sum(1 for ins in self.instructions if ins.gate.is_measurement)

    @property
    def detector_count(self):
        return len(self.detectors)

    @property
    def observable_count(self):
        return len(self.observables)

    @property
    def inner_rounds(self):
        return len(self.round_markers)

    @functools.cached_property
    def cnot_count(self):
        return sum(1 for ins in self.instructions if ins.gate is Gate.CNOT)

    @property
    def has_noise(self):
        return any(ins.gate is Gate.ERROR for ins in self.instructions)

    def moments(self):
        """Split the instruction stream at TICKs.

        Yields ``(instructions, ticked)`` where ``ticked`` says whether the
        moment was closed by a TICK.
        """
        current = []
        for ins in self.instructions:
            if ins.gate is Gate.TICK:
                yield current, True
                current = []
            else:
                current.append(ins)
        if current:
            yield current, False

    def to_text(self):
        lines = [
            f"# {self.name or 'circuit'}",
            f"QUBITS {self.qubit_count}",
            f"BASIS {self.basis}",
            f"DISTANCE {self.logical_distance}",
        ]
        markers = {}
        for r, pos in enumerate(self.round_markers):
            markers.setdefault(pos, []).append(r)
        m = 0
        for pos, ins in enumerate(self.instructions):
            for r in markers.get(pos, ()):
                lines.append(f"ROUND {r}")
            lines.extend(_format_instruction(ins, m))
            if ins.gate.is_measurement:
                m += 1
        for r in markers.get(len(self.instructions), ()):
            lines.append(f"ROUND {r}")
        for det in self.detectors:
            lines.append("DETECTOR " + " ".join(str(i) for i in det))
        for k, obs in enumerate(self.observables):
            lines.append(f"OBSERVABLE {k} " + " ".join(str(i) for i in obs))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, source=None):
        return _CircuitParser(source).parse(text)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise CodeFormatError("Reading circuit failed", path) from e
        return cls.from_text(text, source=path)


def _format_probability(p):
    return f"{p:.5e}"


def _format_instruction(ins, measurement_index):
    if ins.gate is Gate.TICK:
        return ["TICK"]
    if ins.gate.is_measurement:
        return [f"{ins.gate.value} {ins.targets[0]} -> {measurement_index}"]
    if ins.gate is Gate.ERROR:
        lines = []
        for i, (p, paulis) in enumerate(ins.channel.outcomes):
            keyword = "ERROR" if i == 0 else "ELSE_ERROR"
            terms = " ".join(f"{P} {q}" for P, q in zip(paulis, ins.targets))
            lines.append(f"{keyword} {_format_probability(p)} {terms}")
        return lines
    return [ins.gate.value + " " + " ".join(str(q) for q in ins.targets)]


class _CircuitParser:
    _ARITY = {
        Gate.PREP_Z: 1,
        Gate.PREP_X: 1,
        Gate.CNOT: 2,
    }

    def __init__(self, source=None):
        self.source = source

    def error(self, lineno, msg):
        return CodeFormatError(f"line {lineno}: {msg}", self.source)

    def parse(self, text):
        header = {"QUBITS": None, "BASIS": "Z", "DISTANCE": "1", "NAME": ""}
        instructions = []
        detectors = []
        observables = {}
        markers = {}
        measurements = 0
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1:
                    header["NAME"] = line[1:].strip()
                continue
            keyword, *args = line.split()
            if keyword in ("QUBITS", "BASIS", "DISTANCE"):
                if len(args) != 1:
                    raise self.error(lineno, f"{keyword} takes one value")
                header[keyword] = args[0]
            elif keyword == "ROUND":
                markers[self._int(lineno, args[0])] = len(instructions)
            elif keyword == "DETECTOR":
                detectors.append(tuple(self._int(lineno, a) for a in args))
            elif keyword == "OBSERVABLE":
                if not args:
                    raise self.error(lineno, "OBSERVABLE needs an index")
                k = self._int(lineno, args[0])
                observables[k] = tuple(self._int(lineno, a) for a in args[1:])
            elif keyword in ("ERROR", "ELSE_ERROR"):
                p, paulis, targets = self._parse_error(lineno, args)
                if keyword == "ERROR":
                    channel = ErrorChannel(((p, paulis),))
                    instructions.append(Instruction(Gate.ERROR, targets, channel))
                else:
                    if not instructions or instructions[-1].gate is not Gate.ERROR:
                        raise self.error(lineno, "ELSE_ERROR without ERROR")
                    last = instructions[-1]
                    if last.targets != targets:
                        raise self.error(lineno, "ELSE_ERROR targets differ")
                    channel = ErrorChannel(last.channel.outcomes + ((p, paulis),))
                    instructions[-1] = Instruction(Gate.ERROR, targets, channel)
            elif keyword in ("MZ", "MX"):
                if len(args) != 3 or args[1] != "->":
                    raise self.error(lineno, f"expected '{keyword} q -> m'")
                q = self._int(lineno, args[0])
                if self._int(lineno, args[2]) != measurements:
                    raise self.error(
                        lineno, f"measurement index must be {measurements}"
                    )
                measurements += 1
                instructions.append(Instruction(Gate(keyword), (q,)))
            elif keyword == "TICK":
                instructions.append(Instruction(Gate.TICK))
            else:
                try:
                    gate = Gate(keyword)
                except ValueError:
                    raise self.error(
                        lineno, f"unknown instruction {keyword!r}"
                    ) from None
                targets = tuple(self._int(lineno, a) for a in args)
                if len(targets) != self._ARITY[gate]:
                    raise self.error(
                        lineno, f"{keyword} takes {self._ARITY[gate]} qubits"
                    )
                instructions.append(Instruction(gate, targets))
        if header["QUBITS"] is None:
            raise CodeFormatError("missing QUBITS header", self.source)
        qubit_count = self._int(0, header["QUBITS"])
        for ins in instructions:
            for q in ins.targets:
                if not 0 <= q < qubit_count:
                    raise CodeFormatError(f"qubit {q} out of range", self.source)
        for det in detectors + list(observables.values()):
            for m in det:
                if not 0 <= m < measurements:
                    raise CodeFormatError(f"measurement {m} out of range", self.source)
        if sorted(observables) != list(range(len(observables))):
            raise CodeFormatError("observable indices must be 0..k-1", self.source)
        if sorted(markers) != list(range(len(markers))):
            raise CodeFormatError("round markers must be 0..r-1", self.source)
        return Circuit(
            qubit_count=qubit_count,
            instructions=tuple(instructions),
            detectors=tuple(detectors),
            observables=tuple(observables[k] for k in range(len(observables))),
            round_markers=tuple(markers[r] for r in range(len(markers))),
            basis=header["BASIS"],
            logical_distance=self._int(0, header["DISTANCE"]),
            name=header["NAME"],
        )

    def _int(self, lineno, value):
        try:
            return int(value)
        except ValueError:
            raise self.error(lineno, f"expected an integer, got {value!r}") from None

    def _parse_error(self, lineno, args):
        if len(args) < 3 or len(args) % 2 == 0:
            raise self.error(lineno, "expected 'ERROR p PAULI q [PAULI q]'")
        try:
            p = float(args[0])
        except ValueError:
            raise self.error(lineno, f"bad probability {args[0]!r}") from None
        paulis = "".join(args[1::2])
        if set(paulis) - set(PAULIS):
            raise self.error(lineno, f"bad Pauli string {paulis!r}")
        targets = tuple(self._int(lineno, a) for a in args[2::2])
        return p, paulis, targets


class CircuitBuilder:
    """Accumulates instructions, measurement indices and annotations."""

    def __init__(self, qubit_count):
        self.qubit_count = qubit_count
        self.instructions = []
        self.detectors = []
        self.observables = []
        self.round_markers = []
        self.measurement_count = 0

    def prep(self, basis, qubits):
        gate = Gate.PREP_Z if basis == "Z" else Gate.PREP_X
        self.instructions.extend(Instruction(gate, (q,)) for q in qubits)

    def measure(self, basis, qubits):
        gate = Gate.MEAS_Z if basis == "Z" else Gate.MEAS_X
        indices = []
        for q in qubits:
            self.instructions.append(Instruction(gate, (q,)))
            indices.append(self.measurement_count)
            self.measurement_count += 1
        return indices

    def cnot(self, pairs):
        self.instructions.extend(Instruction(Gate.CNOT, (c, t)) for c, t in pairs)

    def tick(self):
        self.instructions.append(Instruction(Gate.TICK))

    def mark_round(self):
        self.round_markers.append(len(self.instructions))

    def detector(self, measurements):
        self.detectors.append(tuple(sorted(measurements)))

    def observable(self, measurements):
        self.observables.append(tuple(sorted(measurements)))

    def build(self, basis="Z", logical_distance=1, name=""):
        return Circuit(
            qubit_count=self.qubit_count,
            instructions=tuple(self.instructions),
            detectors=tuple(self.detectors),
            observables=tuple(self.observables),
            round_markers=tuple(self.round_markers),
            basis=basis,
            logical_distance=logical_distance,
            name=name,
        )


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """Biased Pauli noise: ``p_x`` for bit flips and ``p_z`` for phase flips."""

    p_x: float
    p_z: float

    def __post_init__(self):
        for label, p in (("p_x", self.p_x), ("p_z", self.p_z)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{label}={p} outside [0, 1]")
        if self.p_x + self.p_z > 1.0:
            raise ValueError("p_x + p_z must not exceed 1")

    @classmethod
    def from_bias(cls, p_z, eta):
        """``eta = p_z / p_x``; an infinite bias means no bit flips."""
        if eta <= 0:
            raise ValueError(f"noise bias must be positive, got {eta}")
        return cls(p_x=0.0 if math.isinf(eta) else p_z / eta, p_z=p_z)

    @property
    def eta(self):
        return math.inf if self.p_x == 0 else self.p_z / self.p_x

    def _channel(self, outcomes):
        kept = tuple((p, paulis) for p, paulis in outcomes if p > 0)
        return ErrorChannel(kept) if kept else None

    def prep_error(self, basis):
        # the flip that does not leave the prepared eigenstate invariant
        return self._channel([(self.p_x, "X")] if basis == "Z" else [(self.p_z, "Z")])

    measure_error = prep_error

    def idle_error(self):
        return self._channel([(self.p_z, "Z"), (self.p_x, "X")])

    def cnot_error(self):
        z, x = self.p_z / 3, self.p_x / 3
        return self._channel(
            [(z, "IZ"), (z, "ZI"), (z, "ZZ"), (x, "IX"), (x, "XI"), (x, "XX")]
        )


def apply_noise(circuit, noise):
    """Insert the biased noise model into a noiseless circuit.

    Preparation errors follow the preparation, measurement errors precede
    the measurement, CNOT errors follow the gate, and every qubit not acted
    on during a moment gets an idle error at the end of that moment.
    """
    out = []
    positions = []

    def emit_error(targets, channel):
        if channel is not None:
            out.append(Instruction(Gate.ERROR, tuple(targets), channel))

    idle = noise.idle_error()
    cnot = noise.cnot_error()
    for moment, ticked in circuit.moments():
        used = set()
        for ins in moment:
            positions.append(len(out))
            if ins.gate.is_measurement:
                emit_error(ins.targets, noise.measure_error(ins.gate.basis))
                out.append(ins)
            else:
                out.append(ins)
                if ins.gate.is_prep:
                    emit_error(ins.targets, noise.prep_error(ins.gate.basis))
                elif ins.gate is Gate.CNOT:
                    emit_error(ins.targets, cnot)
            if ins.gate is not Gate.ERROR:
                used.update(ins.targets)
        if idle is not None and (moment or ticked):
            for q in range(circuit.qubit_count):
                if q not in used:
                    emit_error((q,), idle)
        if ticked:
            positions.append(len(out))
            out.append(Instruction(Gate.TICK))
    positions.append(len(out))
    markers = tuple(positions[pos] for pos in circuit.round_markers)
    return dataclasses.replace(circuit, instructions=tuple(out), round_markers=markers)
