"""Memory-experiment circuits on a one-dimensional column of repetition blocks.

Each block is a distance-``d_z`` phase-flip repetition code laid out on
``2*d_z - 1`` qubits (data on even offsets, check ancillas on odd offsets).
Blocks sit in a column; transversal CNOTs only act between vertically
adjacent blocks. Outer checks are measured by an ancilla block travelling
through the column like an elevator, coupling to the blocks in the check's
support on the way.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
from collections import deque
from typing import Optional, Tuple

from fontTools.misc.loggingTools import Timer

from elevatorcodes.circuit import Circuit, CircuitBuilder, apply_noise
from elevatorcodes.codes import ClassicalCode
from elevatorcodes.errors import InfeasibleError, InvariantError

logger = logging.getLogger(__name__)
timer = Timer(logging.getLogger("elevatorcodes.timer"), level=logging.DEBUG)

BASES = ("Z", "X")


def default_outer_rounds(basis, outer=None):
    if basis == "X":
        return 1
    if outer is not None and outer.n == 16 and outer.k == 3:
        return 8
    return 5


@dataclasses.dataclass(frozen=True)
class ElevatorSpec:
    outer: ClassicalCode
    d_z: int
    ancillae: int = 1
    basis: str = "Z"
    outer_rounds: Optional[int] = None

    def __post_init__(self):
        if self.d_z < 1:
            raise ValueError(f"d_z must be positive, got {self.d_z}")
        if self.ancillae not in (1, 2):
            raise ValueError(f"ancillae must be 1 or 2, got {self.ancillae}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        if self.outer_rounds is None:
            rounds = default_outer_rounds(self.basis, self.outer)
            object.__setattr__(self, "outer_rounds", rounds)
        if self.outer_rounds < 1:
            raise ValueError(f"outer_rounds must be positive, got {self.outer_rounds}")

    @property
    def n_blocks(self):
        return self.outer.n + self.ancillae

    @property
    def ancilla_blocks(self):
        return tuple(range(self.outer.n, self.outer.n + self.ancillae))


class StepKind(enum.Enum):
    RESET = "reset"
    CNOT_SWAP = "cnot+swap"
    SWAP = "swap"
    WAIT = "wait"
    PAD = "pad"
    MEASURE = "measure"

    @property
    def is_logical(self):
        return self in (StepKind.CNOT_SWAP, StepKind.SWAP)


@dataclasses.dataclass(frozen=True)
class LogicalStep:
    kind: StepKind
    tick: int
    position: int
    block: Optional[int] = None


@dataclasses.dataclass(frozen=True)
class Move:
    """A logical step between the ancilla at one position and a neighbour.

    CNOT+SWAP compiles to two transversal CNOT layers, a bare SWAP to three.
    """

    kind: StepKind
    ancilla_position: int
    other_position: int

    @property
    def cnot_layers(self):
        a, b = self.ancilla_position, self.other_position
        if self.kind is StepKind.CNOT_SWAP:
            return ((a, b), (b, a))
        return ((a, b), (b, a), (a, b))


@dataclasses.dataclass(frozen=True)
class TickPlan:
    """One inner syndrome round plus the logical layer that follows it."""

    resets: Tuple[int, ...]
    moves: Tuple[Move, ...]
    measurements: Tuple[int, ...]
    order: Tuple[int, ...]


@dataclasses.dataclass(frozen=True)
class CheckSchedule:
    check: int
    outer_round: int
    ancilla: int
    start_tick: int
    steps: Tuple[LogicalStep, ...]

    @property
    def logical_steps(self):
        return sum(1 for s in self.steps if s.kind.is_logical)

    @property
    def pad_rounds(self):
        return sum(1 for s in self.steps if s.kind is StepKind.PAD)

    @property
    def span(self):
        """Inner rounds between the ancilla reset and its measurement."""
        return self.steps[-1].tick - self.start_tick + 1

    @property
    def coupled_blocks(self):
        return tuple(s.block for s in self.steps if s.kind is StepKind.CNOT_SWAP)


@dataclasses.dataclass(frozen=True)
class Schedule:
    spec: ElevatorSpec
    initial_order: Tuple[int, ...]
    ticks: Tuple[TickPlan, ...]
    checks: Tuple[CheckSchedule, ...]

    @property
    def inner_rounds(self):
        return len(self.ticks)

    @property
    def final_order(self):
        return self.ticks[-1].order if self.ticks else self.initial_order


class _Elevator:
    def __init__(self, block, direction, jobs):
        self.block = block
        self.direction = direction
        self.jobs = deque(jobs)
        self.current = None
        self.remaining = set()
        self.rounds = 0
        self.start = 0
        self.steps = []

    @property
    def busy(self):
        return self.current is not None


@timer()
def build_elevator_schedule(spec):
    """Plan every outer check of every outer round, tick by tick.

    The top ancilla starts above the data blocks and travels down; a second
    ancilla starts below them and travels up. An ancilla keeps its direction
    while support blocks remain ahead of it and turns around otherwise. It is
    measured once it has coupled to its whole support and seen at least
    ``d_z`` inner rounds since its reset.

    A check therefore spans ``max(d_z, logical steps)`` inner rounds, and a
    wide support can push an outer round past ``m * d_z`` rounds. [15,9,3]
    at ``d_z=9`` takes more than the 54 rounds that ``m * d_z`` suggests.
    """
    outer = spec.outer
    n = outer.n
    rows = outer.check_matrix.supports()
    for i, support in enumerate(rows):
        if not support:
            raise InfeasibleError(f"outer check {i} has empty support", outer.name)
    jobs = [(r, c) for r in range(spec.outer_rounds) for c in range(len(rows))]

    order = [n] + list(range(n))
    if spec.ancillae == 1:
        elevators = [_Elevator(n, +1, jobs)]
    else:
        order.append(n + 1)
        elevators = [
            _Elevator(n, +1, [j for j in jobs if j[1] % 2 == 1]),
            _Elevator(n + 1, -1, [j for j in jobs if j[1] % 2 == 0]),
        ]
    by_block = {e.block: e for e in elevators}
    position = {b: p for p, b in enumerate(order)}
    initial_order = tuple(order)

    limit = len(jobs) * (spec.d_z + 4 * len(order)) + 8
    ticks = []
    checks = []
    for tick in itertools.count():
        if not any(e.busy or e.jobs for e in elevators):
            break
        if tick > limit:
            raise InvariantError("elevator schedule did not terminate", outer.name)

        resets = []
        for e in elevators:
            if not e.busy and e.jobs:
                e.current = e.jobs.popleft()
                e.remaining = set(rows[e.current[1]])
                e.rounds = 0
                e.start = tick
                e.steps = [LogicalStep(StepKind.RESET, tick, position[e.block])]
                resets.append(position[e.block])
        active = [e for e in elevators if e.busy]
        for e in active:
            e.rounds += 1

        proposals = {}
        for e in active:
            if not e.remaining:
                continue
            here = position[e.block]
            if not any((position[b] - here) * e.direction > 0 for b in e.remaining):
                e.direction = -e.direction
            proposals[e.block] = here + e.direction

        moves = []
        touched = set()
        stepped = set()
        for e in sorted(active, key=lambda e: position[e.block]):
            if e.block not in proposals or e.block in stepped:
                continue
            here, there = position[e.block], proposals[e.block]
            other = order[there]
            facing = proposals.get(other) == here
            if here in touched or there in touched or (
                other in by_block and other in proposals and not facing
            ):
                e.steps.append(LogicalStep(StepKind.WAIT, tick, here))
                continue
            if other in e.remaining:
                kind = StepKind.CNOT_SWAP
                e.remaining.discard(other)
            else:
                kind = StepKind.SWAP
            moves.append(Move(kind, here, there))
            touched.update((here, there))
            stepped.add(e.block)
            order[here], order[there] = other, e.block
            position[other], position[e.block] = here, there
            e.steps.append(LogicalStep(kind, tick, there, other))
            if other in by_block and facing:
                stepped.add(other)
                by_block[other].steps.append(
                    LogicalStep(StepKind.SWAP, tick, here, e.block)
                )

        measurements = []
        for e in active:
            if e.remaining:
                continue
            if e.rounds >= spec.d_z:
                e.steps.append(LogicalStep(StepKind.MEASURE, tick, position[e.block]))
                measurements.append(position[e.block])
                outer_round, check = e.current
                checks.append(
                    CheckSchedule(check, outer_round, e.block, e.start, tuple(e.steps))
                )
                logger.debug(
                    "Check %d (outer round %d) measured after %d rounds",
                    check,
                    outer_round,
                    e.rounds,
                )
                e.current = None
            elif e.block not in stepped:
                e.steps.append(LogicalStep(StepKind.PAD, tick, position[e.block]))
        ticks.append(
            TickPlan(tuple(resets), tuple(moves), tuple(measurements), tuple(order))
        )

    return Schedule(spec, initial_order, tuple(ticks), tuple(checks))


@dataclasses.dataclass(frozen=True)
class _Parity:
    """A tracked operator value: parity of ``meas`` plus unknown ``labels``."""

    meas: frozenset = frozenset()
    labels: frozenset = frozenset()

    def __xor__(self, other):
        return _Parity(self.meas ^ other.meas, self.labels ^ other.labels)


_KNOWN = _Parity()


class _ColumnCircuit:
    """Emits instructions for a column of blocks and tracks operator values.

    Per block position it tracks the X-checks, the block-wide Z and the X on
    the first data qubit. A transversal CNOT folds the target's X-type values
    into the control and the control's Z-type values into the target. A
    measurement emits a detector whenever the expected outcome is fully
    determined by earlier outcomes and the initial state.
    """

    def __init__(self, blocks, d):
        self.blocks = blocks
        self.d = d
        self.width = 2 * d - 1
        self.builder = CircuitBuilder(blocks * self.width)
        self.xcheck = [[_KNOWN] * (d - 1) for _ in range(blocks)]
        self.zbar = [_KNOWN] * blocks
        self.xbar = [_KNOWN] * blocks
        self.known = set()
        self.learned = {}
        self._labels = itertools.count()
        self._pending = []

    def data_qubits(self, p):
        base = p * self.width
        return [base + 2 * j for j in range(self.d)]

    def check_qubits(self, p):
        base = p * self.width
        return [base + 2 * j + 1 for j in range(self.d - 1)]

    def _fresh(self):
        return _Parity(labels=frozenset([next(self._labels)]))

    def _determined(self, expr):
        return expr.labels <= self.known

    def prepare_data(self, p, block, basis):
        self._pending.append((basis, self.data_qubits(p)))
        label = ("Z", block)
        self.zbar[p] = _Parity(labels=frozenset([label]))
        if basis == "Z":
            self.known.add(label)
            self.xcheck[p] = [self._fresh() for _ in range(self.d - 1)]
            self.xbar[p] = self._fresh()
        else:
            self.xcheck[p] = [_KNOWN] * (self.d - 1)
            self.xbar[p] = _KNOWN

    def reset_ancilla(self, p):
        self._pending.append(("Z", self.data_qubits(p)))
        self.zbar[p] = _KNOWN
        self.xcheck[p] = [self._fresh() for _ in range(self.d - 1)]
        self.xbar[p] = self._fresh()

    def _flush_preparations(self):
        for basis, qubits in self._pending:
            self.builder.prep(basis, qubits)
        self._pending = []

    def syndrome_round(self):
        b = self.builder
        b.mark_round()
        if self.d == 1:
            if self._pending:
                self._flush_preparations()
                b.tick()
            return
        positions = range(self.blocks)
        self._flush_preparations()
        b.prep("X", [q for p in positions for q in self.check_qubits(p)])
        b.tick()
        for offset in (0, 1):
            pairs = []
            for p in positions:
                data = self.data_qubits(p)
                pairs.extend(
                    (c, data[j + offset]) for j, c in enumerate(self.check_qubits(p))
                )
            b.cnot(pairs)
            b.tick()
        for p in positions:
            outcomes = b.measure("X", self.check_qubits(p))
            for i, m in enumerate(outcomes):
                expr = self.xcheck[p][i]
                if self._determined(expr):
                    b.detector(expr.meas ^ {m})
                self.xcheck[p][i] = _Parity(frozenset([m]))
        b.tick()

    def transversal_cnot(self, pairs):
        """One layer of transversal CNOTs between block positions."""
        cnots = []
        for c, t in pairs:
            cnots.extend(zip(self.data_qubits(c), self.data_qubits(t)))
            self.xcheck[c] = [xc ^ xt for xc, xt in zip(self.xcheck[c], self.xcheck[t])]
            self.zbar[t] = self.zbar[t] ^ self.zbar[c]
            self.xbar[c] = self.xbar[c] ^ self.xbar[t]
        self.builder.cnot(cnots)
        self.builder.tick()

    def _compare(self, expr, outcome, learn):
        key = expr.labels
        if learn and key and key in self.learned:
            return self.learned[key] ^ expr.meas ^ outcome
        if self._determined(expr):
            return expr.meas ^ outcome
        return None

    def measure_ancillas(self, positions):
        outcomes = {
            p: frozenset(self.builder.measure("Z", self.data_qubits(p)))
            for p in positions
        }
        for p, outcome in outcomes.items():
            expr = self.zbar[p]
            detector = self._compare(expr, outcome, learn=True)
            if detector:
                self.builder.detector(detector)
            if expr.labels:
                self.learned[expr.labels] = expr.meas ^ outcome
            self.zbar[p] = _Parity(outcome)
            self.xcheck[p] = [self._fresh() for _ in range(self.d - 1)]
            self.xbar[p] = self._fresh()
        self.builder.tick()

    def finish(self, basis, order, data_blocks, rows=(), logical_sets=()):
        """Measure every block transversally and close the experiment.

        ``rows`` are outer checks (block sets) compared one last time;
        ``logical_sets`` are the block sets whose Z (Z basis) or first-qubit X
        (X basis) parities form the observables.
        """
        b = self.builder
        position = {block: p for p, block in enumerate(order)}
        outcomes = {
            p: b.measure(basis, self.data_qubits(p)) for p in range(self.blocks)
        }
        if basis == "Z":
            for p in range(self.blocks):
                if order[p] in data_blocks:
                    continue
                detector = self._compare(self.zbar[p], frozenset(outcomes[p]), False)
                if detector:
                    b.detector(detector)
            for row in rows:
                expr = _KNOWN
                outcome = frozenset()
                for block in row:
                    expr = expr ^ self.zbar[position[block]]
                    outcome = outcome ^ frozenset(outcomes[position[block]])
                detector = self._compare(expr, outcome, learn=True)
                if detector:
                    b.detector(detector)
        else:
            for p in range(self.blocks):
                mx = outcomes[p]
                for i, expr in enumerate(self.xcheck[p]):
                    if self._determined(expr):
                        b.detector(expr.meas ^ {mx[i], mx[i + 1]})
        for blocks in logical_sets:
            expr = _KNOWN
            outcome = frozenset()
            for block in blocks:
                p = position[block]
                if basis == "Z":
                    expr = expr ^ self.zbar[p]
                    outcome = outcome ^ frozenset(outcomes[p])
                else:
                    expr = expr ^ self.xbar[p]
                    outcome = outcome ^ {outcomes[p][0]}
            if not self._determined(expr):
                raise InvariantError(
                    f"observable on blocks {sorted(blocks)} is not deterministic"
                )
            b.observable(expr.meas ^ outcome)


@timer()
def build_repetition_memory(d, rounds, basis, noise=None):
    """A repetition-code memory: ``rounds`` syndrome rounds, then readout."""
    if basis not in BASES:
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    if rounds < 1:
        raise ValueError(f"rounds must be positive, got {rounds}")
    col = _ColumnCircuit(1, d)
    col.prepare_data(0, 0, basis)
    for _ in range(rounds):
        col.syndrome_round()
    logical = [(0,)]
    col.finish(basis, (0,), {0}, logical_sets=logical)
    circuit = col.builder.build(
        basis=basis,
        logical_distance=1 if basis == "Z" else d,
        name=f"repetition d={d} rounds={rounds} basis={basis}",
    )
    return apply_noise(circuit, noise) if noise is not None else circuit


@timer()
def build_elevator_memory(spec, noise=None, schedule=None):
    """Concatenated-code memory driven by the elevator schedule."""
    if schedule is None:
        schedule = build_elevator_schedule(spec)
    outer = spec.outer
    col = _ColumnCircuit(spec.n_blocks, spec.d_z)
    data_blocks = set(range(outer.n))
    for p, block in enumerate(schedule.initial_order):
        if block in data_blocks:
            col.prepare_data(p, block, spec.basis)
    first_resets = schedule.ticks[0].resets if schedule.ticks else ()
    for p, block in enumerate(schedule.initial_order):
        if block not in data_blocks and p not in first_resets:
            col.reset_ancilla(p)
    for plan in schedule.ticks:
        for p in plan.resets:
            col.reset_ancilla(p)
        col.syndrome_round()
        layers = max((len(m.cnot_layers) for m in plan.moves), default=0)
        for layer in range(layers):
            col.transversal_cnot(
                [m.cnot_layers[layer] for m in plan.moves if layer < len(m.cnot_layers)]
            )
        if plan.measurements:
            col.measure_ancillas(plan.measurements)

    if spec.basis == "Z":
        logical_sets = [(f,) for f in outer.free_columns]
        distance = outer.distance
    else:
        basis_words = outer.codeword_basis
        logical_sets = [basis_words.row_support(j) for j in range(basis_words.rows)]
        distance = spec.d_z
    col.finish(
        spec.basis,
        schedule.final_order,
        data_blocks,
        rows=outer.check_matrix.supports(),
        logical_sets=logical_sets,
    )
    circuit = col.builder.build(
        basis=spec.basis,
        logical_distance=distance,
        name=(
            f"elevator {outer.name} d_z={spec.d_z} ancillae={spec.ancillae} "
            f"basis={spec.basis} outer_rounds={spec.outer_rounds}"
        ),
    )
    logger.info(
        "Built %s: %d qubits, %d inner rounds, %d detectors",
        circuit.name,
        circuit.qubit_count,
        circuit.inner_rounds,
        circuit.detector_count,
    )
    return apply_noise(circuit, noise) if noise is not None else circuit


@dataclasses.dataclass(frozen=True)
class ResourceCount:
    qubits: int
    inner_rounds: int
    cnot_count: int


def count_resources(target):
    """Qubits, inner rounds and CNOTs of a circuit or an elevator spec."""
    if isinstance(target, Circuit):
        return ResourceCount(
            target.qubit_count, target.inner_rounds, target.cnot_count
        )
    if isinstance(target, ElevatorSpec):
        d = target.d_z
        schedule = build_elevator_schedule(target)
        per_round = target.n_blocks * 2 * (d - 1)
        logical = sum(
            len(move.cnot_layers) * d for plan in schedule.ticks for move in plan.moves
        )
        return ResourceCount(
            qubits=target.n_blocks * (2 * d - 1),
            inner_rounds=schedule.inner_rounds,
            cnot_count=schedule.inner_rounds * per_round + logical,
        )
    raise TypeError(f"cannot count resources of {type(target).__name__}")
