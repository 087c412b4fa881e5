from textwrap import dedent

import numpy as np
import pytest

from elevatorcodes.circuit import (
    Circuit,
    CircuitBuilder,
    Gate,
    NoiseModel,
    apply_noise,
)
from elevatorcodes.codes import builtin_outer, is_matchable
from elevatorcodes.errors import CodeFormatError, InvariantError
from elevatorcodes.gf2 import unpack_bits
from elevatorcodes.layout import (
    ElevatorSpec,
    build_elevator_memory,
    build_elevator_schedule,
    build_repetition_memory,
)
from elevatorcodes.sim import (
    BATCH_SHOTS,
    FrameSimulator,
    batch_sizes,
    extract_dem,
    pack_rows,
    read_packed_rows,
    sample,
    write_samples,
)

TWO_QUBIT_CIRCUIT = dedent(
    """\
    # two qubits
    QUBITS 2
    PREPZ 0
    PREPZ 1
    TICK
    ERROR 1.00000e-02 X 0
    ERROR 2.00000e-02 X 1
    ERROR 3.00000e-02 Z 0
    CNOT 0 1
    TICK
    ERROR 4.00000e-02 X 0
    MZ 0 -> 0
    MZ 1 -> 1
    DETECTOR 0
    DETECTOR 1
    OBSERVABLE 0 1
    """
)


def test_batch_sizes():
    assert batch_sizes(0) == []
    assert batch_sizes(BATCH_SHOTS) == [BATCH_SHOTS]
    assert batch_sizes(2 * BATCH_SHOTS + 5) == [BATCH_SHOTS, BATCH_SHOTS, 5]


def test_deterministic_injection():
    circuit = Circuit.from_text(TWO_QUBIT_CIRCUIT)
    sim = FrameSimulator(circuit)
    # an X before the CNOT on qubit 0 spreads to qubit 1
    op_index, row = sim.fault_site[3]
    record = sim.run(1, randomize=False, injections={op_index: [(row, "X", 0)]})
    assert record[:, 0].tolist() == [1, 1]


def _fired_detectors(circuit, faults):
    """Detectors flipped by each ``(instruction, paulis)`` fault on its own."""
    sim = FrameSimulator(circuit)
    injections = {}
    for column, (index, paulis) in enumerate(faults):
        op_index, row = sim.fault_site[index]
        injections.setdefault(op_index, []).append((row, paulis, column))
    record = sim.run(len(faults), randomize=False, injections=injections)
    parities = np.zeros((circuit.detector_count, record.shape[1]), dtype=np.uint64)
    for i, det in enumerate(circuit.detectors):
        if det:
            parities[i] = np.bitwise_xor.reduce(record[list(det)], axis=0)
    fired = unpack_bits(parities, len(faults))
    return [np.flatnonzero(fired[:, col]).tolist() for col in range(len(faults))]


def _round_opening_errors(circuit, width, is_data_block):
    """Single-qubit ERROR instructions in the first moment of each inner round.

    Only errors on data qubits of positions for which ``is_data_block(round,
    position)`` holds are returned.
    """
    sites = []
    for r, marker in enumerate(circuit.round_markers):
        for index in range(marker, len(circuit.instructions)):
            ins = circuit.instructions[index]
            if ins.gate is Gate.TICK:
                break
            if ins.gate is not Gate.ERROR or len(ins.targets) != 1:
                continue
            position, offset = divmod(ins.targets[0], width)
            if offset % 2 == 0 and is_data_block(r, position):
                sites.append(index)
    return sites


def _elevator_data_positions(schedule):
    n = schedule.spec.outer.n
    orders = [schedule.initial_order] + [plan.order for plan in schedule.ticks]
    return lambda r, position: orders[r][position] < n


@pytest.mark.parametrize("family", ["repetition", "elevator"])
def test_single_data_fault_flips_few_detectors(family):
    noise = NoiseModel(1e-3, 1e-2)
    if family == "repetition":
        d = 5
        circuit = build_repetition_memory(d, 4, "X", noise)
        sites = _round_opening_errors(circuit, 2 * d - 1, lambda r, p: True)
    else:
        d = 3
        spec = ElevatorSpec(builtin_outer("15_9_3"), d, basis="X")
        schedule = build_elevator_schedule(spec)
        circuit = build_elevator_memory(spec, noise, schedule)
        sites = _round_opening_errors(
            circuit, 2 * d - 1, _elevator_data_positions(schedule)
        )
    assert len(sites) > circuit.inner_rounds
    fired = _fired_detectors(circuit, [(index, "Z") for index in sites])
    # a phase flip on a data qubit meets at most its two neighbouring checks
    assert all(len(dets) <= 2 for dets in fired)
    assert any(fired)


def test_single_data_bit_flip_meets_few_outer_checks():
    d = 3
    outer = builtin_outer("15_9_3")
    assert is_matchable(outer)
    spec = ElevatorSpec(outer, d, basis="Z", outer_rounds=2)
    schedule = build_elevator_schedule(spec)
    circuit = build_elevator_memory(spec, NoiseModel(1e-3, 1e-2), schedule)
    sites = _round_opening_errors(
        circuit, 2 * d - 1, _elevator_data_positions(schedule)
    )
    assert len(sites) > circuit.inner_rounds
    fired = _fired_detectors(circuit, [(index, "X") for index in sites])
    assert all(len(dets) <= 2 for dets in fired)
    assert any(fired)


def _random_noisy_circuit(rng, n, steps):
    b = CircuitBuilder(n)
    b.prep("Z", range(n))
    b.tick()
    for _ in range(steps):
        kind = rng.integers(3)
        q = int(rng.integers(n))
        basis = "ZX"[rng.integers(2)]
        if kind == 0:
            c, t = rng.choice(n, size=2, replace=False)
            b.cnot([(int(c), int(t))])
        elif kind == 1:
            b.measure(basis, [q])
        else:
            b.prep(basis, [q])
        if rng.random() < 0.5:
            b.tick()
    b.measure("Z", range(n))
    return apply_noise(b.build(), NoiseModel(0.01, 0.01))


def _reference_flips(circuit, fault_index, paulis):
    """Measurement flips of one fault, by dense symplectic propagation."""
    n = circuit.qubit_count
    v = np.zeros(2 * n, dtype=np.int64)
    flips = []
    for index, ins in enumerate(circuit.instructions):
        if ins.gate is Gate.CNOT:
            c, t = ins.targets
            conjugate = np.eye(2 * n, dtype=np.int64)
            conjugate[t, c] = 1
            conjugate[n + c, n + t] = 1
            v = (conjugate @ v) % 2
        elif ins.gate.is_prep:
            v[ins.targets[0]] = v[n + ins.targets[0]] = 0
        elif ins.gate.is_measurement:
            q = ins.targets[0]
            flips.append(int(v[q] if ins.gate.basis == "Z" else v[n + q]))
        elif index == fault_index:
            for q, letter in zip(ins.targets, paulis):
                v[q] ^= int(letter in "XY")
                v[n + q] ^= int(letter in "ZY")
    return flips


@pytest.mark.parametrize("seed", range(4))
def test_random_single_faults_match_dense_propagation(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        circuit = _random_noisy_circuit(rng, n, steps=int(rng.integers(4, 16)))
        errors = [
            i for i, ins in enumerate(circuit.instructions) if ins.gate is Gate.ERROR
        ]
        faults = []
        for index in rng.choice(errors, size=min(len(errors), 8), replace=False):
            width = len(circuit.instructions[index].targets)
            letters = "".join(rng.choice(list("IXYZ"), size=width))
            faults.append((int(index), letters))
        sim = FrameSimulator(circuit)
        injections = {}
        for column, (index, paulis) in enumerate(faults):
            op_index, row = sim.fault_site[index]
            injections.setdefault(op_index, []).append((row, paulis, column))
        record = sim.run(len(faults), randomize=False, injections=injections)
        flips = unpack_bits(record, len(faults))
        for column, (index, paulis) in enumerate(faults):
            expected = _reference_flips(circuit, index, paulis)
            assert flips[:, column].tolist() == expected, (index, paulis)


@pytest.mark.slow
def test_detector_marginals_match_error_model():
    circuit = build_repetition_memory(3, 3, "X", NoiseModel(2e-3, 2e-2))
    shots = 100_000
    sampled = sample(circuit, shots, seed=13).detectors.mean(axis=0)

    dem = extract_dem(circuit)
    h = dem.check_matrix.to_dense().astype(np.int64)
    rng = np.random.default_rng(14)
    hits = np.zeros(dem.detector_count, dtype=np.int64)
    for _ in range(10):
        errors = rng.random((shots // 10, dem.mechanism_count)) < dem.priors
        hits += ((errors.astype(np.int64) @ h.T) & 1).sum(axis=0)
    modelled = hits / shots

    p = (sampled + modelled) / 2
    sigma = np.sqrt(2 * p * (1 - p) / shots) + 1 / shots
    assert np.all(np.abs(sampled - modelled) <= 5 * sigma)


def test_extract_dem_merges_signatures():
    dem = extract_dem(Circuit.from_text(TWO_QUBIT_CIRCUIT))
    mechanisms = {(m.detectors, m.observables): m.probability for m in dem.mechanisms}
    # the Z error flips nothing; the X on qubit 0 after the CNOT joins nothing
    assert set(mechanisms) == {((0, 1), (0,)), ((1,), (0,)), ((0,), ())}
    assert mechanisms[((0, 1), (0,))] == pytest.approx(0.01)
    assert mechanisms[((1,), (0,))] == pytest.approx(0.02)
    assert mechanisms[((0,), ())] == pytest.approx(0.04)


def test_extract_dem_merges_equal_faults():
    text = TWO_QUBIT_CIRCUIT.replace("4.00000e-02 X 0", "4.00000e-02 X 1")
    dem = extract_dem(Circuit.from_text(text))
    mechanisms = {(m.detectors, m.observables): m.probability for m in dem.mechanisms}
    assert mechanisms[((1,), (0,))] == pytest.approx(0.02 * 0.96 + 0.04 * 0.98)


def test_undetectable_fault_needs_distance_one():
    text = TWO_QUBIT_CIRCUIT.replace("DETECTOR 1\n", "").replace(
        "DETECTOR 0\n", ""
    )
    text = text.replace("# two qubits", "# two qubits\nDISTANCE 3")
    circuit = Circuit.from_text(text)
    with pytest.raises(InvariantError, match="without triggering any detector"):
        extract_dem(circuit)
    assert extract_dem(circuit, allow_undetectable=True).mechanism_count == 1


@pytest.mark.parametrize("d", [3, 5, 7, 9, 11])
@pytest.mark.parametrize("basis", ["Z", "X"])
def test_noiseless_repetition_is_deterministic(d, basis):
    circuit = build_repetition_memory(d, 2 * d, basis)
    result = sample(circuit, 1000, seed=7)
    assert result.detectors.shape == (1000, circuit.detector_count)
    assert not result.detectors.any()
    assert not result.observables.any()


@pytest.mark.parametrize("name", ["15_9_3", "15_6_5", "16_3_8"])
@pytest.mark.parametrize(
    "d_z, ancillae, basis, outer_rounds",
    [
        pytest.param(3, 1, "Z", 2, id="d3-one-ancilla-Z"),
        pytest.param(3, 2, "Z", 2, id="d3-two-ancillae-Z"),
        pytest.param(5, 1, "X", 1, id="d5-one-ancilla-X"),
        pytest.param(3, 2, "X", 2, id="d3-two-ancillae-X"),
    ],
)
def test_noiseless_elevator_is_deterministic(name, d_z, ancillae, basis, outer_rounds):
    spec = ElevatorSpec(builtin_outer(name), d_z, ancillae, basis, outer_rounds)
    circuit = build_elevator_memory(spec)
    result = sample(circuit, 1000, seed=3)
    assert circuit.detector_count > 0
    assert not result.detectors.any()
    assert not result.observables.any()


def test_sampling_is_reproducible():
    circuit = build_repetition_memory(3, 3, "X", NoiseModel(0.0, 0.05))
    first = sample(circuit, 1500, seed=11)
    second = sample(circuit, 1500, seed=11)
    other = sample(circuit, 1500, seed=12)
    assert np.array_equal(first.detectors, second.detectors)
    assert np.array_equal(first.observables, second.observables)
    assert not np.array_equal(first.detectors, other.detectors)
    # dozens of noisy locations at 5% each
    assert first.detectors.any(axis=1).mean() > 0.3


def test_sampling_does_not_depend_on_threads():
    circuit = build_repetition_memory(3, 3, "X", NoiseModel(0.0, 0.05))
    serial = sample(circuit, 2 * BATCH_SHOTS + 10, seed=5, threads=1)
    parallel = sample(circuit, 2 * BATCH_SHOTS + 10, seed=5, threads=2)
    assert np.array_equal(serial.detectors, parallel.detectors)
    assert np.array_equal(serial.observables, parallel.observables)


def test_single_fault_rate():
    circuit = Circuit.from_text(TWO_QUBIT_CIRCUIT)
    result = sample(circuit, 20000, seed=1)
    # detector 1 fires for the X on qubit 0 or qubit 1 before the CNOT
    rate = result.detectors[:, 1].mean()
    assert rate == pytest.approx(0.01 * 0.98 + 0.02 * 0.99, abs=0.006)


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_repetition_dem_is_a_graph(basis):
    noise = NoiseModel(1e-3, 1e-2)
    dem = extract_dem(build_repetition_memory(5, 5, basis, noise))
    assert dem.mechanism_count > 0
    assert dem.hyperedges == []


def test_elevator_x_memory_has_hyperedges():
    spec = ElevatorSpec(builtin_outer("15_9_3"), 3, basis="X")
    dem = extract_dem(build_elevator_memory(spec, NoiseModel(1e-4, 1e-2)))
    assert len(dem.hyperedges) > 0


def test_sample_files(tmp_path):
    circuit = build_repetition_memory(3, 3, "X", NoiseModel(0.0, 0.05))
    result = sample(circuit, 100, seed=2)
    path = write_samples(result, tmp_path / "shots" / "rep.b8")
    assert path.stat().st_size == 100 * 1
    detectors = read_packed_rows(path, circuit.detector_count)
    observables = read_packed_rows(f"{path}.obs", 1)
    assert np.array_equal(detectors, result.detectors)
    assert np.array_equal(observables, result.observables)
    assert (tmp_path / "shots" / "rep.b8.json").read_text().count('"seed": 2') == 1


def test_pack_rows_bit_order():
    packed = pack_rows([[1, 0, 0, 0, 0, 0, 0, 0, 0, 1]])
    assert packed.tolist() == [[1, 2]]


def test_read_packed_rows_errors(tmp_path):
    path = tmp_path / "odd.b8"
    path.write_bytes(b"\x00\x00\x00")
    with pytest.raises(CodeFormatError, match="not a multiple"):
        read_packed_rows(path, 10)
    with pytest.raises(CodeFormatError):
        read_packed_rows(tmp_path / "missing.b8", 10)
