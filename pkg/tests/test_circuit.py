import math
from textwrap import dedent

import pytest

from elevatorcodes.circuit import (
    Circuit,
    CircuitBuilder,
    ErrorChannel,
    Gate,
    Instruction,
    NoiseModel,
    apply_noise,
)
from elevatorcodes.errors import CodeFormatError


def _bell_pair():
    builder = CircuitBuilder(2)
    builder.prep("Z", [0, 1])
    builder.tick()
    builder.mark_round()
    builder.cnot([(0, 1)])
    builder.tick()
    m = builder.measure("Z", [0, 1])
    builder.detector(m)
    builder.observable([m[0]])
    return builder.build(basis="Z", logical_distance=1, name="bell")


def test_builder_and_counts():
    circuit = _bell_pair()
    assert circuit.measurement_count == 2
    assert circuit.detector_count == 1
    assert circuit.observable_count == 1
    assert circuit.inner_rounds == 1
    assert circuit.cnot_count == 1
    assert not circuit.has_noise
    assert circuit.round_markers == (3,)


def test_text_format():
    circuit = _bell_pair()
    assert circuit.to_text() == dedent(
        """\
        # bell
        QUBITS 2
        BASIS Z
        DISTANCE 1
        PREPZ 0
        PREPZ 1
        TICK
        ROUND 0
        CNOT 0 1
        TICK
        MZ 0 -> 0
        MZ 1 -> 1
        DETECTOR 0 1
        OBSERVABLE 0 0
        """
    )
    assert Circuit.from_text(circuit.to_text()) == circuit


def test_moments():
    moments = list(_bell_pair().moments())
    assert [ticked for _, ticked in moments] == [True, True, False]
    assert [len(m) for m, _ in moments] == [2, 1, 2]


def test_error_channel_text():
    text = dedent(
        """\
        QUBITS 2
        ERROR 1.00000e-03 Z 0 Z 1
        ELSE_ERROR 2.00000e-03 X 0 I 1
        MZ 0 -> 0
        """
    )
    circuit = Circuit.from_text(text)
    (error, measure) = circuit.instructions
    assert error.gate is Gate.ERROR
    assert error.channel.outcomes == ((1e-3, "ZZ"), (2e-3, "XI"))
    assert error.channel.total == pytest.approx(3e-3)
    assert measure.gate is Gate.MEAS_Z
    assert circuit.has_noise
    assert "ELSE_ERROR 2.00000e-03 X 0 I 1" in circuit.to_text()


@pytest.mark.parametrize(
    "text, message",
    [
        pytest.param("PREPZ 0\n", "missing QUBITS", id="no-qubits"),
        pytest.param("QUBITS 1\nFOO 0\n", "unknown instruction", id="unknown"),
        pytest.param("QUBITS 1\nCNOT 0\n", "takes 2 qubits", id="arity"),
        pytest.param("QUBITS 1\nPREPZ 3\n", "qubit 3 out of range", id="range"),
        pytest.param("QUBITS 1\nMZ 0 -> 4\n", "measurement index", id="index"),
        pytest.param("QUBITS 1\nELSE_ERROR 0.1 X 0\n", "without ERROR", id="else"),
        pytest.param("QUBITS 1\nMZ 0 -> 0\nDETECTOR 2\n", "out of range", id="det"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(CodeFormatError, match=message):
        Circuit.from_text(text, source="bad.circuit")


def test_error_channel_validation():
    with pytest.raises(ValueError):
        ErrorChannel(((0.7, "X"), (0.7, "Z")))
    with pytest.raises(ValueError):
        ErrorChannel(((0.1, "Q"),))


def test_noise_model_bias():
    noise = NoiseModel.from_bias(1e-3, 1e4)
    assert noise.p_x == pytest.approx(1e-7)
    assert noise.eta == pytest.approx(1e4)
    assert NoiseModel.from_bias(1e-3, math.inf).p_x == 0.0
    with pytest.raises(ValueError):
        NoiseModel(0.7, 0.7)


def test_noise_channels():
    noise = NoiseModel(p_x=3e-4, p_z=3e-3)
    assert noise.prep_error("Z").outcomes == ((3e-4, "X"),)
    assert noise.prep_error("X").outcomes == ((3e-3, "Z"),)
    assert noise.measure_error("Z").outcomes == ((3e-4, "X"),)
    assert noise.idle_error().outcomes == ((3e-3, "Z"), (3e-4, "X"))
    cnot = noise.cnot_error()
    paulis = [p for _, p in cnot.outcomes]
    assert paulis == ["IZ", "ZI", "ZZ", "IX", "XI", "XX"]
    assert cnot.total == pytest.approx(3.3e-3)
    # pure phase-flip noise drops the zero-probability outcomes
    assert NoiseModel(0.0, 1e-3).prep_error("Z") is None


def test_apply_noise_placement():
    noisy = apply_noise(_bell_pair(), NoiseModel(p_x=1e-3, p_z=1e-2))
    gates = [
        (ins.gate.value, ins.targets, ins.channel and ins.channel.outcomes[0][1])
        for ins in noisy.instructions
    ]
    assert gates == [
        ("PREPZ", (0,), None),
        ("ERROR", (0,), "X"),
        ("PREPZ", (1,), None),
        ("ERROR", (1,), "X"),
        ("TICK", (), None),
        ("CNOT", (0, 1), None),
        ("ERROR", (0, 1), "IZ"),
        ("TICK", (), None),
        ("ERROR", (0,), "X"),
        ("MZ", (0,), None),
        ("ERROR", (1,), "X"),
        ("MZ", (1,), None),
    ]
    # the round marker still points at the CNOT
    assert noisy.instructions[noisy.round_markers[0]].gate is Gate.CNOT
    assert noisy.detectors == _bell_pair().detectors


def test_idle_errors_fill_unused_qubits():
    builder = CircuitBuilder(3)
    builder.cnot([(0, 1)])
    builder.tick()
    noisy = apply_noise(builder.build(), NoiseModel(0.0, 1e-3))
    idles = [
        ins.targets
        for ins in noisy.instructions
        if ins.gate is Gate.ERROR and len(ins.targets) == 1
    ]
    assert idles == [(2,)]


def test_noiseless_model_keeps_circuit():
    circuit = _bell_pair()
    assert apply_noise(circuit, NoiseModel(0.0, 0.0)) == circuit


def test_save_and_load(tmp_path):
    circuit = apply_noise(_bell_pair(), NoiseModel(1e-3, 1e-2))
    path = circuit.save(tmp_path / "out" / "bell.circuit")
    # probabilities are written with 6 significant digits
    assert Circuit.load(path).to_text() == circuit.to_text()
    with pytest.raises(CodeFormatError, match="Reading circuit failed"):
        Circuit.load(tmp_path / "missing.circuit")


def test_instructions_compare_by_value():
    assert Instruction(Gate.CNOT, (0, 1)) == Instruction(Gate.CNOT, (0, 1))
