from textwrap import dedent

import numpy as np
import pytest

from elevatorcodes.dem import DetectorErrorModel, ErrorMechanism, merge_probabilities
from elevatorcodes.errors import CodeFormatError


@pytest.fixture
def dem():
    return DetectorErrorModel(
        detector_count=4,
        observable_count=1,
        mechanisms=(
            ErrorMechanism(0.01, (0, 1)),
            ErrorMechanism(0.02, (1, 2, 3), (0,)),
            ErrorMechanism(0.03, (3,), (0,)),
        ),
        name="toy",
    )


def test_merge_probabilities():
    assert merge_probabilities(0.1, 0.2) == pytest.approx(0.26)
    assert merge_probabilities(0.5, 0.3) == pytest.approx(0.5)
    assert merge_probabilities(0.0, 0.2) == pytest.approx(0.2)


def test_matrices(dem):
    assert dem.mechanism_count == 3
    assert dem.check_matrix.to_dense().tolist() == [
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 1, 1],
    ]
    assert dem.observable_matrix.to_dense().tolist() == [[0, 1, 1]]
    assert dem.priors.tolist() == [0.01, 0.02, 0.03]
    assert dem.hyperedges == [dem.mechanisms[1]]


def test_syndrome_and_logical(dem):
    errors = np.array([1, 1, 0])
    assert dem.syndrome_of(errors).tolist() == [1, 0, 1, 1]
    assert dem.logical_of(errors).tolist() == [1]


def test_text_format(dem):
    text = dem.to_text()
    assert text == dedent(
        """\
        # toy
        DETECTORS 4
        OBSERVABLES 1
        error(1.00000e-02) D0 D1
        error(2.00000e-02) D1 D2 D3 L0
        error(3.00000e-02) D3 L0
        """
    )
    parsed = DetectorErrorModel.from_text(text)
    assert parsed.name == "toy"
    assert parsed.mechanisms == dem.mechanisms
    assert parsed.detector_count == 4


def test_detector_count_defaults_to_largest_index():
    parsed = DetectorErrorModel.from_text("error(0.1) D5\nerror(0.2) D1\n")
    assert parsed.detector_count == 6
    assert parsed.observable_count == 0


@pytest.mark.parametrize(
    "text",
    [
        pytest.param("DETECTORS x\n", id="count"),
        pytest.param("error 0.1 D0\n", id="syntax"),
        pytest.param("error(abc) D0\n", id="probability"),
        pytest.param("DETECTORS 1\nerror(0.1) D3\n", id="detector-range"),
        pytest.param("DETECTORS 1\nerror(0.1) D0 L0\n", id="observable-range"),
    ],
)
def test_text_format_errors(text):
    with pytest.raises(CodeFormatError):
        DetectorErrorModel.from_text(text, "bad.dem")


def test_save_and_load(dem, tmp_path):
    path = dem.save(tmp_path / "toy.dem")
    assert DetectorErrorModel.load(path).mechanisms == dem.mechanisms
    with pytest.raises(CodeFormatError):
        DetectorErrorModel.load(tmp_path / "missing.dem")
