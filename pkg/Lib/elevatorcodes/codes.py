"""Classical outer codes, repetition codes and their CSS combination."""
from __future__ import annotations

import dataclasses
import functools
import logging
import re
from pathlib import Path
from typing import Optional

import numpy as np

from elevatorcodes.errors import CodeFormatError, InfeasibleError, InvariantError
from elevatorcodes.gf2 import BinaryMatrix

logger = logging.getLogger(__name__)

OUTER_CODES_DIR = Path(__file__).parent / "outer_codes"

# name -> claimed distance; the matrices live in OUTER_CODES_DIR
BUILTIN_OUTER_CODES = {
    "15_9_3": 3,
    "15_6_5": 5,
    "16_3_8": 8,
}

MAX_BRUTEFORCE_K = 20


@dataclasses.dataclass(frozen=True, eq=False)
class ClassicalCode:
    """A binary linear code given by its parity-check matrix."""

    name: str
    check_matrix: BinaryMatrix
    claimed_distance: Optional[int] = None

    @property
    def n(self):
        return self.check_matrix.cols

    @property
    def m(self):
        return self.check_matrix.rows

    @functools.cached_property
    def rank(self):
        return self.check_matrix.rank()

    @property
    def k(self):
        return self.n - self.rank

    @functools.cached_property
    def codeword_basis(self):
        return self.check_matrix.nullspace()

    @functools.cached_property
    def free_columns(self):
        """Pivot-free columns of the check matrix in ascending order.

        Codeword basis vector ``i`` is the unique one with a 1 at
        ``free_columns[i]``.
        """
        _, pivots = self.check_matrix.rref()
        return tuple(sorted(set(range(self.n)) - set(pivots)))

    @property
    def distance(self):
        if self.claimed_distance is not None:
            return self.claimed_distance
        return min_distance_bruteforce(self)

    @property
    def label(self):
        d = "?" if self.claimed_distance is None else self.claimed_distance
        return f"[{self.n},{self.k},{d}]"

    def syndrome(self, word):
        return self.check_matrix @ np.asarray(word, dtype=np.uint8)


@dataclasses.dataclass(frozen=True, eq=False)
class CssCode:
    """A CSS code; ``h_x`` rows detect X errors, ``h_z`` rows detect Z errors."""

    name: str
    h_x: BinaryMatrix
    h_z: BinaryMatrix
    logical_x: BinaryMatrix
    logical_z: BinaryMatrix
    d_x: int
    d_z: int
    outer: Optional[ClassicalCode] = None

    @property
    def n(self):
        return self.h_x.cols

    @property
    def k(self):
        return self.logical_x.rows

    @property
    def rate(self):
        return self.k / self.n

    @property
    def parameters(self):
        return (self.n, self.k, self.d_x, self.d_z)

    @property
    def label(self):
        return f"[[{self.n},{self.k},{{{self.d_x},{self.d_z}}}]]"


def _normalize_name(name):
    return re.sub(r"[^0-9]+", "_", str(name)).strip("_")


def read_code(path, claimed_distance=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CodeFormatError("Reading code file failed", path) from e
    try:
        matrix = BinaryMatrix.from_text(text)
    except CodeFormatError as e:
        e.source_trail.append(path)
        raise
    return ClassicalCode(path.stem, matrix, claimed_distance)


def write_code(code, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"# {code.name} parity-check matrix\n"
    path.write_text(header + code.check_matrix.to_text(), encoding="utf-8")
    return path


def builtin_outer(name):
    """Return one of the built-in outer codes: 15_9_3, 15_6_5 or 16_3_8."""
    key = _normalize_name(name)
    if key not in BUILTIN_OUTER_CODES:
        raise KeyError(
            f"unknown outer code {name!r}; choose from "
            f"{', '.join(sorted(BUILTIN_OUTER_CODES))}"
        )
    code = read_code(OUTER_CODES_DIR / f"code_{key}.txt", BUILTIN_OUTER_CODES[key])
    return dataclasses.replace(code, name=key)


def resolve_outer(name_or_path, claimed_distance=None):
    """Accept a built-in outer code name or a path to a matrix text file."""
    path = Path(name_or_path)
    if path.suffix and path.exists():
        return read_code(path, claimed_distance)
    try:
        return builtin_outer(name_or_path)
    except KeyError as e:
        raise CodeFormatError(str(e.args[0]), name_or_path) from None


def repetition(d):
    """The distance-d repetition code, checks between neighbouring bits."""
    if d < 1:
        raise ValueError(f"repetition distance must be positive, got {d}")
    if d % 2 == 0:
        logger.warning(
            "Even repetition distance %d corrects no more than distance %d", d, d - 1
        )
    supports = [(i, i + 1) for i in range(d - 1)]
    return ClassicalCode(f"rep{d}", BinaryMatrix.from_supports(supports, d), d)


def is_matchable(matrix):
    """True if every column has weight at most two."""
    if isinstance(matrix, ClassicalCode):
        matrix = matrix.check_matrix
    weights = matrix.column_weights()
    return bool(weights.size == 0 or weights.max() <= 2)


def min_distance_bruteforce(code, chunk_bits=16):
    """Minimum weight of a nonzero codeword, enumerating all 2^k codewords.

    Returns None for codes with no logical bits.
    """
    basis = code.codeword_basis.to_dense().astype(np.int64)
    k = basis.shape[0]
    if k == 0:
        return None
    if k > MAX_BRUTEFORCE_K:
        raise InfeasibleError(
            f"brute-force distance needs k <= {MAX_BRUTEFORCE_K}, code has k={k}",
            code.name,
        )
    best = code.n
    total = 1 << k
    step = 1 << min(chunk_bits, k)
    shifts = np.arange(k, dtype=np.int64)
    for start in range(1, total, step):
        stop = min(start + step, total)
        coeffs = (np.arange(start, stop, dtype=np.int64)[:, None] >> shifts) & 1
        weights = ((coeffs @ basis) % 2).sum(axis=1)
        best = min(best, int(weights.min()))
    logger.debug("Brute-force distance of %s is %d", code.name, best)
    return best


def css_commutes(code):
    return (code.h_x @ code.h_z.T).is_zero()


def combine(outer, d_z):
    """Concatenate an outer classical code with phase-flip repetition codes.

    Every outer bit becomes a block of ``d_z`` qubits protected against Z
    errors by XX checks; the outer checks act on block-wide Z operators.
    Logical X operators put one X on the first qubit of every block in an
    outer codeword; logical Z operators are full-block Z strings on the
    pivot-free blocks, which makes the two sets pair up exactly.
    """
    n = outer.n
    rep = repetition(d_z)
    h_x = outer.check_matrix.kron(BinaryMatrix.ones(1, d_z))
    h_z = BinaryMatrix.identity(n).kron(rep.check_matrix)
    basis = outer.codeword_basis
    logical_x = BinaryMatrix.from_supports(
        [[b * d_z for b in basis.row_support(j)] for j in range(basis.rows)],
        n * d_z,
    )
    logical_z = BinaryMatrix.from_supports(
        [[f * d_z + i for i in range(d_z)] for f in outer.free_columns],
        n * d_z,
    )
    code = CssCode(
        name=f"{outer.name}x{rep.name}",
        h_x=h_x,
        h_z=h_z,
        logical_x=logical_x,
        logical_z=logical_z,
        d_x=outer.distance,
        d_z=d_z,
        outer=outer,
    )
    if not css_commutes(code):
        raise InvariantError("combined code checks do not commute", code.name)
    return code
