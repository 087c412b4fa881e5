"""Matrices over GF(2).

Small matrices are stored as bit-packed rows (64 columns per ``uint64`` word);
matrices wider than ``SPARSE_COLUMN_THRESHOLD`` columns, such as the check
matrix of a detector error model, are kept as ``scipy.sparse`` CSR matrices
and only packed on demand.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from elevatorcodes.errors import CodeFormatError

logger = logging.getLogger(__name__)

SPARSE_COLUMN_THRESHOLD = 1 << 14

_ONE = np.uint64(1)


def _word_count(ncols):
    return max(1, -(-ncols // 64))


def pack_bits(dense):
    """Pack a 2-D 0/1 array into rows of little-endian ``uint64`` words."""
    dense = np.asarray(dense, dtype=np.uint8) & 1
    if dense.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {dense.shape}")
    rows, cols = dense.shape
    words = _word_count(cols)
    if rows == 0:
        return np.zeros((0, words), dtype=np.uint64)
    padded = np.zeros((rows, words * 64), dtype=np.uint8)
    padded[:, :cols] = dense
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack_bits(packed, ncols):
    """Inverse of :func:`pack_bits`; returns a ``uint8`` array of 0/1."""
    packed = np.asarray(packed, dtype=np.uint64)
    if packed.shape[0] == 0:
        return np.zeros((0, ncols), dtype=np.uint8)
    raw = np.ascontiguousarray(packed.astype("<u8")).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :ncols]


def column_bits(packed, col):
    """Return column ``col`` of a packed matrix as a boolean vector."""
    word, bit = col >> 6, np.uint64(col & 63)
    return ((packed[:, word] >> bit) & _ONE).astype(bool)


def row_reduce(packed, ncols, columns=None, rhs=None, full=True):
    """Gaussian elimination on packed rows.

    Columns are visited in the order given by ``columns`` (default: ascending),
    and each becomes a pivot if some not-yet-used row has a 1 in it. With
    ``full`` the pivot column is cleared in every other row (reduced row
    echelon form), otherwise only below the pivot.

    Returns ``(reduced, pivots, rhs)``: row ``i`` of ``reduced`` holds the
    pivot ``pivots[i]``; ``rhs`` (a 0/1 vector, or None) has been transformed
    alongside the rows.
    """
    work = np.array(packed, dtype=np.uint64, copy=True)
    nrows = work.shape[0]
    vec = None if rhs is None else np.array(rhs, dtype=np.uint8, copy=True) & 1
    pivots = []
    order = range(ncols) if columns is None else columns
    r = 0
    for c in order:
        if r == nrows:
            break
        hits = np.flatnonzero(column_bits(work[r:], c))
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            work[[r, p]] = work[[p, r]]
            if vec is not None:
                vec[[r, p]] = vec[[p, r]]
        mask = column_bits(work, c)
        mask[r] = False
        if not full:
            mask[:r] = False
        if mask.any():
            work[mask] ^= work[r]
            if vec is not None:
                vec[mask] ^= vec[r]
        pivots.append(int(c))
        r += 1
    return work, pivots, vec


def _canonical_csr(matrix):
    m = sp.csr_matrix(matrix, dtype=np.int64)
    m.sum_duplicates()
    m.data %= 2
    m.eliminate_zeros()
    return m.astype(np.uint8)


class BinaryMatrix:
    """An immutable rows x cols matrix over GF(2)."""

    __slots__ = ("_rows", "_cols", "_packed", "_csr")

    def __init__(self, data=None, shape=None):
        self._packed = None
        self._csr = None
        if data is None:
            if shape is None:
                raise ValueError("either data or shape is required")
            self._rows, self._cols = shape
            if self._cols > SPARSE_COLUMN_THRESHOLD:
                self._csr = sp.csr_matrix(shape, dtype=np.uint8)
            else:
                self._packed = np.zeros(
                    (self._rows, _word_count(self._cols)), dtype=np.uint64
                )
            return
        if sp.issparse(data):
            csr = _canonical_csr(data)
            self._rows, self._cols = csr.shape
            if self._cols > SPARSE_COLUMN_THRESHOLD:
                self._csr = csr
            else:
                self._packed = pack_bits(csr.toarray())
            return
        dense = np.asarray(data, dtype=np.int64)
        if dense.ndim == 1 and shape is not None:
            dense = dense.reshape(shape)
        if dense.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {dense.shape}")
        dense = (dense % 2).astype(np.uint8)
        self._rows, self._cols = dense.shape
        if self._cols > SPARSE_COLUMN_THRESHOLD:
            self._csr = _canonical_csr(dense)
        else:
            self._packed = pack_bits(dense)

    # -- constructors -----------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols):
        return cls(shape=(rows, cols))

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, dtype=np.uint8, format="csr"))

    @classmethod
    def ones(cls, rows, cols):
        return cls(np.ones((rows, cols), dtype=np.uint8))

    @classmethod
    def from_supports(cls, supports, cols):
        """Build a matrix from a list of per-row column supports."""
        indptr = [0]
        indices = []
        for support in supports:
            for c in support:
                if not 0 <= c < cols:
                    raise ValueError(f"column {c} out of range for {cols} columns")
            indices.extend(support)
            indptr.append(len(indices))
        data = np.ones(len(indices), dtype=np.uint8)
        return cls(sp.csr_matrix((data, indices, indptr), shape=(len(supports), cols)))

    @classmethod
    def from_packed(cls, packed, cols):
        return cls(unpack_bits(packed, cols))

    # -- accessors --------------------------------------------------------

    @property
    def shape(self):
        return (self._rows, self._cols)

    @property
    def rows(self):
        return self._rows

    @property
    def cols(self):
        return self._cols

    @property
    def is_sparse(self):
        return self._csr is not None

    def to_dense(self):
        if self._csr is not None:
            return self._csr.toarray().astype(np.uint8)
        return unpack_bits(self._packed, self._cols)

    def to_csr(self):
        if self._csr is not None:
            return self._csr.copy()
        return sp.csr_matrix(self.to_dense())

    def packed(self):
        """Bit-packed rows; a fresh copy the caller may modify."""
        if self._packed is not None:
            return self._packed.copy()
        packed = np.zeros((self._rows, _word_count(self._cols)), dtype=np.uint64)
        coo = self._csr.tocoo()
        cols = coo.col.astype(np.int64)
        np.bitwise_or.at(
            packed,
            (coo.row, cols >> 6),
            np.left_shift(_ONE, (cols & 63).astype(np.uint64)),
        )
        return packed

    def __getitem__(self, index):
        i, j = index
        if not (0 <= i < self._rows and 0 <= j < self._cols):
            raise IndexError(f"index {index} out of range for shape {self.shape}")
        if self._csr is not None:
            return int(self._csr[i, j])
        return int((self._packed[i, j >> 6] >> np.uint64(j & 63)) & _ONE)

    def row(self, i):
        if self._csr is not None:
            return self._csr.getrow(i).toarray().ravel().astype(np.uint8)
        return unpack_bits(self._packed[i : i + 1], self._cols)[0]

    def row_support(self, i):
        if self._csr is not None:
            start, stop = self._csr.indptr[i], self._csr.indptr[i + 1]
            return tuple(sorted(int(c) for c in self._csr.indices[start:stop]))
        return tuple(int(c) for c in np.flatnonzero(self.row(i)))

    def supports(self):
        return [self.row_support(i) for i in range(self._rows)]

    def column_weights(self):
        if self._csr is not None:
            return np.asarray(self._csr.sum(axis=0)).ravel().astype(np.int64)
        return self.to_dense().sum(axis=0, dtype=np.int64)

    def row_weights(self):
        if self._csr is not None:
            return np.diff(self._csr.indptr).astype(np.int64)
        return self.to_dense().sum(axis=1, dtype=np.int64)

    def is_zero(self):
        if self._csr is not None:
            return self._csr.nnz == 0
        return not self._packed.any()

    # -- algebra ----------------------------------------------------------

    @property
    def T(self):
        return self.transpose()

    def transpose(self):
        if self._csr is not None or self._rows > SPARSE_COLUMN_THRESHOLD:
            return BinaryMatrix(self.to_csr().T.tocsr())
        return BinaryMatrix(self.to_dense().T)

    def __matmul__(self, other):
        if isinstance(other, BinaryMatrix):
            if self._cols != other.rows:
                raise ValueError(
                    f"shape mismatch: {self.shape} @ {other.shape}"
                )
            if self.is_sparse or other.is_sparse:
                return BinaryMatrix(self.to_csr().astype(np.int64) @ other.to_csr())
            product = self.to_dense().astype(np.int64) @ other.to_dense()
            return BinaryMatrix(product % 2)
        vec = np.asarray(other, dtype=np.int64)
        if vec.shape[0] != self._cols:
            raise ValueError(f"shape mismatch: {self.shape} @ {vec.shape}")
        if self._csr is not None:
            return ((self._csr.astype(np.int64) @ vec) % 2).astype(np.uint8)
        return ((self.to_dense().astype(np.int64) @ vec) % 2).astype(np.uint8)

    def kron(self, other):
        return BinaryMatrix(sp.kron(self.to_csr(), other.to_csr(), format="csr"))

    @staticmethod
    def hstack(matrices):
        return BinaryMatrix(sp.hstack([m.to_csr() for m in matrices], format="csr"))

    @staticmethod
    def vstack(matrices):
        return BinaryMatrix(sp.vstack([m.to_csr() for m in matrices], format="csr"))

    def _reduce(self):
        return row_reduce(self.packed(), self._cols)

    def rank(self):
        _, pivots, _ = self._reduce()
        return len(pivots)

    def rref(self):
        """Return ``(rref_matrix, pivot_columns)`` with zero rows dropped."""
        reduced, pivots, _ = self._reduce()
        return BinaryMatrix.from_packed(reduced[: len(pivots)], self._cols), pivots

    def nullspace(self):
        """Canonical null-space basis, one basis vector per row.

        Basis vector ``i`` has a 1 at the ``i``-th pivot-free column, zeros at
        the other pivot-free columns, and whatever the pivot columns need.
        """
        reduced, pivots, _ = self._reduce()
        rank = len(pivots)
        free = sorted(set(range(self._cols)) - set(pivots))
        dense = unpack_bits(reduced[:rank], self._cols)
        basis = np.zeros((len(free), self._cols), dtype=np.uint8)
        for i, f in enumerate(free):
            basis[i, f] = 1
            if rank:
                basis[i, pivots] = dense[:, f]
        return BinaryMatrix(basis) if free else BinaryMatrix.zeros(0, self._cols)

    # -- comparison and text form -----------------------------------------

    def __eq__(self, other):
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        if self.shape != other.shape:
            return False
        if self.is_sparse or other.is_sparse:
            return (self.to_csr() != other.to_csr()).nnz == 0
        return np.array_equal(self._packed, other._packed)

    __hash__ = None

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"<BinaryMatrix {self._rows}x{self._cols} {kind}>"

    def to_text(self):
        lines = [f"{self._rows} {self._cols}"]
        for row in self.to_dense():
            lines.append("".join("1" if b else "0" for b in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, source=None):
        lines = [
            line.strip()
            for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        if not lines:
            raise CodeFormatError("empty matrix text", source)
        try:
            rows, cols = (int(v) for v in lines[0].split())
        except ValueError as e:
            raise CodeFormatError(
                f"bad header {lines[0]!r}, expected 'rows cols'", source
            ) from e
        body = lines[1:]
        if len(body) != rows:
            raise CodeFormatError(f"expected {rows} rows, found {len(body)}", source)
        dense = np.zeros((rows, cols), dtype=np.uint8)
        for i, line in enumerate(body):
            if len(line) != cols or set(line) - {"0", "1"}:
                raise CodeFormatError(
                    f"row {i} must be {cols} characters of 0/1, got {line!r}", source
                )
            dense[i] = [c == "1" for c in line]
        return cls(dense)
