"""Belief propagation with ordered-statistics post-processing of DEM syndromes."""
from __future__ import annotations

import dataclasses
import itertools
import logging

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from elevatorcodes.errors import InfeasibleError, InvariantError
from elevatorcodes.gf2 import pack_bits, row_reduce, unpack_bits

logger = logging.getLogger(__name__)

VARIANTS = ("product_sum", "min_sum")
SCHEDULES = ("parallel", "serial")

MIN_PRIOR = 1e-12
MAX_ML_NULLITY = 24
_ML_CHUNK = 1 << 14
_TANH_LIMIT = 1.0 - 1e-15
_LOG_FLOOR = 1e-300
_MAX_LLR = 2 * float(np.arctanh(_TANH_LIMIT))


@dataclasses.dataclass(frozen=True)
class DecoderConfig:
    variant: str = "product_sum"
    max_iterations: int = 30
    osd_order: int = 0
    schedule: str = "serial"
    min_sum_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown BP variant {self.variant!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown BP schedule {self.schedule!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.osd_order < 0:
            raise ValueError("osd_order must be non-negative")
        if not 0 < self.min_sum_scale <= 1:
            raise ValueError("min_sum_scale must be in (0, 1]")


@dataclasses.dataclass(frozen=True, eq=False)
class BpResult:
    posterior: np.ndarray
    hard_decision: np.ndarray
    converged: bool
    iterations: int


@dataclasses.dataclass(frozen=True, eq=False)
class DecodeOutcome:
    observables: np.ndarray
    error: np.ndarray
    converged: bool
    iterations: int
    used_osd: bool = False


class _Layer:
    """Edges of a set of checks, sorted by check, ready for ``reduceat``."""

    __slots__ = ("edges", "checks", "starts", "local")

    def __init__(self, edges, edge_checks):
        self.edges = edges
        checks, starts, local = np.unique(
            edge_checks, return_index=True, return_inverse=True
        )
        self.checks = checks
        self.starts = starts
        self.local = local


def _greedy_layers(check_vars):
    """Colour checks so that no two checks of one colour share a mechanism."""
    layers = []
    for check, variables in enumerate(check_vars):
        for members, used in layers:
            if used.isdisjoint(variables):
                members.append(check)
                used.update(variables)
                break
        else:
            layers.append(([check], set(variables)))
    return [members for members, _ in layers]


class BpOsdDecoder:
    """BP+OSD decoder for one detector error model.

    The Tanner graph is built once; instances are not shared between
    processes, but the model they wrap is immutable.
    """

    def __init__(self, dem, config=None):
        self.dem = dem
        self.config = config or DecoderConfig()
        priors = np.clip(dem.priors, MIN_PRIOR, 0.5)
        self.priors = priors
        self.prior_llr = np.log((1 - priors) / priors)

        self.h = sp.csr_matrix(dem.check_matrix.to_csr(), dtype=np.uint8)
        self.obs = sp.csr_matrix(dem.observable_matrix.to_csr(), dtype=np.uint8)
        self.n = dem.mechanism_count
        coo = self.h.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self.edge_check = coo.row[order].astype(np.int64)
        self.edge_var = coo.col[order].astype(np.int64)
        self.flood = _Layer(np.arange(self.edge_check.size), self.edge_check)
        self._layers = None
        self._packed_h = None

    # -- belief propagation ----------------------------------------------

    @property
    def layers(self):
        if self._layers is None:
            edges_by_check = {}
            for e, c in enumerate(self.edge_check):
                edges_by_check.setdefault(int(c), []).append(e)
            checks = sorted(edges_by_check)
            colouring = _greedy_layers(
                [self.edge_var[edges_by_check[c]].tolist() for c in checks]
            )
            self._layers = []
            for members in colouring:
                edges = np.concatenate([edges_by_check[checks[i]] for i in members])
                edges.sort()
                self._layers.append(_Layer(edges, self.edge_check[edges]))
            logger.debug("Serial BP schedule uses %d layers", len(self._layers))
        return self._layers

    def _check_to_var(self, v2c, layer, syndrome):
        config = self.config
        flip = syndrome[layer.checks].astype(bool)[layer.local]
        negative = v2c < 0
        parity = np.add.reduceat(negative.astype(np.int64), layer.starts) & 1
        sign_flip = parity.astype(bool)[layer.local] ^ negative ^ flip
        magnitude_in = np.abs(v2c)
        if config.variant == "product_sum":
            t = np.maximum(np.tanh(magnitude_in / 2), _LOG_FLOOR)
            logs = np.log(t)
            totals = np.add.reduceat(logs, layer.starts)
            excluded = np.minimum(np.exp(totals[layer.local] - logs), _TANH_LIMIT)
            magnitude = 2 * np.arctanh(excluded)
        else:
            first_min = np.minimum.reduceat(magnitude_in, layer.starts)
            is_min = magnitude_in == first_min[layer.local]
            hits = np.flatnonzero(is_min)
            _, first = np.unique(layer.local[hits], return_index=True)
            masked = magnitude_in.copy()
            masked[hits[first]] = np.inf
            second_min = np.minimum(np.minimum.reduceat(masked, layer.starts), _MAX_LLR)
            magnitude = np.where(
                masked == np.inf, second_min[layer.local], first_min[layer.local]
            )
            magnitude = config.min_sum_scale * magnitude
        return np.where(sign_flip, -magnitude, magnitude)

    def _satisfies(self, error, syndrome):
        return np.array_equal((self.h @ error.astype(np.uint8)) & 1, syndrome & 1)

    def bp(self, syndrome):
        syndrome = np.asarray(syndrome, dtype=np.uint8) & 1
        if syndrome.size != self.dem.detector_count:
            raise ValueError(
                f"syndrome has {syndrome.size} bits, model has "
                f"{self.dem.detector_count} detectors"
            )
        total = self.prior_llr.copy()
        hard = np.zeros(self.n, dtype=np.uint8)
        if self._satisfies(hard, syndrome):
            return BpResult(total, hard, True, 0)
        if not self.edge_var.size:
            return BpResult(total, hard, False, 0)
        c2v = np.zeros(self.edge_var.size)
        converged = False
        iteration = 0
        for iteration in range(1, self.config.max_iterations + 1):
            if self.config.schedule == "parallel":
                v2c = total[self.edge_var] - c2v
                c2v = self._check_to_var(v2c, self.flood, syndrome)
                total = self.prior_llr + np.bincount(
                    self.edge_var, weights=c2v, minlength=self.n
                )
            else:
                for layer in self.layers:
                    variables = self.edge_var[layer.edges]
                    old = c2v[layer.edges]
                    new = self._check_to_var(total[variables] - old, layer, syndrome)
                    total[variables] += new - old
                    c2v[layer.edges] = new
            hard = (total < 0).astype(np.uint8)
            if self._satisfies(hard, syndrome):
                converged = True
                break
        return BpResult(total, hard, converged, iteration)

    # -- ordered statistics ----------------------------------------------

    def _packed_check_matrix(self):
        if self._packed_h is None:
            self._packed_h = pack_bits(self.h.toarray())
        return self._packed_h

    def osd(self, syndrome, soft=None):
        """Syndrome-consistent estimate from an information set ordered by ``soft``.

        ``soft`` holds per-mechanism log-likelihood ratios (low means likely
        in error); the priors are used without it.
        """
        syndrome = np.asarray(syndrome, dtype=np.uint8) & 1
        soft = self.prior_llr if soft is None else np.asarray(soft, dtype=np.float64)
        order = np.argsort(soft, kind="stable")
        reduced, pivots, rhs = row_reduce(
            self._packed_check_matrix(), self.n, columns=order, rhs=syndrome
        )
        rank = len(pivots)
        if rhs[rank:].any():
            raise InfeasibleError(
                "syndrome is outside the column space of the check matrix",
                self.dem.name or None,
            )
        error = np.zeros(self.n, dtype=np.uint8)
        error[pivots] = rhs[:rank]
        order_lambda = self.config.osd_order
        if order_lambda and rank:
            pivot_set = set(pivots)
            candidates = [int(c) for c in order if c not in pivot_set][:order_lambda]
            if candidates:
                error = self._osd_exhaustive(
                    reduced[:rank], pivots, rhs[:rank], candidates
                )
        return error

    def _osd_exhaustive(self, reduced, pivots, rhs, candidates):
        width = len(candidates)
        # first candidate varies fastest; the all-zero pattern (OSD-0) comes first
        patterns = np.array(
            list(itertools.product((0, 1), repeat=width)), dtype=np.uint8
        )[:, ::-1]
        columns = unpack_bits(reduced, self.n)[:, candidates]
        pivot_values = (rhs[None, :] + patterns.astype(np.int64) @ columns.T) & 1
        llr = self.prior_llr
        cost = pivot_values @ llr[pivots] + patterns @ llr[candidates]
        best = int(np.argmin(cost))
        error = np.zeros(self.n, dtype=np.uint8)
        error[pivots] = pivot_values[best]
        error[candidates] = patterns[best]
        return error

    # -- full decoding ---------------------------------------------------

    def decode(self, syndrome):
        syndrome = np.asarray(syndrome, dtype=np.uint8) & 1
        result = self.bp(syndrome)
        used_osd = False
        if result.converged:
            error = result.hard_decision
        else:
            error = self.osd(syndrome, result.posterior)
            used_osd = True
            if not self._satisfies(error, syndrome):
                raise InvariantError(
                    "OSD estimate does not reproduce the syndrome",
                    self.dem.name or None,
                )
        flips = (self.obs @ error) & 1
        return DecodeOutcome(
            flips.astype(bool), error, result.converged, result.iterations, used_osd
        )

    def decode_batch(self, syndromes):
        """Predicted observable flips for each row of ``syndromes``."""
        syndromes = np.asarray(syndromes, dtype=bool)
        shape = (syndromes.shape[0], self.dem.observable_count)
        predictions = np.zeros(shape, dtype=bool)
        cache = {}
        osd_calls = 0
        for shot in np.flatnonzero(syndromes.any(axis=1)):
            key = np.packbits(syndromes[shot]).tobytes()
            if key not in cache:
                outcome = self.decode(syndromes[shot])
                osd_calls += outcome.used_osd
                cache[key] = outcome.observables
            predictions[shot] = cache[key]
        logger.debug(
            "Decoded %d shots (%d distinct non-trivial syndromes, %d needed OSD)",
            syndromes.shape[0],
            len(cache),
            osd_calls,
        )
        return predictions


def decode(dem, syndrome, config=None):
    return BpOsdDecoder(dem, config).decode(syndrome)


def ml_exhaustive(dem, syndrome, max_nullity=MAX_ML_NULLITY):
    """Most probable observable class given ``syndrome``, by coset enumeration."""
    syndrome = np.asarray(syndrome, dtype=np.uint8) & 1
    h = dem.check_matrix.to_dense()
    n = dem.mechanism_count
    reduced, pivots, rhs = row_reduce(pack_bits(h), n, rhs=syndrome)
    rank = len(pivots)
    if rhs[rank:].any():
        raise InfeasibleError("syndrome is outside the column space", dem.name or None)
    nullity = n - rank
    if nullity > max_nullity:
        raise InfeasibleError(
            f"null space of dimension {nullity} is too large to enumerate "
            f"(limit {max_nullity})",
            dem.name or None,
        )
    particular = np.zeros(n, dtype=np.uint8)
    particular[pivots] = rhs[:rank]
    null_basis = dem.check_matrix.nullspace().to_dense().astype(np.int64)
    obs = dem.observable_matrix.to_dense().astype(np.int64)
    p = np.clip(dem.priors, MIN_PRIOR, 1 - MIN_PRIOR)
    log_odds = np.log(p / (1 - p))

    weights = 1 << np.arange(dem.observable_count, dtype=np.int64)
    classes = {}
    for start in range(0, 1 << nullity, _ML_CHUNK):
        combos = np.arange(start, min(start + _ML_CHUNK, 1 << nullity), dtype=np.int64)
        bits = (combos[:, None] >> np.arange(nullity, dtype=np.int64)) & 1
        errors = (particular[None, :] + bits @ null_basis) & 1
        logp = errors @ log_odds
        labels = ((errors @ obs.T) & 1) @ weights
        for label in np.unique(labels):
            mass = logsumexp(logp[labels == label])
            label = int(label)
            if label in classes:
                mass = np.logaddexp(classes[label], mass)
            classes[label] = mass
    best = max(sorted(classes), key=lambda label: classes[label])
    return ((best >> np.arange(dem.observable_count)) & 1).astype(bool)
