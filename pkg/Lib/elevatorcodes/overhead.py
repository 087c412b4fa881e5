"""Smallest code per family reaching a target logical error rate, from fit models."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from elevatorcodes.errors import InfeasibleError
from elevatorcodes.fitting import eval_model, model_registry, surface_regime

logger = logging.getLogger(__name__)

FAMILIES = ("repetition", "concat", "surface", "xzzx")
SURFACE_DX = (3, 5)
MIN_DZ = 3
MAX_DZ = 401

FIG1_ETAS = tuple(float(e) for e in np.logspace(4, 7, 13))
FIG3A_TARGETS = tuple(10.0**-e for e in range(8, 16))
FIG3B_TARGETS = tuple(10.0**-e for e in range(6, 12))

SWEEP_COLUMNS = (
    "p_z",
    "eta",
    "target",
    "family",
    "outer",
    "ancillae",
    "d_x",
    "d_z",
    "qubits_per_logical",
    "p_l",
)


def noise_rates(p_z, eta):
    """``(p_z, p_x)`` for phase-flip rate ``p_z`` and bias ``eta = p_z / p_x``."""
    if eta <= 0:
        raise ValueError(f"noise bias must be positive, got {eta}")
    return p_z, 0.0 if math.isinf(eta) else p_z / eta


@dataclasses.dataclass(frozen=True)
class Candidate:
    """One code shape whose distance d_z is still free."""

    family: str
    outer: Optional[str] = None
    ancillae: int = 1
    d_x: Optional[int] = None
    n_b: Optional[int] = None
    k: int = 1

    def qubits_per_logical(self, d_z):
        if self.family == "repetition":
            return float(2 * d_z - 1)
        if self.family == "concat":
            return self.n_b * (2 * d_z - 1) / self.k
        if self.family == "surface":
            return float(2 * self.d_x * d_z - 1)
        return float((2 * self.d_x - 1) * (2 * d_z - 1))

    def rate(self, registry, p_z, p_x, d_z):
        """Total logical error rate per round and per logical qubit."""
        if self.family == "repetition":
            z = registry[("rep_z", None, 1, None, None)]
            x = registry[("rep_x", None, 1, None, None)]
            return eval_model(z, p_z, d_z) + eval_model(x, p_x, d_z)
        if self.family == "concat":
            z = registry[("concat_z", None, 1, None, None)]
            x = registry[("concat_x", self.outer, self.ancillae, None, None)]
            p_zl = eval_model(z, p_z, d_z, n_b=self.n_b, k=self.k)
            return p_zl + eval_model(x, p_x, d_z)
        kind = "rotated" if self.family == "surface" else "xzzx"
        z = registry[("surface_z", None, 1, self.d_x, surface_regime(kind, p_z))]
        x = registry[("surface_x", None, 1, self.d_x, kind)]
        return eval_model(z, p_z, d_z) + eval_model(x, p_x, d_z)

    @property
    def label(self):
        if self.family == "concat":
            suffix = f" ({self.ancillae} ancillae)" if self.ancillae > 1 else ""
            return f"concat [{self.outer.replace('_', ',')}]{suffix}"
        if self.d_x is not None:
            return f"{self.family} d_x={self.d_x}"
        return self.family


@dataclasses.dataclass(frozen=True)
class OverheadPoint:
    family: str
    candidate: Optional[Candidate]
    d_z: Optional[int]
    qubits_per_logical: float
    p_l: float
    target: float
    p_z: float
    eta: float

    @property
    def reachable(self):
        return self.candidate is not None

    def row(self):
        c = self.candidate
        return {
            "p_z": f"{self.p_z:.5e}",
            "eta": f"{self.eta:.5e}",
            "target": f"{self.target:.5e}",
            "family": self.family,
            "outer": (c.outer or "") if c else "",
            "ancillae": c.ancillae if c and c.family == "concat" else "",
            "d_x": (c.d_x or "") if c else "",
            "d_z": self.d_z if self.reachable else "",
            "qubits_per_logical": (
                f"{self.qubits_per_logical:.5e}" if self.reachable else "unreachable"
            ),
            "p_l": f"{self.p_l:.5e}" if self.reachable else "",
        }


def candidates(family, registry, outer=None, ancillae=None, d_x=None):
    if family == "repetition":
        return [Candidate("repetition")]
    if family == "concat":
        found = []
        for key, model in sorted(registry.items(), key=lambda item: str(item[0])):
            kind, name, count, _, _ = key
            if kind != "concat_x" or model.n_b is None or model.k is None:
                continue
            if outer is not None and name != outer:
                continue
            if ancillae is not None and count != ancillae:
                continue
            found.append(Candidate("concat", name, count, n_b=model.n_b, k=model.k))
        return found
    if family in ("surface", "xzzx"):
        widths = SURFACE_DX if d_x is None else (d_x,)
        return [Candidate(family, d_x=w) for w in widths]
    raise ValueError(f"unknown overhead family {family!r}")


def overhead_search(
    family,
    p_z,
    eta,
    target,
    registry=None,
    outer=None,
    ancillae=None,
    d_x=None,
    max_dz=MAX_DZ,
):
    """Cheapest configuration of ``family`` with per-round ``p_L`` <= ``target``.

    Distances are scanned over odd ``d_z`` up to ``max_dz``. Ties in qubit
    count go to the smaller ``d_z``. An unreachable target gives a point
    without candidate.
    """
    if not 0 < target < 1:
        raise ValueError(f"target must be in (0, 1), got {target}")
    registry = model_registry() if registry is None else registry
    p_z, p_x = noise_rates(p_z, eta)
    shapes = candidates(family, registry, outer, ancillae, d_x)
    if not shapes:
        raise InfeasibleError(f"no fit model available for family {family!r}")
    best = None
    for shape in shapes:
        for d_z in range(MIN_DZ, max_dz + 1, 2):
            rate = shape.rate(registry, p_z, p_x, d_z)
            if rate <= target:
                qubits = shape.qubits_per_logical(d_z)
                point = OverheadPoint(
                    family, shape, d_z, qubits, rate, target, p_z, eta
                )
                if best is None or (point.qubits_per_logical, d_z) < (
                    best.qubits_per_logical,
                    best.d_z,
                ):
                    best = point
                break
    if best is None:
        logger.warning(
            "Target %.5e is unreachable for %s at p_z=%.5e, eta=%.5e (d_z <= %d)",
            target,
            family,
            p_z,
            eta,
            max_dz,
        )
        return OverheadPoint(family, None, None, math.inf, math.inf, target, p_z, eta)
    logger.debug(
        "%s: %s d_z=%d, %.5e qubits per logical",
        family,
        best.candidate.label,
        best.d_z,
        best.qubits_per_logical,
    )
    return best


def eta_sweep(p_z, target, etas=FIG1_ETAS, families=FAMILIES, registry=None):
    """Overhead of every family across noise biases, as a flat list of points."""
    registry = model_registry() if registry is None else registry
    return [
        overhead_search(family, p_z, eta, target, registry)
        for eta in etas
        for family in families
    ]


def target_sweep(p_z, eta, targets, families=FAMILIES, registry=None):
    registry = model_registry() if registry is None else registry
    return [
        overhead_search(family, p_z, eta, target, registry)
        for target in targets
        for family in families
    ]


def cheapest(points):
    reachable = [p for p in points if p.reachable]
    return min(reachable, key=lambda p: p.qubits_per_logical) if reachable else None


def crossover_eta(points, family="concat"):
    """Smallest bias at which ``family`` is strictly cheapest, or None."""
    by_eta = {}
    for point in points:
        by_eta.setdefault(point.eta, []).append(point)
    for eta in sorted(by_eta):
        group = by_eta[eta]
        mine = [p for p in group if p.family == family and p.reachable]
        others = [p for p in group if p.family != family and p.reachable]
        if mine and all(
            mine[0].qubits_per_logical < p.qubits_per_logical for p in others
        ):
            return eta
    return None


def write_sweep_rows(points, stream):
    writer = csv.DictWriter(stream, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for point in points:
        writer.writerow(point.row())


def write_sweep_csv(points, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        write_sweep_rows(points, f)
    return path
