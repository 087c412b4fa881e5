"""Closed-form logical error rate models and their log-space least-squares fits.

Families and their forms (``h = (d_z + 1) / 2``):

========== ==========================================
concat_x   ``d_z**c * (a * p)**b``
concat_z   ``n_b/16 * 9/k * a * (b * p)**(c * h)``
rep_z      ``a * (b * p)**(c * h)``
rep_x      ``a * p * d_z``
surface_z  ``a * (b * p)**(c * h)``
surface_x  ``d_z**a * (b * p)**c``
========== ==========================================
"""
from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from elevatorcodes.errors import CodeFormatError, FitError

logger = logging.getLogger(__name__)

FAMILIES = ("concat_x", "concat_z", "rep_z", "rep_x", "surface_z", "surface_x")

# rotated-surface X-memory rows switch at this phase-flip rate
ROTATED_HIGH_REGIME = 1e-2


@dataclasses.dataclass(frozen=True)
class FitModel:
    family: str
    a: float
    b: float = 1.0
    c: float = 1.0
    outer: Optional[str] = None
    ancillae: int = 1
    n_b: Optional[int] = None
    k: Optional[int] = None
    d_x: Optional[int] = None
    regime: Optional[str] = None
    residual: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")

    @property
    def key(self):
        return (self.family, self.outer, self.ancillae, self.d_x, self.regime)

    def to_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data):
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown fit model fields {sorted(unknown)}")
        return cls(**data)


def _table(family, rows, **common):
    return {
        (family, outer, ancillae, d_x, regime): FitModel(
            family,
            a,
            b,
            c,
            outer=outer,
            ancillae=ancillae,
            d_x=d_x,
            regime=regime,
            **extra,
            **common,
        )
        for (outer, ancillae, d_x, regime), (a, b, c), extra in rows
    }


PUBLISHED_MODELS = {}
PUBLISHED_MODELS.update(
    _table(
        "concat_x",
        [
            (("15_9_3", 1, None, None), (37.18, 1.94, 2.33), {"n_b": 16, "k": 9}),
            (("15_6_5", 1, None, None), (115.14, 2.76, 3.73), {"n_b": 16, "k": 6}),
            (("15_6_5", 2, None, None), (88.47, 2.86, 3.89), {"n_b": 17, "k": 6}),
            (("16_3_8", 1, None, None), (61.99, 3.57, 5.74), {"n_b": 17, "k": 3}),
        ],
    )
)
PUBLISHED_MODELS.update(
    _table("concat_z", [((None, 1, None, None), (0.12, 34.4, 0.94), {})])
)
PUBLISHED_MODELS.update(
    _table("rep_z", [((None, 1, None, None), (0.13, 25.02, 0.99), {})])
)
PUBLISHED_MODELS.update(
    _table("rep_x", [((None, 1, None, None), (3.88, 1.0, 1.0), {})])
)
PUBLISHED_MODELS.update(
    _table(
        "surface_z",
        [
            ((None, 1, 3, "rotated_high"), (0.05, 4.23, 0.08), {}),
            ((None, 1, 5, "rotated_high"), (0.04, 2.18, 0.03), {}),
            ((None, 1, 3, "rotated"), (0.14, 72.66, 0.97), {}),
            ((None, 1, 5, "rotated"), (0.16, 84.69, 0.94), {}),
            ((None, 1, 3, "xzzx"), (0.36, 30.60, 1.00), {}),
            ((None, 1, 5, "xzzx"), (0.64, 28.92, 1.01), {}),
        ],
    )
)
PUBLISHED_MODELS.update(
    _table(
        "surface_x",
        [
            ((None, 1, 3, "rotated"), (1.06, 19.30, 2.00), {}),
            ((None, 1, 5, "rotated"), (1.19, 19.30, 2.97), {}),
            ((None, 1, 3, "xzzx"), (1.03, 0.97, 1.99), {}),
            ((None, 1, 5, "xzzx"), (1.06, 12.38, 2.93), {}),
        ],
    )
)


def surface_regime(kind, p_z):
    """Row tag of the surface X-memory table for ``kind`` at ``p_z``."""
    if kind == "rotated" and p_z >= ROTATED_HIGH_REGIME:
        return "rotated_high"
    return kind


def published_model(family, outer=None, ancillae=1, d_x=None, regime=None):
    key = (family, outer, ancillae, d_x, regime)
    try:
        return PUBLISHED_MODELS[key]
    except KeyError:
        raise KeyError(f"no published fit for {key}") from None


def eval_model(model, p, d_z, n_b=None, k=None):
    """Evaluate ``model`` at physical rate ``p`` (scalar or array) and ``d_z``."""
    p = np.asarray(p, dtype=np.float64)
    h = (d_z + 1) / 2
    a, b, c = model.a, model.b, model.c
    family = model.family
    if family == "concat_x":
        value = d_z**c * (a * p) ** b
    elif family == "concat_z":
        n_b = model.n_b if n_b is None else n_b
        k = model.k if k is None else k
        if n_b is None or k is None:
            raise FitError("concat_z needs the block count n_b and the logical count k")
        value = (n_b / 16) * (9 / k) * a * (b * p) ** (c * h)
    elif family in ("rep_z", "surface_z"):
        value = a * (b * p) ** (c * h)
    elif family == "rep_x":
        value = a * p * d_z
    else:
        value = d_z**a * (b * p) ** c
    return float(value) if value.ndim == 0 else value


def _require_variation(values, what, family):
    if np.ptp(values) == 0:
        raise FitError(f"{family} fit is degenerate: data has no variation in {what}")


def fit_power_law(points, family, n_b=None, k=None, **labels):
    """Fit ``family`` to ``(p, d_z, p_round)`` points by log-space least squares.

    ``labels`` (outer, ancillae, d_x, regime) are copied onto the result.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    data = np.asarray(points, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 3 or data.shape[0] == 0:
        raise FitError(f"{family} fit needs (p, d_z, p_round) points")
    p, d, y = data.T
    if np.any(p <= 0) or np.any(y <= 0):
        raise FitError(
            f"{family} fit needs positive rates; drop points without failures"
        )
    log_p, log_d, log_y = np.log(p), np.log(d), np.log(y)
    h = (d + 1) / 2

    if family == "rep_x":
        target = log_y - log_p - log_d
        a = float(np.exp(target.mean()))
        residual = float(np.sqrt(np.mean((target - target.mean()) ** 2)))
        return FitModel(family, a, residual=residual, **labels)

    if family == "concat_z":
        if n_b is None or k is None:
            raise FitError(
                "concat_z fit needs the block count n_b and the logical count k"
            )
        log_y = log_y - np.log((n_b / 16) * (9 / k))

    if family == "concat_x":
        design = np.column_stack([np.ones_like(p), log_d, log_p])
        needs = [(log_d, "distance d_z"), (log_p, "physical error rate")]
    elif family == "surface_x":
        design = np.column_stack([log_d, np.ones_like(p), log_p])
        needs = [(log_d, "distance d_z"), (log_p, "physical error rate")]
    else:
        design = np.column_stack([np.ones_like(p), h, h * log_p])
        needs = [(h, "distance d_z"), (log_p, "physical error rate")]
    if data.shape[0] < 3:
        raise FitError(f"{family} fit needs at least 3 points, got {data.shape[0]}")
    for values, what in needs:
        _require_variation(values, what, family)
    if np.linalg.matrix_rank(design) < 3:
        raise FitError(f"{family} fit is degenerate: distance and rate vary together")

    coef, _, _, _ = np.linalg.lstsq(design, log_y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - log_y) ** 2)))
    if family == "concat_x":
        intercept, c, b = coef
        a = float(np.exp(intercept / b))
    elif family == "surface_x":
        a, intercept, c = coef
        b = float(np.exp(intercept / c))
    else:
        log_a, c_log_b, c = coef
        a, b = float(np.exp(log_a)), float(np.exp(c_log_b / c))
    extra = {"n_b": n_b, "k": k} if family == "concat_z" else {}
    model = FitModel(
        family, float(a), float(b), float(c), residual=residual, **extra, **labels
    )
    logger.info(
        "Fitted %s: a=%.5e b=%.5e c=%.5e (rms log residual %.3e)",
        family,
        model.a,
        model.b,
        model.c,
        residual,
    )
    return model


def save_models(models, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"models": [m.to_dict() for m in models]}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def load_models(path):
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [FitModel.from_dict(entry) for entry in payload["models"]]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise CodeFormatError("Reading fit models failed", path) from e


def model_registry(overrides=()):
    """The published models, with fitted ``overrides`` replacing matching keys."""
    registry = dict(PUBLISHED_MODELS)
    for model in overrides:
        if model.family == "concat_z":
            # generalised to other outer codes through the n_b and k prefactors
            registry[("concat_z", None, 1, None, None)] = model
        else:
            registry[model.key] = model
    return registry
