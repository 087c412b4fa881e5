"""Detector error models: independent mechanisms flipping detectors and observables."""
from __future__ import annotations

import dataclasses
import functools
import logging
import re
from pathlib import Path
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from elevatorcodes.errors import CodeFormatError
from elevatorcodes.gf2 import BinaryMatrix

logger = logging.getLogger(__name__)

_ERROR_LINE = re.compile(r"^error\(([^)]+)\)((?:\s+[DL]\d+)*)\s*$")


def merge_probabilities(p1, p2):
    """Probability that exactly one of two independent events happens."""
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclasses.dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: Tuple[int, ...]
    observables: Tuple[int, ...] = ()

    @property
    def is_hyperedge(self):
        return len(self.detectors) > 2


@dataclasses.dataclass(frozen=True, eq=False)
class DetectorErrorModel:
    detector_count: int
    observable_count: int
    mechanisms: Tuple[ErrorMechanism, ...]
    name: str = ""

    @property
    def mechanism_count(self):
        return len(self.mechanisms)

    def _incidence(self, attr, rows):
        indptr = [0]
        indices = []
        for mech in self.mechanisms:
            indices.extend(getattr(mech, attr))
            indptr.append(len(indices))
        data = np.ones(len(indices), dtype=np.uint8)
        csc = sp.csc_matrix(
            (data, indices, indptr), shape=(rows, len(self.mechanisms))
        )
        return BinaryMatrix(csc.tocsr())

    @functools.cached_property
    def check_matrix(self):
        """Detectors x mechanisms."""
        return self._incidence("detectors", self.detector_count)

    @functools.cached_property
    def observable_matrix(self):
        """Observables x mechanisms."""
        return self._incidence("observables", self.observable_count)

    @functools.cached_property
    def priors(self):
        return np.array([m.probability for m in self.mechanisms], dtype=np.float64)

    @property
    def hyperedges(self):
        return [m for m in self.mechanisms if m.is_hyperedge]

    def syndrome_of(self, errors):
        return self.check_matrix @ np.asarray(errors, dtype=np.uint8)

    def logical_of(self, errors):
        return self.observable_matrix @ np.asarray(errors, dtype=np.uint8)

    def to_text(self):
        lines = [
            f"# {self.name or 'detector error model'}",
            f"DETECTORS {self.detector_count}",
            f"OBSERVABLES {self.observable_count}",
        ]
        for mech in self.mechanisms:
            targets = [f"D{d}" for d in mech.detectors]
            targets += [f"L{o}" for o in mech.observables]
            lines.append(f"error({mech.probability:.5e}) " + " ".join(targets))
        return "\n".join(line.rstrip() for line in lines) + "\n"

    @classmethod
    def from_text(cls, text, source=None):
        counts = {"DETECTORS": None, "OBSERVABLES": 0}
        name = ""
        mechanisms = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1:
                    name = line[1:].strip()
                continue
            keyword = line.split()[0]
            if keyword in counts:
                try:
                    counts[keyword] = int(line.split()[1])
                except (IndexError, ValueError):
                    raise CodeFormatError(
                        f"line {lineno}: {keyword} needs an integer", source
                    ) from None
                continue
            match = _ERROR_LINE.match(line)
            if match is None:
                raise CodeFormatError(f"line {lineno}: cannot parse {line!r}", source)
            try:
                p = float(match.group(1))
            except ValueError:
                raise CodeFormatError(
                    f"line {lineno}: bad probability {match.group(1)!r}", source
                ) from None
            targets = match.group(2).split()
            dets = tuple(int(t[1:]) for t in targets if t[0] == "D")
            obs = tuple(int(t[1:]) for t in targets if t[0] == "L")
            mechanisms.append(ErrorMechanism(p, dets, obs))
        if counts["DETECTORS"] is None:
            counts["DETECTORS"] = 1 + max(
                (d for m in mechanisms for d in m.detectors), default=-1
            )
        for m in mechanisms:
            if any(d >= counts["DETECTORS"] for d in m.detectors) or any(
                o >= counts["OBSERVABLES"] for o in m.observables
            ):
                raise CodeFormatError("mechanism target out of range", source)
        return cls(counts["DETECTORS"], counts["OBSERVABLES"], tuple(mechanisms), name)

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
            raise CodeFormatError("Reading detector error model failed", path) from e
        return cls.from_text(text, source=path)
