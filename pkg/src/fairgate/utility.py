"""Decision-curve analysis: net benefit over a risk-threshold grid, with
Treat-All / Treat-None reference policies and an operating-band comparison
between baseline and mitigated models.

NB(t) = TP/N - (FP/N) * t/(1-t), classifying positive when probability >= t.
Treat-None is identically zero; Treat-All crosses zero at t = prevalence.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import GridMismatch, InputError, ThresholdOutOfRange

DEFAULT_GRID = tuple(round(0.01 * k, 2) for k in range(1, 51))
DEFAULT_BAND = (0.10, 0.20)


@dataclass(frozen=True)
class DecisionCurvePoint:
    threshold: float
    tp: int
    fp: int
    n: int
    nb: float

    def to_jsonable(self) -> dict:
        return {"threshold": self.threshold, "tp": self.tp, "fp": self.fp,
                "n": self.n, "nb": self.nb}


@dataclass(frozen=True)
class DecisionCurve:
    points: tuple[DecisionCurvePoint, ...]
    nb_treat_all: tuple[float, ...]
    prevalence: float
    band: tuple[float, float]
    model_id: str = ""

    @property
    def grid(self) -> tuple[float, ...]:
        return tuple(p.threshold for p in self.points)

    @property
    def nb_model(self) -> tuple[float, ...]:
        return tuple(p.nb for p in self.points)

    def nb_at(self, t: float) -> float:
        for p in self.points:
            if abs(p.threshold - t) < 1e-12:
                return p.nb
        raise InputError(f"threshold {t} is not on the curve grid")

    def band_points(self) -> list[DecisionCurvePoint]:
        lo, hi = self.band
        return [p for p in self.points if lo - 1e-12 <= p.threshold <= hi + 1e-12]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "nb_model", "nb_treat_all", "nb_treat_none"])
        for p, nb_all in zip(self.points, self.nb_treat_all):
            writer.writerow([f"{p.threshold:.2f}", repr(p.nb), repr(nb_all), "0.0"])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def net_benefit(probas, y, t: float) -> float:
    if not 0.0 < t < 1.0:
        raise ThresholdOutOfRange(f"threshold must be in (0, 1), got {t}")
    probas = np.asarray(probas, dtype=np.float64)
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0/1")
    n = y.size
    if n == 0:
        raise InputError("cannot compute net benefit on an empty sample")
    positive = probas >= t
    tp = int((positive & (y == 1)).sum())
    fp = int((positive & (y == 0)).sum())
    return tp / n - (fp / n) * (t / (1.0 - t))


def decision_curve(
    probas,
    y,
    grid: Sequence[float] | None = None,
    band: tuple[float, float] = DEFAULT_BAND,
    model_id: str = "",
) -> DecisionCurve:
    probas = np.asarray(probas, dtype=np.float64)
    y = np.asarray(y)
    grid = tuple(grid) if grid is not None else DEFAULT_GRID
    if any(not 0.0 < t < 1.0 for t in grid):
        raise ThresholdOutOfRange("grid thresholds must lie in (0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("grid must be strictly increasing")
    if not grid[0] <= band[0] < band[1] <= grid[-1]:
        raise InputError("operating band must lie within the grid range")
    n = y.size
    prevalence = float((y == 1).mean())
    points = []
    nb_all = []
    for t in grid:
        positive = probas >= t
        tp = int((positive & (y == 1)).sum())
        fp = int((positive & (y == 0)).sum())
        nb = tp / n - (fp / n) * (t / (1.0 - t))
        points.append(DecisionCurvePoint(threshold=float(t), tp=tp, fp=fp, n=n, nb=nb))
        nb_all.append(prevalence - (1.0 - prevalence) * (t / (1.0 - t)))
    return DecisionCurve(
        points=tuple(points),
        nb_treat_all=tuple(nb_all),
        prevalence=prevalence,
        band=band,
        model_id=model_id,
    )


@dataclass(frozen=True)
class BandReport:
    band: tuple[float, float]
    delta_nb_max: float
    min_nb_baseline: float
    min_nb_mitigated: float
    both_positive_in_band: bool
    utility_preserved: bool
    bound: float

    def to_jsonable(self) -> dict:
        return {
            "band": list(self.band),
            "delta_nb_max": self.delta_nb_max,
            "min_nb_baseline": self.min_nb_baseline,
            "min_nb_mitigated": self.min_nb_mitigated,
            "both_positive_in_band": self.both_positive_in_band,
            "utility_preserved": self.utility_preserved,
            "bound": self.bound,
        }


def band_report(
    baseline: DecisionCurve,
    mitigated: DecisionCurve,
    band: tuple[float, float] | None = None,
    bound: float = 0.001,
) -> BandReport:
    """Compare two curves over the operating band: max |NB gap|, per-model
    band minima, and whether mitigation preserved utility within ``bound``."""
    if baseline.grid != mitigated.grid:
        raise GridMismatch("curves must share the same threshold grid")
    band = band or baseline.band
    lo, hi = band
    nb_b = [p.nb for p in baseline.points if lo - 1e-12 <= p.threshold <= hi + 1e-12]
    nb_m = [p.nb for p in mitigated.points if lo - 1e-12 <= p.threshold <= hi + 1e-12]
    if not nb_b:
        raise InputError("operating band contains no grid points")
    delta = max(abs(a - b) for a, b in zip(nb_b, nb_m))
    return BandReport(
        band=band,
        delta_nb_max=delta,
        min_nb_baseline=min(nb_b),
        min_nb_mitigated=min(nb_m),
        both_positive_in_band=bool(min(nb_b) > 0 and min(nb_m) > 0),
        utility_preserved=bool(delta <= bound),
        bound=bound,
    )
