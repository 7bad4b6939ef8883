"""Two-sample Kolmogorov-Smirnov drift statistics and daily drift series.

The KS statistic is exact: the supremum of |F_a - F_b| is evaluated at every
sample point of both empirical CDFs. On 0/1 indicator columns this reduces to
the absolute rate difference, so one-hot features are monitored with the same
gate without special-casing. A day whose statistic exceeds the threshold is
flagged as a retraining trigger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptySample, EmptyWindow, FeatureMismatch, InputError


@dataclass(frozen=True)
class SampleWindow:
    feature: str
    day: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size == 0:
            raise EmptyWindow(f"window for {self.feature!r} on day {self.day} is empty")
        if not np.isfinite(v).all():
            raise InputError(f"window for {self.feature!r} contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DriftReport:
    day: int
    feature: str
    ks: float
    triggered: bool

    def to_jsonable(self) -> dict:
        return {"day": self.day, "feature": self.feature, "ks": self.ks,
                "triggered": self.triggered}


@dataclass
class DriftSeries:
    reports: list[DriftReport]
    threshold: float
    features: tuple[str, ...]
    n_days: int

    @property
    def first_trigger(self) -> DriftReport | None:
        for r in self.reports:
            if r.triggered:
                return r
        return None

    def max_ks(self) -> float:
        return max((r.ks for r in self.reports), default=0.0)

    def day_max(self) -> list[DriftReport]:
        """Per day, the report with the highest KS (first feature on ties)."""
        out: dict[int, DriftReport] = {}
        for r in self.reports:
            cur = out.get(r.day)
            if cur is None or r.ks > cur.ks:
                out[r.day] = r
        return [out[d] for d in sorted(out)]

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps(r.to_jsonable(), sort_keys=True) for r in self.reports
        ) + ("\n" if self.reports else "")

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def plot_data(self) -> list[dict]:
        """Day-level max-KS points with the gate value, for drift charts."""
        return [
            {"day": r.day, "max_ks": r.ks, "feature": r.feature,
             "threshold": self.threshold}
            for r in self.day_max()
        ]


def ks_statistic(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| over the merged support of both samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    sa = np.sort(a)
    sb = np.sort(b)
    support = np.concatenate([sa, sb])
    fa = np.searchsorted(sa, support, side="right") / sa.size
    fb = np.searchsorted(sb, support, side="right") / sb.size
    return float(np.abs(fa - fb).max())


def daily_drift(
    reference: Mapping[str, np.ndarray],
    days: Sequence[Mapping[str, np.ndarray]],
    threshold: float,
) -> DriftSeries:
    """KS of each day's windows against the fixed reference, per feature.

    Every daily mapping must cover exactly the reference features; the series
    is assembled day-major in reference key order and is fully deterministic.
    """
    features = tuple(reference.keys())
    if not features:
        raise InputError("reference must contain at least one feature")
    ref = {}
    for name in features:
        values = np.asarray(reference[name], dtype=np.float64)
        if values.size == 0:
            raise EmptySample(f"reference window for {name!r} is empty")
        ref[name] = np.sort(values)
    reports: list[DriftReport] = []
    for day_idx, windows in enumerate(days):
        if set(windows.keys()) != set(features):
            raise FeatureMismatch(
                f"day {day_idx} features {sorted(windows)} do not match "
                f"reference {sorted(features)}"
            )
        for name in features:
            values = np.asarray(windows[name], dtype=np.float64)
            if values.size == 0:
                raise EmptyWindow(f"day {day_idx} window for {name!r} is empty")
            ks = ks_statistic(ref[name], values)
            reports.append(
                DriftReport(day=day_idx, feature=name, ks=ks,
                            triggered=bool(ks > threshold))
            )
    return DriftSeries(reports=reports, threshold=threshold, features=features,
                       n_days=len(days))
