"""Rule-based early-warning score over the latest vital-sign snapshot."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .cohort import PatientStay, VitalKind

# (lower, upper, points) bands, half-open [lower, upper)
Band = Tuple[float, float, int]

SCORED_KINDS = (VitalKind.SYSTOLIC_BP, VitalKind.HEART_RATE,
                VitalKind.RESPIRATORY_RATE, VitalKind.TEMPERATURE)

_DEFAULT_TABLE: Dict[VitalKind, Tuple[Band, ...]] = {
    VitalKind.SYSTOLIC_BP: (
        (-math.inf, 71.0, 3),
        (71.0, 81.0, 2),
        (81.0, 101.0, 1),
        (101.0, 200.0, 0),
        (200.0, math.inf, 2),
    ),
    VitalKind.HEART_RATE: (
        (-math.inf, 41.0, 2),
        (41.0, 51.0, 1),
        (51.0, 101.0, 0),
        (101.0, 111.0, 1),
        (111.0, 130.0, 2),
        (130.0, math.inf, 3),
    ),
    VitalKind.RESPIRATORY_RATE: (
        (-math.inf, 9.0, 2),
        (9.0, 15.0, 0),
        (15.0, 21.0, 1),
        (21.0, 30.0, 2),
        (30.0, math.inf, 3),
    ),
    VitalKind.TEMPERATURE: (
        (-math.inf, 35.0, 2),
        (35.0, 38.5, 0),
        (38.5, math.inf, 2),
    ),
}


@dataclass(frozen=True)
class MewsBands:
    """Scoring bands per vital kind plus the alarm threshold.

    Bands for each kind must be sorted, contiguous, and cover the whole real
    line, so every finite value lands in exactly one band.
    """

    bands: Dict[VitalKind, Tuple[Band, ...]] = field(
        default_factory=lambda: dict(_DEFAULT_TABLE))
    alarm_threshold: int = 4

    def __post_init__(self):
        if self.alarm_threshold < 0:
            raise ValueError("alarm_threshold must be >= 0")
        if not self.bands:
            raise ValueError("at least one scored vital kind is required")
        for kind, rows in self.bands.items():
            if not isinstance(kind, VitalKind):
                raise ValueError(f"unknown vital kind {kind!r}")
            if not rows:
                raise ValueError(f"{kind.value}: empty band table")
            if rows[0][0] != -math.inf or rows[-1][1] != math.inf:
                raise ValueError(f"{kind.value}: bands must cover the whole line")
            for i, (lo, hi, points) in enumerate(rows):
                if not lo < hi:
                    raise ValueError(f"{kind.value}: band {i} has lower >= upper")
                if points < 0:
                    raise ValueError(f"{kind.value}: band {i} has negative points")
                if i > 0 and rows[i - 1][1] != lo:
                    raise ValueError(f"{kind.value}: bands must be contiguous")

    def points_for(self, kind: VitalKind, value: float) -> int:
        for lo, hi, points in self.bands[kind]:
            if lo <= value < hi:
                return points
        raise ValueError(f"{kind.value}: no band covers {value}")

    def to_json(self) -> str:
        def bound(x: float):
            return None if math.isinf(x) else x

        return json.dumps({
            "alarm_threshold": self.alarm_threshold,
            "bands": {
                kind.value: [[bound(lo), bound(hi), points]
                             for lo, hi, points in rows]
                for kind, rows in self.bands.items()
            },
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MewsBands":
        raw = json.loads(text)
        bands: Dict[VitalKind, Tuple[Band, ...]] = {}
        for code, rows in raw["bands"].items():
            kind = VitalKind(code)
            bands[kind] = tuple(
                (-math.inf if lo is None else float(lo),
                 math.inf if hi is None else float(hi),
                 int(points))
                for lo, hi, points in rows)
        return cls(bands=bands, alarm_threshold=int(raw["alarm_threshold"]))


DEFAULT_BANDS = MewsBands()


def latest_snapshot(stay: PatientStay) -> Dict[VitalKind, float]:
    """Most recent value per vital kind; kinds with no observations are absent."""
    snap: Dict[VitalKind, float] = {}
    for kind, obs in stay.vitals.items():
        if obs:
            snap[kind] = obs[-1].value
    return snap


def mews_score(snapshot: Dict[VitalKind, float],
               bands: Optional[MewsBands] = None) -> int:
    """Sum of band points over the scored kinds present in the snapshot.

    Missing kinds contribute nothing; if every scored kind is missing there
    is no basis for a score and a ValueError is raised.
    """
    bands = bands if bands is not None else DEFAULT_BANDS
    scored = [k for k in bands.bands if k in snapshot]
    if not scored:
        raise ValueError("no scored vital kinds present in snapshot")
    return sum(bands.points_for(k, snapshot[k]) for k in scored)


def mews_predict(stays: Sequence[PatientStay],
                 bands: Optional[MewsBands] = None) -> np.ndarray:
    """Alarm labels per stay: 1 when the score reaches the alarm threshold.

    A stay with no scorable vitals at all cannot alarm and gets label 0.
    """
    bands = bands if bands is not None else DEFAULT_BANDS
    out = np.zeros(len(stays), dtype=np.int64)
    for i, stay in enumerate(stays):
        snap = latest_snapshot(stay)
        if not any(k in snap for k in bands.bands):
            continue
        out[i] = 1 if mews_score(snap, bands) >= bands.alarm_threshold else 0
    return out
