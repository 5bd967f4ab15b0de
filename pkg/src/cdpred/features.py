"""Stay-to-feature-matrix pipeline: slot extraction, fill, schema fit/apply.

Each vital kind contributes its last five collections (oldest first) plus five
summary statistics; admission attributes are one-hot encoded against a
vocabulary fitted on training stays only, so the encoding is fold-safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .cohort import (
    COLLECTIONS_PER_KIND,
    PatientStay,
    VITAL_KINDS,
    VitalKind,
)

STAT_NAMES = ("min", "max", "mean", "median", "std")
SCALAR_COLUMNS = ("age", "days_last_hosp", "days_entrance")
CATEGORICAL_ATTRS = ("gender", "disease", "specialty", "admission", "payer", "unit")


def last_five(stay: PatientStay, kind: VitalKind) -> np.ndarray:
    """Five slots for the most recent collections of ``kind``, oldest first.

    Missing slots are NaN; with fewer than five observations the leading
    slots are missing. Call on horizon-truncated stays.
    """
    slots = np.full(COLLECTIONS_PER_KIND, np.nan)
    series = stay.vitals[kind]
    tail = series[-COLLECTIONS_PER_KIND:]
    for i, obs in enumerate(tail):
        slots[COLLECTIONS_PER_KIND - len(tail) + i] = obs.value
    return slots


def forward_fill(slots: np.ndarray) -> np.ndarray:
    """Carry the last present value into later missing slots.

    Leading missing slots stay missing; an all-missing input is returned
    unchanged.
    """
    out = np.asarray(slots, dtype=float).copy()
    for i in range(1, out.shape[0]):
        if np.isnan(out[i]):
            out[i] = out[i - 1]
    return out


def slot_stats(slots: np.ndarray) -> Tuple[float, float, float, float, float]:
    """(min, max, mean, median, sample std) of five fully present slots."""
    arr = np.asarray(slots, dtype=float)
    if np.isnan(arr).any():
        raise ValueError("slot_stats requires all slots present")
    return (float(arr.min()), float(arr.max()), float(arr.mean()),
            float(np.median(arr)), float(arr.std(ddof=1)))


# ---------------------------------------------------------------------------
# Slot table: one vectorized intermediate shared by fit and apply
# ---------------------------------------------------------------------------

@dataclass
class _SlotTable:
    slots: np.ndarray          # (n, kinds, 5) raw slot values, NaN where missing
    age: np.ndarray            # (n,)
    days_last: np.ndarray      # (n,)
    days_entrance: np.ndarray  # (n,)
    cats: Dict[str, np.ndarray]  # attr -> (n,) object array of level strings
    row_ids: Tuple[str, ...]
    labels: np.ndarray         # (n,)


def _build_slot_table(stays: Sequence[PatientStay]) -> _SlotTable:
    n = len(stays)
    slots = np.full((n, len(VITAL_KINDS), COLLECTIONS_PER_KIND), np.nan)
    for i, stay in enumerate(stays):
        for j, kind in enumerate(VITAL_KINDS):
            slots[i, j, :] = last_five(stay, kind)
    return _SlotTable(
        slots=slots,
        age=np.array([float(s.age) for s in stays]),
        days_last=np.array([s.days_last_hosp for s in stays]),
        days_entrance=np.array([s.days_from_entrance for s in stays]),
        cats={attr: np.array([getattr(s, attr) for s in stays], dtype=object)
              for attr in CATEGORICAL_ATTRS},
        row_ids=tuple(s.stay_id for s in stays),
        labels=np.array([s.outcome for s in stays], dtype=np.int64),
    )


def _ffill_table(slots: np.ndarray) -> np.ndarray:
    out = slots.copy()
    for k in range(1, out.shape[2]):
        gap = np.isnan(out[:, :, k])
        out[:, :, k] = np.where(gap, out[:, :, k - 1], out[:, :, k])
    return out


@dataclass
class EncodingSchema:
    """Fitted feature recipe: imputation means plus categorical vocabularies.

    ``slot_means`` holds the per-(kind, slot) training mean used to fill slots
    still missing after forward fill. Applying a schema yields the same column
    set in the same order for any cohort.
    """

    slot_means: np.ndarray                   # (kinds, 5)
    vocab: Mapping[str, Tuple[str, ...]]     # attr -> sorted training levels

    @property
    def columns(self) -> Tuple[str, ...]:
        names: List[str] = []
        for kind in VITAL_KINDS:
            code = kind.value.lower()
            names.extend(f"{code}_t{i + 1}" for i in range(COLLECTIONS_PER_KIND))
            names.extend(f"{code}_{st}" for st in STAT_NAMES)
        names.extend(SCALAR_COLUMNS)
        for attr in CATEGORICAL_ATTRS:
            names.extend(f"{attr}={level}" for level in self.vocab[attr])
        return tuple(names)

    @property
    def n_columns(self) -> int:
        return (len(VITAL_KINDS) * (COLLECTIONS_PER_KIND + len(STAT_NAMES))
                + len(SCALAR_COLUMNS)
                + sum(len(v) for v in self.vocab.values()))

    def to_json(self) -> str:
        return json.dumps({
            "slot_means": self.slot_means.tolist(),
            "vocab": {attr: list(levels) for attr, levels in self.vocab.items()},
            "n_columns": self.n_columns,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EncodingSchema":
        raw = json.loads(text)
        return cls(
            slot_means=np.asarray(raw["slot_means"], dtype=float),
            vocab={attr: tuple(levels) for attr, levels in raw["vocab"].items()},
        )


@dataclass
class FeatureMatrix:
    """Dense design matrix with column names, row ids, and labels."""

    values: np.ndarray
    columns: Tuple[str, ...]
    row_ids: Tuple[str, ...]
    labels: np.ndarray


def _fit_schema_from_table(table: _SlotTable) -> EncodingSchema:
    filled = _ffill_table(table.slots)
    present = ~np.isnan(filled)
    counts = present.sum(axis=0)
    sums = np.where(present, filled, 0.0).sum(axis=0)
    slot_means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    vocab = {attr: tuple(sorted(set(table.cats[attr].tolist())))
             for attr in CATEGORICAL_ATTRS}
    return EncodingSchema(slot_means=slot_means, vocab=vocab)


def _apply_schema_to_table(schema: EncodingSchema, table: _SlotTable) -> FeatureMatrix:
    n = table.slots.shape[0]
    filled = _ffill_table(table.slots)
    gap = np.isnan(filled)
    filled = np.where(gap, schema.slot_means[None, :, :], filled)

    stats = np.empty((n, len(VITAL_KINDS), len(STAT_NAMES)))
    stats[:, :, 0] = filled.min(axis=2)
    stats[:, :, 1] = filled.max(axis=2)
    stats[:, :, 2] = filled.mean(axis=2)
    stats[:, :, 3] = np.median(filled, axis=2)
    stats[:, :, 4] = filled.std(axis=2, ddof=1)

    blocks = [np.concatenate([filled, stats], axis=2).reshape(n, -1)]
    blocks.append(np.column_stack([table.age, table.days_last, table.days_entrance]))
    for attr in CATEGORICAL_ATTRS:
        levels = schema.vocab[attr]
        onehot = np.zeros((n, len(levels)))
        values = table.cats[attr]
        for j, level in enumerate(levels):
            onehot[:, j] = values == level
        blocks.append(onehot)

    values = np.concatenate(blocks, axis=1)
    return FeatureMatrix(
        values=values,
        columns=schema.columns,
        row_ids=table.row_ids,
        labels=table.labels,
    )


def fit_schema(stays: Sequence[PatientStay]) -> EncodingSchema:
    """Fit imputation means and categorical vocabularies on training stays.

    Fit on horizon-truncated training folds only; held-out stays must not
    influence the schema.
    """
    if not stays:
        raise ValueError("cannot fit a schema on an empty cohort")
    return _fit_schema_from_table(_build_slot_table(stays))


def apply_schema(schema: EncodingSchema, stays: Sequence[PatientStay]) -> FeatureMatrix:
    """Encode stays with a fitted schema; all values come out finite.

    Unseen categorical levels encode as all-zero indicator blocks.
    """
    matrix = _apply_schema_to_table(schema, _build_slot_table(stays))
    if not np.isfinite(matrix.values).all():
        raise ValueError("feature matrix contains non-finite values")
    return matrix
