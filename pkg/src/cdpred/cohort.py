"""Cohort domain model, CSV round-trip, and the calibrated synthetic generator.

A cohort is a list of patient stays. Each stay carries admission attributes,
time-stamped vital-sign collections, and a binary outcome with the hour it was
recorded. The synthetic generator draws cohorts whose per-class vital statistics
match a configurable calibration table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class VitalKind(Enum):
    """The seven collected vital-sign series, keyed by their CSV codes."""

    HEART_RATE = "HR"
    RESPIRATORY_RATE = "RR"
    DIASTOLIC_BP = "DBP"
    SYSTOLIC_BP = "SBP"
    OXYGEN_SATURATION = "SPO2"
    BLOOD_GLUCOSE = "GLU"
    TEMPERATURE = "TEMP"


VITAL_KINDS: Tuple[VitalKind, ...] = tuple(VitalKind)

# Physiologic value ranges enforced on observations (inclusive bounds).
VITAL_RANGES: Dict[VitalKind, Tuple[float, float]] = {
    VitalKind.HEART_RATE: (0.0, math.inf),
    VitalKind.RESPIRATORY_RATE: (0.0, math.inf),
    VitalKind.DIASTOLIC_BP: (0.0, math.inf),
    VitalKind.SYSTOLIC_BP: (0.0, math.inf),
    VitalKind.OXYGEN_SATURATION: (0.0, 100.0),
    VitalKind.BLOOD_GLUCOSE: (0.0, math.inf),
    VitalKind.TEMPERATURE: (25.0, 45.0),
}

GENDER_LEVELS = ("F", "M")
DISEASE_LEVELS = tuple(f"D{i:02d}" for i in range(1, 21))
SPECIALTY_LEVELS = tuple(f"S{i:02d}" for i in range(1, 11))
ADMISSION_LEVELS = ("elective", "emergency", "transfer", "urgent")
PAYER_LEVELS = ("private", "public", "self")
UNIT_LEVELS = ("general", "oncology", "surgical")

CSV_COLUMNS = (
    "id", "age", "gender", "disease", "specialty", "admission", "payer",
    "unit", "days_last_hosp", "outcome", "outcome_time_h", "kind", "time_h",
    "value",
)

# Collection grid: five collections per kind, 4 h apart, the last one 13 h
# before the outcome, so a 12 h horizon truncation keeps every collection.
COLLECTIONS_PER_KIND = 5
COLLECTION_SPACING_H = 4.0
LAST_COLLECTION_OFFSET_H = 13.0
AR1_COEFF = 0.7
AR1_INNOVATION_FRACTION = 0.3
MIN_STAY_DAYS = 1.25  # keeps the earliest collection at a non-negative hour


class CohortSchemaError(ValueError):
    """Raised when a cohort CSV violates the file schema or domain invariants."""


@dataclass(frozen=True)
class VitalObservation:
    """One collected value of one vital kind at a given hour since admission."""

    kind: VitalKind
    value: float
    time_h: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"{self.kind.value} value must be finite, got {self.value!r}")
        lo, hi = VITAL_RANGES[self.kind]
        if not (lo <= self.value <= hi):
            raise ValueError(
                f"{self.kind.value} value {self.value} outside [{lo}, {hi}]")
        if not (math.isfinite(self.time_h) and self.time_h >= 0.0):
            raise ValueError(f"observation time must be >= 0, got {self.time_h!r}")


@dataclass(frozen=True)
class PatientStay:
    """One hospital stay with admission attributes and vital series.

    ``vitals`` always holds every kind as a key, with a (possibly empty)
    time-sorted tuple of observations. ``days_from_entrance`` is derived from
    ``outcome_time_h`` rather than stored, matching the file schema.
    """

    stay_id: str
    age: int
    gender: str
    disease: str
    specialty: str
    admission: str
    payer: str
    unit: str
    days_last_hosp: float
    outcome: int
    outcome_time_h: float
    vitals: Mapping[VitalKind, Tuple[VitalObservation, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.stay_id:
            raise ValueError("stay_id must be a non-empty string")
        if not (isinstance(self.age, int) and self.age >= 0):
            raise ValueError(f"age must be an integer >= 0, got {self.age!r}")
        for name in ("gender", "disease", "specialty", "admission", "payer", "unit"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if not (math.isfinite(self.days_last_hosp) and self.days_last_hosp >= 0.0):
            raise ValueError(f"days_last_hosp must be >= 0, got {self.days_last_hosp!r}")
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome!r}")
        if not (math.isfinite(self.outcome_time_h) and self.outcome_time_h > 0.0):
            raise ValueError(f"outcome_time_h must be > 0, got {self.outcome_time_h!r}")
        normalized: Dict[VitalKind, Tuple[VitalObservation, ...]] = {}
        for kind in VITAL_KINDS:
            series = tuple(self.vitals.get(kind, ()))
            for obs in series:
                if obs.kind is not kind:
                    raise ValueError(f"observation of kind {obs.kind} filed under {kind}")
                if obs.time_h > self.outcome_time_h:
                    raise ValueError(
                        f"observation at {obs.time_h} h is after outcome at "
                        f"{self.outcome_time_h} h")
            times = [obs.time_h for obs in series]
            if any(b < a for a, b in zip(times, times[1:])):
                raise ValueError(f"{kind.value} observations are not time-sorted")
            normalized[kind] = series
        object.__setattr__(self, "vitals", normalized)

    @property
    def days_from_entrance(self) -> float:
        return self.outcome_time_h / 24.0


@dataclass(frozen=True)
class ClassStats:
    """Per-outcome-class mean and standard deviation of one quantity."""

    survival_mean: float
    survival_std: float
    mortality_mean: float
    mortality_std: float

    def mean(self, outcome: int) -> float:
        return self.mortality_mean if outcome else self.survival_mean

    def std(self, outcome: int) -> float:
        return self.mortality_std if outcome else self.survival_std


@dataclass(frozen=True)
class CalibrationStats:
    """Targets the synthetic generator reproduces.

    Per-class vital means/STDs, per-kind collection missing probabilities,
    per-class age and length-of-stay statistics, and the mortality prior.
    """

    vitals: Mapping[VitalKind, ClassStats]
    missing: Mapping[VitalKind, float]
    age: ClassStats
    days_from_entrance: ClassStats
    mortality_prior: float

    def __post_init__(self):
        for kind in VITAL_KINDS:
            if kind not in self.vitals:
                raise ValueError(f"calibration missing vital stats for {kind.value}")
            if kind not in self.missing:
                raise ValueError(f"calibration missing missing-rate for {kind.value}")
            p = self.missing[kind]
            if not (0.0 <= p < 1.0):
                raise ValueError(f"missing probability for {kind.value} outside [0, 1)")
        if not (0.0 < self.mortality_prior < 1.0):
            raise ValueError("mortality prior must be in (0, 1)")


def default_calibration() -> CalibrationStats:
    """Default calibration targets for the synthetic generator."""
    vitals = {
        VitalKind.HEART_RATE: ClassStats(78.60, 14.38, 95.01, 22.55),
        VitalKind.RESPIRATORY_RATE: ClassStats(18.07, 3.88, 19.19, 4.91),
        VitalKind.DIASTOLIC_BP: ClassStats(72.26, 11.10, 63.76, 14.88),
        VitalKind.SYSTOLIC_BP: ClassStats(120.90, 17.78, 106.64, 23.09),
        VitalKind.OXYGEN_SATURATION: ClassStats(95.99, 2.68, 92.57, 5.84),
        VitalKind.BLOOD_GLUCOSE: ClassStats(137.19, 59.40, 145.94, 78.84),
        VitalKind.TEMPERATURE: ClassStats(36.06, 0.68, 36.20, 0.82),
    }
    missing = {
        VitalKind.HEART_RATE: 0.1134,
        VitalKind.RESPIRATORY_RATE: 0.1516,
        VitalKind.DIASTOLIC_BP: 0.1156,
        VitalKind.SYSTOLIC_BP: 0.1153,
        VitalKind.OXYGEN_SATURATION: 0.1612,
        VitalKind.BLOOD_GLUCOSE: 0.7637,
        VitalKind.TEMPERATURE: 0.1626,
    }
    return CalibrationStats(
        vitals=vitals,
        missing=missing,
        age=ClassStats(55.55, 17.93, 70.55, 15.92),
        days_from_entrance=ClassStats(4.91, 9.04, 13.47, 21.67),
        mortality_prior=0.04,
    )


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _clipped_normal_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    """E[clip(X, lo, hi)] for X ~ Normal(mu, sigma); bounds may be infinite."""
    a = (lo - mu) / sigma if math.isfinite(lo) else -math.inf
    b = (hi - mu) / sigma if math.isfinite(hi) else math.inf
    ca = _norm_cdf(a) if math.isfinite(a) else 0.0
    cb = _norm_cdf(b) if math.isfinite(b) else 1.0
    pa = _norm_pdf(a) if math.isfinite(a) else 0.0
    pb = _norm_pdf(b) if math.isfinite(b) else 0.0
    out = mu * (cb - ca) - sigma * (pb - pa)
    if math.isfinite(lo):
        out += lo * ca
    if math.isfinite(hi):
        out += hi * (1.0 - cb)
    return out


def _solve_clip_location(target: float, sigma: float, lo: float, hi: float) -> float:
    """Location mu with E[clip(Normal(mu, sigma), lo, hi)] == target.

    The clipped mean is strictly increasing in mu, so plain bisection works.
    Without clipping mass this returns target itself.
    """
    lo_mu = target - 12.0 * sigma
    hi_mu = target + 12.0 * sigma
    for _ in range(100):
        mid = 0.5 * (lo_mu + hi_mu)
        if _clipped_normal_mean(mid, sigma, lo, hi) < target:
            lo_mu = mid
        else:
            hi_mu = mid
    return 0.5 * (lo_mu + hi_mu)


def _lognormal_params(mean: float, std: float) -> Tuple[float, float]:
    sigma2 = math.log(1.0 + (std / mean) ** 2)
    return math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2)


def generate_synthetic_cohort(
    n: int,
    seed: int,
    calib: Optional[CalibrationStats] = None,
) -> List[PatientStay]:
    """Draw a deterministic synthetic cohort calibrated to ``calib``.

    Per stay: outcome ~ Bernoulli(prior); age and vitals normal per class;
    length of stay lognormal per class (floored so the collection grid fits);
    each vital kind gets five collections 4 h apart ending 13 h before the
    outcome, AR(1)-correlated around a per-stay baseline, clipped to the value
    ranges with a location correction so observed class means stay on target;
    each collection is then dropped independently with the kind's missing
    probability.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    calib = calib if calib is not None else default_calibration()
    rng = np.random.default_rng(seed)

    # Draw order is fixed; every block is drawn for all stays at once.
    outcome = (rng.random(n) < calib.mortality_prior).astype(np.int64)

    z_age = rng.standard_normal(n)
    age_mean = np.where(outcome == 1, calib.age.mortality_mean, calib.age.survival_mean)
    age_std = np.where(outcome == 1, calib.age.mortality_std, calib.age.survival_std)
    age = np.maximum(18, np.rint(age_mean + age_std * z_age).astype(np.int64))

    z_days = rng.standard_normal(n)
    mu_s, sg_s = _lognormal_params(
        calib.days_from_entrance.survival_mean, calib.days_from_entrance.survival_std)
    mu_m, sg_m = _lognormal_params(
        calib.days_from_entrance.mortality_mean, calib.days_from_entrance.mortality_std)
    days_mu = np.where(outcome == 1, mu_m, mu_s)
    days_sg = np.where(outcome == 1, sg_m, sg_s)
    days = np.maximum(MIN_STAY_DAYS, np.exp(days_mu + days_sg * z_days))
    outcome_time_h = days * 24.0

    u_prior_hosp = rng.random(n)
    z_last = rng.standard_normal(n)
    mu_l, sg_l = _lognormal_params(60.0, 90.0)
    days_last = np.where(u_prior_hosp < 0.4, np.exp(mu_l + sg_l * z_last), 0.0)

    cat_levels = (GENDER_LEVELS, DISEASE_LEVELS, SPECIALTY_LEVELS,
                  ADMISSION_LEVELS, PAYER_LEVELS, UNIT_LEVELS)
    cat_codes = [rng.integers(0, len(levels), n) for levels in cat_levels]

    n_kinds = len(VITAL_KINDS)
    z_base = rng.standard_normal((n, n_kinds))
    z_eta = rng.standard_normal((n, n_kinds, COLLECTIONS_PER_KIND))
    u_drop = rng.random((n, n_kinds, COLLECTIONS_PER_KIND))

    base_mean = np.empty((2, n_kinds))
    base_std = np.empty((2, n_kinds))
    miss_p = np.empty(n_kinds)
    for j, kind in enumerate(VITAL_KINDS):
        st = calib.vitals[kind]
        base_mean[0, j], base_std[0, j] = st.survival_mean, st.survival_std
        base_mean[1, j], base_std[1, j] = st.mortality_mean, st.mortality_std
        miss_p[j] = calib.missing[kind]

    # The AR(1) fluctuation holds a constant share of the class variance at
    # every slot: the first innovation carries the full fluctuation variance
    # and later ones are shrunk so the process stays at its stationary level,
    # leaving each slot's marginal spread equal to the class std before
    # clipping.
    fluct_frac2 = AR1_INNOVATION_FRACTION ** 2
    baseline_shrink = math.sqrt(1.0 - fluct_frac2)
    later_innov_shrink = math.sqrt(1.0 - AR1_COEFF ** 2)

    # Per (class, kind) location offsets that cancel the clip bias.
    loc_offset = np.zeros((2, n_kinds))
    for c in (0, 1):
        for j, kind in enumerate(VITAL_KINDS):
            lo, hi = VITAL_RANGES[kind]
            loc = _solve_clip_location(base_mean[c, j], base_std[c, j], lo, hi)
            loc_offset[c, j] = loc - base_mean[c, j]

    cls = outcome
    baseline = base_mean[cls, :] + baseline_shrink * base_std[cls, :] * z_base
    eta_sd_all = AR1_INNOVATION_FRACTION * base_std[cls, :]
    fluct = np.empty((n, n_kinds, COLLECTIONS_PER_KIND))
    fluct[:, :, 0] = eta_sd_all * z_eta[:, :, 0]
    for k in range(1, COLLECTIONS_PER_KIND):
        fluct[:, :, k] = (AR1_COEFF * fluct[:, :, k - 1]
                          + later_innov_shrink * eta_sd_all * z_eta[:, :, k])

    values = baseline[:, :, None] + fluct + loc_offset[cls, :, None]
    for j, kind in enumerate(VITAL_KINDS):
        lo, hi = VITAL_RANGES[kind]
        values[:, j, :] = np.clip(values[:, j, :], lo, hi)
    kept = u_drop >= miss_p[None, :, None]

    slot_offsets = np.array([
        LAST_COLLECTION_OFFSET_H + COLLECTION_SPACING_H * (COLLECTIONS_PER_KIND - 1 - k)
        for k in range(COLLECTIONS_PER_KIND)
    ])

    id_width = max(6, len(str(max(n - 1, 0))))
    stays: List[PatientStay] = []
    for i in range(n):
        times = outcome_time_h[i] - slot_offsets
        vitals: Dict[VitalKind, Tuple[VitalObservation, ...]] = {}
        for j, kind in enumerate(VITAL_KINDS):
            series = tuple(
                VitalObservation(kind=kind, value=float(values[i, j, k]), time_h=float(times[k]))
                for k in range(COLLECTIONS_PER_KIND) if kept[i, j, k]
            )
            vitals[kind] = series
        stays.append(PatientStay(
            stay_id=f"P{i:0{id_width}d}",
            age=int(age[i]),
            gender=GENDER_LEVELS[cat_codes[0][i]],
            disease=DISEASE_LEVELS[cat_codes[1][i]],
            specialty=SPECIALTY_LEVELS[cat_codes[2][i]],
            admission=ADMISSION_LEVELS[cat_codes[3][i]],
            payer=PAYER_LEVELS[cat_codes[4][i]],
            unit=UNIT_LEVELS[cat_codes[5][i]],
            days_last_hosp=float(days_last[i]),
            outcome=int(outcome[i]),
            outcome_time_h=float(outcome_time_h[i]),
            vitals=vitals,
        ))
    return stays


def filter_adults(cohort: Iterable[PatientStay]) -> List[PatientStay]:
    """Keep stays with age >= 18."""
    return [stay for stay in cohort if stay.age >= 18]


# ---------------------------------------------------------------------------
# CSV round-trip
# ---------------------------------------------------------------------------

def save_cohort(cohort: Sequence[PatientStay], path: str) -> None:
    """Write one observation per row; stays with no observations leave no rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for stay in cohort:
            head = (stay.stay_id, str(stay.age), stay.gender, stay.disease,
                    stay.specialty, stay.admission, stay.payer, stay.unit,
                    repr(stay.days_last_hosp), str(stay.outcome),
                    repr(stay.outcome_time_h))
            for kind in VITAL_KINDS:
                for obs in stay.vitals[kind]:
                    writer.writerow(head + (kind.value, repr(obs.time_h), repr(obs.value)))


_KIND_BY_CODE = {kind.value: kind for kind in VitalKind}


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CohortSchemaError(
            f"row {line}: column {column!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise CohortSchemaError(f"row {line}: column {column!r} is not finite: {text!r}")
    return value


def _parse_int(text: str, column: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise CohortSchemaError(
            f"row {line}: column {column!r} is not an integer: {text!r}") from None


def load_cohort(path: str) -> List[PatientStay]:
    """Read a cohort CSV, validating the schema and domain invariants.

    Errors name the offending row. Stays come back in first-appearance order
    with observations time-sorted; save_cohort -> load_cohort is the identity
    for cohorts where every stay has at least one observation.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortSchemaError("empty file: missing header") from None
        if header != list(CSV_COLUMNS):
            raise CohortSchemaError(
                f"malformed header: expected {','.join(CSV_COLUMNS)}")

        order: List[str] = []
        scalars: Dict[str, tuple] = {}
        first_line: Dict[str, int] = {}
        series: Dict[str, Dict[VitalKind, List[VitalObservation]]] = {}
        seen_obs = set()

        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise CohortSchemaError(
                    f"row {line}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            (sid, age_s, gender, disease, specialty, admission, payer, unit,
             days_last_s, outcome_s, outcome_time_s, kind_s, time_s, value_s) = row

            outcome = _parse_int(outcome_s, "outcome", line)
            if outcome not in (0, 1):
                raise CohortSchemaError(f"row {line}: outcome must be 0 or 1, got {outcome}")
            head = (sid, _parse_int(age_s, "age", line), gender, disease, specialty,
                    admission, payer, unit, _parse_float(days_last_s, "days_last_hosp", line),
                    outcome, _parse_float(outcome_time_s, "outcome_time_h", line))

            if sid not in scalars:
                scalars[sid] = head
                first_line[sid] = line
                order.append(sid)
                series[sid] = {}
            elif scalars[sid] != head:
                raise CohortSchemaError(
                    f"row {line}: stay fields for id {sid!r} disagree with row "
                    f"{first_line[sid]}")

            if kind_s not in _KIND_BY_CODE:
                raise CohortSchemaError(f"row {line}: unknown vital kind {kind_s!r}")
            kind = _KIND_BY_CODE[kind_s]
            time_h = _parse_float(time_s, "time_h", line)
            value = _parse_float(value_s, "value", line)
            key = (sid, kind_s, time_h)
            if key in seen_obs:
                raise CohortSchemaError(
                    f"row {line}: duplicate observation for ({sid}, {kind_s}, {time_h})")
            seen_obs.add(key)
            try:
                obs = VitalObservation(kind=kind, value=value, time_h=time_h)
            except ValueError as exc:
                raise CohortSchemaError(f"row {line}: {exc}") from None
            series[sid].setdefault(kind, []).append(obs)

    stays: List[PatientStay] = []
    for sid in order:
        (sid_, age, gender, disease, specialty, admission, payer, unit,
         days_last, outcome, outcome_time_h) = scalars[sid]
        vitals = {
            kind: tuple(sorted(obs_list, key=lambda o: o.time_h))
            for kind, obs_list in series[sid].items()
        }
        try:
            stays.append(PatientStay(
                stay_id=sid, age=age, gender=gender, disease=disease,
                specialty=specialty, admission=admission, payer=payer, unit=unit,
                days_last_hosp=days_last, outcome=outcome,
                outcome_time_h=outcome_time_h, vitals=vitals))
        except ValueError as exc:
            raise CohortSchemaError(f"row {first_line[sid]}: {exc}") from None
    return stays


def truncate_horizon(stay: PatientStay, horizon_h: float = 12.0) -> PatientStay:
    """Drop every observation within ``horizon_h`` hours of the outcome.

    Keeps observations with time <= outcome_time_h - horizon_h; the model must
    never see measurements taken inside the prediction horizon.
    """
    if horizon_h < 0:
        raise ValueError("horizon_h must be >= 0")
    cutoff = stay.outcome_time_h - horizon_h
    vitals = {
        kind: tuple(obs for obs in stay.vitals[kind] if obs.time_h <= cutoff)
        for kind in VITAL_KINDS
    }
    return replace(stay, vitals=vitals)
