import math

import numpy as np
import pytest

from cdpred import (CohortSchemaError, PatientStay, VITAL_KINDS, VitalKind,
                    VitalObservation, default_calibration, filter_adults,
                    generate_synthetic_cohort, load_cohort, save_cohort,
                    truncate_horizon)


def make_stay(**overrides):
    base = dict(
        stay_id="S1", age=60, gender="F", disease="D01", specialty="S01",
        admission="emergency", payer="public", unit="general",
        days_last_hosp=0.0, outcome=0, outcome_time_h=100.0, vitals={})
    base.update(overrides)
    return PatientStay(**base)


def obs(kind, value, time_h):
    return VitalObservation(kind=kind, value=value, time_h=time_h)


def test_observation_rejects_out_of_range_values():
    with pytest.raises(ValueError):
        obs(VitalKind.OXYGEN_SATURATION, 100.5, 1.0)
    with pytest.raises(ValueError):
        obs(VitalKind.TEMPERATURE, 24.9, 1.0)
    with pytest.raises(ValueError):
        obs(VitalKind.HEART_RATE, -1.0, 1.0)
    with pytest.raises(ValueError):
        obs(VitalKind.HEART_RATE, float("nan"), 1.0)
    with pytest.raises(ValueError):
        obs(VitalKind.HEART_RATE, 80.0, -0.5)


def test_observation_accepts_boundary_values():
    assert obs(VitalKind.OXYGEN_SATURATION, 100.0, 0.0).value == 100.0
    assert obs(VitalKind.TEMPERATURE, 25.0, 0.0).value == 25.0


def test_stay_normalizes_vitals_to_all_kinds():
    stay = make_stay(vitals={
        VitalKind.HEART_RATE: [obs(VitalKind.HEART_RATE, 80.0, 5.0)]})
    assert set(stay.vitals) == set(VITAL_KINDS)
    assert stay.vitals[VitalKind.BLOOD_GLUCOSE] == ()
    assert stay.vitals[VitalKind.HEART_RATE][0].value == 80.0


def test_stay_rejects_observation_after_outcome():
    with pytest.raises(ValueError):
        make_stay(outcome_time_h=10.0, vitals={
            VitalKind.HEART_RATE: [obs(VitalKind.HEART_RATE, 80.0, 10.5)]})


def test_stay_rejects_misfiled_and_unsorted_observations():
    with pytest.raises(ValueError):
        make_stay(vitals={
            VitalKind.HEART_RATE: [obs(VitalKind.RESPIRATORY_RATE, 18.0, 1.0)]})
    with pytest.raises(ValueError):
        make_stay(vitals={VitalKind.HEART_RATE: [
            obs(VitalKind.HEART_RATE, 80.0, 5.0),
            obs(VitalKind.HEART_RATE, 82.0, 4.0)]})


def test_stay_field_validation():
    with pytest.raises(ValueError):
        make_stay(outcome=2)
    with pytest.raises(ValueError):
        make_stay(age=-1)
    with pytest.raises(ValueError):
        make_stay(outcome_time_h=0.0)
    with pytest.raises(ValueError):
        make_stay(days_last_hosp=-0.1)
    with pytest.raises(ValueError):
        make_stay(gender="")


def test_days_from_entrance_derived_from_outcome_hour():
    assert make_stay(outcome_time_h=48.0).days_from_entrance == 2.0


def test_truncate_horizon_drops_recent_observations():
    stay = make_stay(outcome_time_h=100.0, vitals={VitalKind.HEART_RATE: [
        obs(VitalKind.HEART_RATE, 70.0, 80.0),
        obs(VitalKind.HEART_RATE, 75.0, 90.0),
        obs(VitalKind.HEART_RATE, 90.0, 95.0)]})
    cut = truncate_horizon(stay, 12.0)
    assert [o.time_h for o in cut.vitals[VitalKind.HEART_RATE]] == [80.0]
    # boundary is inclusive: exactly horizon hours before the outcome stays
    cut88 = truncate_horizon(make_stay(outcome_time_h=100.0, vitals={
        VitalKind.HEART_RATE: [obs(VitalKind.HEART_RATE, 70.0, 88.0)]}), 12.0)
    assert len(cut88.vitals[VitalKind.HEART_RATE]) == 1
    assert cut.stay_id == stay.stay_id
    assert cut.outcome_time_h == stay.outcome_time_h
    with pytest.raises(ValueError):
        truncate_horizon(stay, -1.0)


def test_filter_adults():
    adult = make_stay(stay_id="A", age=18)
    minor = make_stay(stay_id="B", age=17)
    assert filter_adults([adult, minor]) == [adult]


def test_generator_deterministic_and_valid():
    cohort = generate_synthetic_cohort(300, seed=5)
    again = generate_synthetic_cohort(300, seed=5)
    assert cohort == again
    assert len(cohort) == 300
    assert len({s.stay_id for s in cohort}) == 300
    assert all(s.age >= 18 for s in cohort)
    for stay in cohort:
        assert stay.days_from_entrance >= 1.25
        for kind in VITAL_KINDS:
            series = stay.vitals[kind]
            assert len(series) <= 5
            for o in series:
                assert o.time_h > 0.0
                assert o.time_h <= stay.outcome_time_h - 13.0 + 1e-9


def test_generator_empty_and_seed_sensitivity():
    assert generate_synthetic_cohort(0, seed=1) == []
    a = generate_synthetic_cohort(50, seed=1)
    b = generate_synthetic_cohort(50, seed=2)
    assert a != b


def test_generator_death_fraction():
    cohort = generate_synthetic_cohort(10000, seed=7)
    rate = np.mean([s.outcome for s in cohort])
    assert 0.03 <= rate <= 0.05


def test_generator_mortality_heart_rate_shift():
    cohort = generate_synthetic_cohort(10000, seed=7)
    hr = [o.value for s in cohort if s.outcome == 1
          for o in s.vitals[VitalKind.HEART_RATE]]
    assert abs(np.mean(hr) - 95.01) < 1.5


def test_generator_calibration_fidelity():
    # large-sample check against the calibration table; the mean tolerance is
    # three standard errors at the stay level since collections within a stay
    # share a baseline and are far from independent
    calib = default_calibration()
    n = 100000
    cohort = generate_synthetic_cohort(n, seed=12345)
    outcomes = np.array([s.outcome for s in cohort])
    n_by_class = {0: int((outcomes == 0).sum()), 1: int((outcomes == 1).sum())}

    prior = calib.mortality_prior
    assert abs(outcomes.mean() - prior) <= 3 * math.sqrt(prior * (1 - prior) / n)

    lightly_clipped = {VitalKind.HEART_RATE, VitalKind.RESPIRATORY_RATE,
                       VitalKind.DIASTOLIC_BP, VitalKind.SYSTOLIC_BP,
                       VitalKind.TEMPERATURE}
    for kind in VITAL_KINDS:
        values = {0: [], 1: []}
        present = 0
        for stay in cohort:
            for o in stay.vitals[kind]:
                values[stay.outcome].append(o.value)
                present += 1
        observed_missing = 1.0 - present / (5 * n)
        assert abs(observed_missing - calib.missing[kind]) <= 0.01, kind
        for cls in (0, 1):
            arr = np.asarray(values[cls])
            target_mean = calib.vitals[kind].mean(cls)
            target_std = calib.vitals[kind].std(cls)
            se = target_std / math.sqrt(n_by_class[cls])
            assert abs(arr.mean() - target_mean) <= 3 * se, (kind, cls)
            rel = abs(arr.std(ddof=1) - target_std) / target_std
            # clipping to the value range shaves spread off SPO2 and GLU
            assert rel <= (0.02 if kind in lightly_clipped else 0.12), (kind, cls)


def test_csv_round_trip(tmp_path):
    cohort = generate_synthetic_cohort(50, seed=3)
    assert all(any(stay.vitals[k] for k in VITAL_KINDS) for stay in cohort)
    path = tmp_path / "cohort.csv"
    save_cohort(cohort, str(path))
    loaded = load_cohort(str(path))
    assert loaded == cohort


def test_load_rejects_malformed_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,age\nX,1\n")
    with pytest.raises(CohortSchemaError, match="header"):
        load_cohort(str(path))
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(CohortSchemaError, match="empty"):
        load_cohort(str(tmp_path / "empty.csv"))


def _rows_for(stay_fields, obs_rows):
    header = ("id,age,gender,disease,specialty,admission,payer,unit,"
              "days_last_hosp,outcome,outcome_time_h,kind,time_h,value")
    lines = [header]
    for kind, time_h, value in obs_rows:
        lines.append(",".join(stay_fields + (kind, str(time_h), str(value))))
    return "\n".join(lines) + "\n"


STAY_FIELDS = ("P1", "60", "F", "D01", "S01", "emergency", "public",
               "general", "0.0", "0", "100.0")


def test_load_rejects_duplicate_observation(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text(_rows_for(STAY_FIELDS, [("HR", 5.0, 80.0),
                                            ("HR", 5.0, 81.0)]))
    with pytest.raises(CohortSchemaError, match="row 3.*duplicate"):
        load_cohort(str(path))


def test_load_rejects_inconsistent_stay_fields(tmp_path):
    other = ("P1", "61") + STAY_FIELDS[2:]
    path = tmp_path / "inc.csv"
    path.write_text(_rows_for(STAY_FIELDS, [("HR", 5.0, 80.0)])
                    + ",".join(other + ("RR", "6.0", "18.0")) + "\n")
    with pytest.raises(CohortSchemaError, match="row 3.*disagree"):
        load_cohort(str(path))


def test_load_rejects_unknown_kind_and_bad_numbers(tmp_path):
    path = tmp_path / "kind.csv"
    path.write_text(_rows_for(STAY_FIELDS, [("XX", 5.0, 80.0)]))
    with pytest.raises(CohortSchemaError, match="row 2.*unknown vital kind"):
        load_cohort(str(path))
    path2 = tmp_path / "num.csv"
    path2.write_text(_rows_for(STAY_FIELDS, [("HR", "abc", 80.0)]))
    with pytest.raises(CohortSchemaError, match="row 2.*time_h"):
        load_cohort(str(path2))


def test_load_rejects_out_of_range_value(tmp_path):
    path = tmp_path / "range.csv"
    path.write_text(_rows_for(STAY_FIELDS, [("SPO2", 5.0, 101.0)]))
    with pytest.raises(CohortSchemaError, match="row 2"):
        load_cohort(str(path))


def test_load_sorts_observations_and_keeps_order(tmp_path):
    fields_b = ("P2",) + STAY_FIELDS[1:]
    text = _rows_for(STAY_FIELDS, [("HR", 9.0, 82.0), ("HR", 5.0, 80.0)])
    text += ",".join(fields_b + ("RR", "5.0", "18.0")) + "\n"
    path = tmp_path / "order.csv"
    path.write_text(text)
    loaded = load_cohort(str(path))
    assert [s.stay_id for s in loaded] == ["P1", "P2"]
    times = [o.time_h for o in loaded[0].vitals[VitalKind.HEART_RATE]]
    assert times == [5.0, 9.0]
