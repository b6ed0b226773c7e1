import numpy as np
import pytest

from probenv.controller import ControllerConfig
from probenv.fep import ProbFepConfig, modification_bound
from probenv.sim import (
    SURROGATE_PEAK_A,
    ManeuverSpec,
    Prefilter,
    Segment,
    SimLog,
    loc_flag,
    maneuver_a,
    maneuver_b,
    prefilter,
    run_closed_loop,
)

PROTECTED = ("alpha", "beta", "p", "q", "r")


def cols(log, prefix):
    return np.column_stack([log.col(f"{prefix}_{n}") for n in PROTECTED])


def env_db_point(db, log, k):
    deg = 180 / np.pi
    scale = {"p": deg, "q": deg, "r": deg, "alpha": deg, "beta": deg, "vg": 1.0, "h": 1.0}
    return np.array([log.col("env_" + n)[k] * scale[n] for n in db.names])


class TestManeuvers:
    def test_a_values(self):
        m = maneuver_a()
        assert m.value("alpha", 2.0) == 90.0
        assert m.value("alpha", 0.0) == 0.0 and m.value("alpha", 4.0) == 0.0
        assert m.value("alpha", 1.0) == pytest.approx(45.0)
        assert m.value("beta", 2.0) == 0.0

    def test_b_values(self):
        m = maneuver_b()
        assert m.value("alpha", 3.0) == 50.0 and m.value("alpha", 9.0) == -50.0
        assert m.value("alpha", 6.0) == 0.0
        t = np.linspace(2.0, 14.0, 97)
        assert np.allclose(m.value("beta", t), m.value("alpha", t - 2.0), atol=1e-12)

    def test_surrogate_peak(self):
        assert maneuver_a(SURROGATE_PEAK_A).value("alpha", 2.0) == SURROGATE_PEAK_A

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            ManeuverSpec([Segment("alpha", 0.0, 4.0, 1.0), Segment("alpha", 3.0, 4.0, 1.0)])
        with pytest.raises(ValueError):
            ManeuverSpec([Segment("gamma", 0.0, 4.0, 1.0)])

    def test_dict_roundtrip(self):
        m = maneuver_b(30.0)
        assert ManeuverSpec.from_dict(m.to_dict()).to_dict() == m.to_dict()


class TestPrefilter:
    def test_step_time_constant(self):
        f = Prefilter(cutoff=2.0, dt=0.01, n=1)
        ys = [f(np.ones(1))[0] for _ in range(51)]
        assert ys[0] == 0.0
        assert ys[50] == pytest.approx(1 - np.exp(-1.0), abs=1e-12)
        assert ys[50] == pytest.approx(0.632, abs=1e-3)

    def test_dc_gain(self):
        f = Prefilter(cutoff=2.0, dt=0.01, n=1)
        for _ in range(2000):
            y = f(np.full(1, 3.0))
        assert y[0] == pytest.approx(3.0, rel=1e-12)

    def test_triangle_attenuated(self):
        gen = prefilter(maneuver_a(), dt=0.01)
        peak = max(next(gen)[1] for _ in range(600))
        assert 0 < peak < 90.0


def test_loc_flag():
    assert not loc_flag([0, 0, 0, 10, 0])
    assert loc_flag([301, 0, 0, 10, 0]) and loc_flag([0, 0, 121, 0, 0]) and loc_flag([0, 0, 0, -91, 0])


def test_benign_run(fighter):
    man = ManeuverSpec([Segment("alpha", 0.0, 4.0, 2.0)])
    log = run_closed_loop(fighter, maneuver=man, T_end=10.0)
    assert len(log) == 1001 and not log.loc
    assert np.all(log.col("fep_active") == 0) and np.all(log.col("pch_active") == 0)
    err = log.col("env_alpha") - log.col("alpha_ref")
    assert abs(err[-1]) < 0.05 * np.pi / 180
    t = log.col("t")
    assert np.array_equal(t, np.arange(1001) * 0.01)


def test_export_roundtrip(fighter, tmp_path):
    log = run_closed_loop(fighter, maneuver=maneuver_a(5.0), T_end=0.5)
    path = tmp_path / "log.csv"
    log.export(path)
    back = SimLog.load(path)
    assert back.columns == log.columns
    assert np.array_equal(back.rows, log.rows, equal_nan=True)
    assert back.meta == log.meta
    assert path.read_text().splitlines()[0].split(",") == log.columns


def test_protection_needs_db(fighter):
    with pytest.raises(ValueError):
        run_closed_loop(fighter, fep_mode="prob", T_end=0.1)


class TestScenario:
    def test_unprotected_departs(self, scenario_runs):
        assert scenario_runs["none"].loc

    @pytest.mark.parametrize("mode", ["scb", "prob"])
    def test_protected_complete(self, scenario_runs, mode):
        log = scenario_runs[mode]
        assert not log.loc and len(log) == 1001
        assert np.all(np.diff(log.col("t")) > 0)

    @pytest.mark.parametrize("mode", ["none", "scb", "prob"])
    def test_metric_column_audit(self, scenario_runs, scenario_db, mode):
        log = scenario_runs[mode]
        M = log.col("M_env")
        for k in range(0, len(log), 13):
            assert M[k] == scenario_db.query_metric(env_db_point(scenario_db, log, k))[0]

    def test_scb_clamp_audit(self, scenario_runs, scenario_db):
        log = scenario_runs["scb"]
        ref, fep = cols(log, "db_ref"), cols(log, "db_fep")
        lo, hi = cols(log, "db_min"), cols(log, "db_max")
        assert np.array_equal(fep, np.clip(ref, lo, hi))
        names = list(scenario_db.names)
        for k in range(0, len(log), 17):
            qlo, qhi, _ = scenario_db.query_constraints(env_db_point(scenario_db, log, k))
            assert np.array_equal(lo[k], [qlo[names.index(n)] for n in PROTECTED])
            assert np.array_equal(hi[k], [qhi[names.index(n)] for n in PROTECTED])

    @pytest.mark.parametrize("mode", ["none", "scb", "prob"])
    def test_pch_identity(self, scenario_runs, mode):
        log = scenario_runs[mode]
        A = np.column_stack([log.col(f"A1_{i}{j}") for i in range(3) for j in range(3)]).reshape(-1, 3, 3)
        d = np.column_stack([log.col(f"{n}_ref") - log.col(f"{n}_fep") for n in ("p", "q", "r")])
        nu_h = np.column_stack([log.col(f"nu_h_{n}") for n in ("phi", "alpha", "beta")])
        for k in range(len(log)):
            assert np.array_equal(nu_h[k], A[k] @ d[k])
        if mode == "none":
            assert np.all(nu_h == 0)

    def test_prob_modification_bounded(self, scenario_runs, scenario_db):
        log = scenario_runs["prob"]
        cfg = ProbFepConfig()
        names = list(scenario_db.names)
        gb = scenario_db.gradient_bound()
        mmin = float(scenario_db.metric.values.min())
        for group in (("alpha", "beta"), ("p", "q", "r")):
            K = cfg.gains(group)
            bound = modification_bound(mmin, cfg.M0, K, gb[[names.index(n) for n in group]])
            idx = [PROTECTED.index(n) for n in group]
            chi = cols(log, "db_fep")[:, idx] - cols(log, "db_ref")[:, idx]
            assert np.all(np.linalg.norm(chi, axis=1) <= bound * (1 + 1e-12))

    def test_paired_determinism(self, fighter, scenario_db, scenario_runs):
        again = run_closed_loop(fighter, fep_mode="scb", db=scenario_db,
                                maneuver=maneuver_a(SURROGATE_PEAK_A), T_end=10.0, seed=0)
        assert np.array_equal(again.rows, scenario_runs["scb"].rows)


def test_pch_off_passthrough(fighter):
    cfg = ControllerConfig(pch=False)
    log = run_closed_loop(fighter, cfg, maneuver=maneuver_a(3.0), T_end=1.0)
    on = run_closed_loop(fighter, maneuver=maneuver_a(3.0), T_end=1.0)
    # without protection the hedge is zero, so only the reference model differs
    assert np.all(log.col("nu_h_alpha") == 0)
    assert np.max(np.abs(log.col("env_alpha") - on.col("env_alpha"))) < 0.5 * np.pi / 180
