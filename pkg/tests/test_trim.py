import numpy as np
import pytest
from scipy import stats

from probenv.dynamics import EnvelopeCoords, P, Q, R, U, V, W, eval_dynamics
from probenv.errors import TrimSetBuildError
from probenv.trim import (
    DEFAULT_BOX_TOL,
    TRIM_TOL,
    TrimSet,
    build_trim_set,
    sample_trim_state,
    solve_trim,
    trim_level_function,
    trim_objective,
)


def normalized_residual(model, pt):
    d = eval_dynamics(model, pt.state(model), pt.control(model))
    return np.abs(np.concatenate([d[[U, V, W]] / model.g, d[[P, Q, R]]])).max()


@pytest.mark.parametrize("h,mach", [(10000.0, 0.4), (20000.0, 0.8), (30000.0, 1.2)])
def test_solution_residual(fighter, h, mach):
    pt = solve_trim(fighter, h, mach)
    assert pt.residual <= TRIM_TOL
    assert normalized_residual(fighter, pt) <= TRIM_TOL
    x = pt.state(fighter)
    assert x.phi == 0.0 and x.theta == pt.alpha


def test_objective_definition(fighter):
    assert trim_objective(fighter, fighter.T_max, {"elevon": 0.0, "ptv": 0.0}) == 1.0
    assert trim_objective(fighter, 0.0, [0.1, -0.2], k_trim=2.0) == pytest.approx(0.1)


def test_objective_reported(fighter):
    pt = solve_trim(fighter, 15000.0, 0.7)
    assert pt.J == pytest.approx(trim_objective(fighter, pt.thrust, pt.deflections))


def test_two_by_two_grid(fighter):
    ts = build_trim_set(fighter, grid_steps=(2, 2))
    assert sum(1 for _ in ts.rows()) == 4


def test_interpolant_hits_nodes(small_trim_set):
    ts = small_trim_set
    for pt in ts.rows():
        assert float(ts.interpolate("alpha", pt.h, pt.mach)) == pytest.approx(pt.alpha, abs=1e-12)
        assert float(ts.interpolate("thrust", pt.h, pt.mach)) == pytest.approx(pt.thrust, rel=1e-12)


def test_degenerate_range_rejected(fighter):
    with pytest.raises(ValueError):
        build_trim_set(fighter, h_range=(1000.0, 1000.0))


def test_too_many_failures(fighter):
    # an impossibly high Mach range cannot be trimmed with the available thrust
    with pytest.raises(TrimSetBuildError):
        build_trim_set(fighter, h_range=(0.0, 1000.0), mach_range=(1.9, 2.0), grid_steps=(2, 2))


def test_csv_roundtrip(fighter, small_trim_set, tmp_path):
    path = tmp_path / "trim.csv"
    small_trim_set.export_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["h", "mach", "alpha", "T", "elevon", "ptv", "residual", "J"]
    back = TrimSet.load_csv(fighter, path)
    assert np.array_equal(back.hs, small_trim_set.hs)
    assert [p.alpha for p in back.rows()] == [p.alpha for p in small_trim_set.rows()]


class TestLevelFunction:
    def on_manifold(self, ts, h=20000.0, mach=0.8, **off):
        X, _ = ts.trim_batch(h, mach)
        e = EnvelopeCoords.from_array(ts.model.envelope_coords_batch(X)[0])
        return EnvelopeCoords(**{**e.__dict__, **off})

    def test_positive_on_trim(self, small_trim_set):
        assert trim_level_function(small_trim_set, self.on_manifold(small_trim_set)) == pytest.approx(1.0)

    def test_negative_far_out(self, small_trim_set):
        assert trim_level_function(small_trim_set, self.on_manifold(small_trim_set, beta=0.2)) < 0

    def test_box_formula(self, small_trim_set):
        x = self.on_manifold(small_trim_set, q=0.01, beta=0.0025)
        # q is at half the tolerance, beta at a quarter
        assert trim_level_function(small_trim_set, x) == pytest.approx(0.5, abs=1e-12)
        x = self.on_manifold(small_trim_set, p=-0.03)
        assert trim_level_function(small_trim_set, x) == pytest.approx(1 - 0.03 / DEFAULT_BOX_TOL["p"], abs=1e-12)

    def test_box_semantics(self, small_trim_set, rng):
        base = self.on_manifold(small_trim_set)
        for _ in range(50):
            off = {k: rng.uniform(-2, 2) * DEFAULT_BOX_TOL[k] for k in ("p", "q", "r")}
            x = EnvelopeCoords(**{**base.__dict__, **off})
            inside = all(abs(v) < DEFAULT_BOX_TOL[k] for k, v in off.items())
            assert (trim_level_function(small_trim_set, x) > 0) == inside


class TestSampling:
    def test_structure_and_residual(self, fighter, trim_set, rng):
        for _ in range(10):
            x, u = sample_trim_state(trim_set, rng)
            assert x.phi == 0 and x.p == x.q == x.r == 0 and x.v == 0
            d = eval_dynamics(fighter, x, u)
            res = np.abs(np.concatenate([d[[U, V, W]] / fighter.g, d[[P, Q, R]]])).max()
            assert res <= 1e-3

    def test_uniform_over_rectangle(self, small_trim_set):
        rng = np.random.default_rng(7)
        draws = np.array([small_trim_set.draw_origin(rng) for _ in range(10000)])
        (h0, h1), (m0, m1) = small_trim_set.h_range, small_trim_set.mach_range
        counts, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], bins=5, range=[[h0, h1], [m0, m1]])
        assert stats.chisquare(counts.ravel()).pvalue > 0.01
