import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probenv.density import MembershipField
from probenv.envelope_db import (
    EnvelopeDatabase,
    ProbMetricField,
    binarize_threshold,
    build_constraint_field,
    build_prob_field,
)
from probenv.errors import (
    BadMagicError,
    ChecksumError,
    EmptyEnvelopeError,
    TruncatedFileError,
    VersionMismatchError,
)
from probenv.grid import GridSpec


def field_from(grid, values):
    v = np.asarray(values, dtype=float).ravel()
    return MembershipField(grid, v, 1.0, int(np.argmax(v)))


def bump_field():
    g = GridSpec(("a", "b"), (-3.0, -2.0), (3.0, 2.0), (0.5, 0.25))
    n = g.nodes()
    mu = np.exp(-0.5 * ((n[:, 0] - 0.4) ** 2 / 1.5 + (n[:, 1] + 0.2) ** 2 / 0.6))
    return field_from(g, mu / mu.max())


class TestMetric:
    def test_values(self):
        f = build_prob_field(np.array([1.0, 0.0, np.exp(-2.0)]), 1e-6)
        assert f.values[0] == 0.0
        assert f.values[1] == pytest.approx(-13.8155, abs=1e-4)
        assert f.values[2] == pytest.approx(-2.0, abs=1e-15)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            build_prob_field(np.ones(3), 0.0)

    def test_threshold(self):
        assert binarize_threshold(1.0) == pytest.approx(np.exp(-0.5))
        assert binarize_threshold(3.0) == pytest.approx(0.011109, abs=1e-6)


class TestConstraints:
    def test_single_inside_node(self):
        g = GridSpec(("a", "b"), (0.0, 0.0), (4.0, 2.0), (1.0, 1.0))
        mu = np.zeros(g.shape)
        mu[2, 1] = 1.0
        c = build_constraint_field(field_from(g, mu), k0=1.0)
        k = g.flat_index((2, 1))
        assert np.array_equal(c.lower[k], [2.0, 1.0]) and np.array_equal(c.upper[k], [2.0, 1.0])
        # every outside node borrows the single inside node's box
        assert np.all(c.lower == c.lower[k]) and np.all(c.upper == c.upper[k])

    def test_one_dimensional_runs(self):
        g = GridSpec(("a",), (0.0,), (9.0,), (1.0,))
        mu = np.array([0, 1, 1, 1, 0, 0, 1, 1, 0, 0], dtype=float)
        c = build_constraint_field(field_from(g, mu), k0=1.0)
        for k in (1, 2, 3):
            assert (c.lower[k, 0], c.upper[k, 0]) == (1.0, 3.0)
        for k in (6, 7):
            assert (c.lower[k, 0], c.upper[k, 0]) == (6.0, 7.0)
        # node 4 is nearer to the first run, node 9 to the second
        assert (c.lower[4, 0], c.upper[4, 0]) == (1.0, 3.0)
        assert (c.lower[9, 0], c.upper[9, 0]) == (6.0, 7.0)

    def test_bump_matches_scan(self):
        mem = bump_field()
        g = mem.grid
        c = build_constraint_field(mem, k0=1.0)
        inside = (mem.values >= np.exp(-0.5)).reshape(g.shape)
        for i, j in itertools.product(range(g.shape[0]), range(g.shape[1])):
            if not inside[i, j]:
                continue
            lo_i = i
            while lo_i > 0 and inside[lo_i - 1, j]:
                lo_i -= 1
            hi_i = i
            while hi_i < g.shape[0] - 1 and inside[hi_i + 1, j]:
                hi_i += 1
            lo_j = j
            while lo_j > 0 and inside[i, lo_j - 1]:
                lo_j -= 1
            hi_j = j
            while hi_j < g.shape[1] - 1 and inside[i, hi_j + 1]:
                hi_j += 1
            k = g.flat_index((i, j))
            assert np.allclose(c.lower[k], g.node((lo_i, lo_j)), rtol=0, atol=1e-12)
            assert np.allclose(c.upper[k], g.node((hi_i, hi_j)), rtol=0, atol=1e-12)
            assert np.all(c.lower[k] <= g.node((i, j))) and np.all(g.node((i, j)) <= c.upper[k])

    def test_nearest_inside_brute_force(self):
        mem = bump_field()
        g = mem.grid
        c = build_constraint_field(mem, k0=1.5)
        idx = np.array(list(itertools.product(*[range(s) for s in g.shape])))
        ins = idx[c.inside]
        for k in np.flatnonzero(~c.inside):
            d2 = np.sum((ins - idx[k]) ** 2, axis=1)
            # ties are possible; the copied box must belong to one of the nearest
            candidates = ins[d2 == d2.min()]
            boxes = [(tuple(c.lower[g.flat_index(t)]), tuple(c.upper[g.flat_index(t)])) for t in candidates]
            assert (tuple(c.lower[k]), tuple(c.upper[k])) in boxes

    def test_empty(self):
        g = GridSpec(("a",), (0.0,), (2.0,), (1.0,))
        with pytest.raises(EmptyEnvelopeError):
            build_constraint_field(field_from(g, [0.001, 0.002, 0.0]), k0=1.0)


def linear_db(c=(0.7, -0.3, 0.0)):
    g = GridSpec(("a", "b", "c"), (-2.0, 0.0, 5.0), (2.0, 3.0, 7.0), (0.5, 1.0, 0.25))
    vals = g.nodes() @ np.array(c) - 20.0
    return EnvelopeDatabase(ProbMetricField(g, vals))


class TestQueries:
    def test_node_exact(self):
        mem = bump_field()
        db = EnvelopeDatabase.from_membership(mem)
        nodes = mem.grid.nodes()
        for k in range(0, mem.grid.n_nodes, 7):
            m, _, flag = db.query_metric(nodes[k])
            assert m == db.metric.values[k] and not flag

    @settings(max_examples=40, deadline=None)
    @given(st.tuples(st.floats(-2, 2), st.floats(0, 3), st.floats(5, 7)))
    def test_linear_gradient(self, x):
        db = linear_db()
        m, J, _ = db.query_metric(np.array(x))
        assert np.allclose(J, [0.7, -0.3, 0.0], rtol=0, atol=1e-9)
        assert m == pytest.approx(0.7 * x[0] - 0.3 * x[1] - 20.0, abs=1e-9)

    def test_bilinear_gradient_matches_external_differences(self, rng):
        g = GridSpec(("a", "b"), (0.0, 0.0), (4.0, 4.0), (0.5, 0.5))
        n = g.nodes()
        db = EnvelopeDatabase(ProbMetricField(g, 0.3 * n[:, 0] * n[:, 1] - n[:, 1]))
        for x in rng.uniform(0.6, 3.4, (50, 2)):
            _, J, _ = db.query_metric(x)
            ext = []
            for j in range(2):
                e = np.zeros(2)
                e[j] = 0.25
                ext.append((db.query_metric(x + e)[0] - db.query_metric(x - e)[0]) / 0.5)
            assert np.allclose(J, ext, rtol=1e-6, atol=0)

    def test_clamp_and_flag(self):
        db = linear_db()
        m, _, flag = db.query_metric(np.array([5.0, 1.0, 6.0]))
        m2, _, flag2 = db.query_metric(np.array([2.0, 1.0, 6.0]))
        assert flag and not flag2 and m == m2

    def test_one_sided_at_boundary(self):
        _, J, _ = linear_db().query_metric(np.array([-2.0, 3.0, 7.0]))
        assert np.allclose(J, [0.7, -0.3, 0.0], atol=1e-12)

    def test_constraint_query_nearest_node(self, rng):
        mem = bump_field()
        db = EnvelopeDatabase.from_membership(mem, k0=1.0)
        g = mem.grid
        nodes = g.nodes()
        for x in rng.uniform([-3, -2], [3, 2], (100, 2)):
            lo, hi, _ = db.query_constraints(x)
            d = np.sum(((nodes - x) / g.steps_arr) ** 2, axis=1)
            k = int(np.argmin(d))
            assert np.array_equal(lo, db.constraints.lower[k]) and np.array_equal(hi, db.constraints.upper[k])

    def test_gradient_bound(self):
        db = linear_db()
        assert np.allclose(db.gradient_bound(), [0.7, 0.3, 0.0])


class TestSerialization:
    def make(self):
        db = EnvelopeDatabase.from_membership(bump_field(), k0=1.0)
        return db, db.to_bytes()

    def test_roundtrip_bit_identical(self, tmp_path):
        db, data = self.make()
        path = tmp_path / "x.sfedb"
        db.save(path)
        back = EnvelopeDatabase.load(path)
        assert back.to_bytes() == data == path.read_bytes()
        assert back.names == ("a", "b")
        assert np.array_equal(back.constraints.lower, db.constraints.lower)

    def test_metric_only(self):
        db = linear_db()
        assert EnvelopeDatabase.from_bytes(db.to_bytes()).to_bytes() == db.to_bytes()

    def test_header_layout(self):
        _, data = self.make()
        assert data[:6] == b"SFEDB\x01"
        assert int.from_bytes(data[6:10], "little") == 1
        assert int.from_bytes(data[10:14], "little") == 2

    def test_errors(self):
        _, data = self.make()
        with pytest.raises(BadMagicError):
            EnvelopeDatabase.from_bytes(b"XXXXXX" + data[6:])
        with pytest.raises(VersionMismatchError):
            EnvelopeDatabase.from_bytes(data[:6] + (2).to_bytes(4, "little") + data[10:])
        with pytest.raises(TruncatedFileError):
            EnvelopeDatabase.from_bytes(data[:-40])
        bad = bytearray(data)
        bad[-1] ^= 0xFF
        with pytest.raises(ChecksumError):
            EnvelopeDatabase.from_bytes(bytes(bad))
        bad = bytearray(data)
        bad[200] ^= 0x01
        with pytest.raises(ChecksumError):
            EnvelopeDatabase.from_bytes(bytes(bad))

    def test_csv_export(self, tmp_path):
        db, _ = self.make()
        path = tmp_path / "db.csv"
        db.export_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["a", "b", "M_env", "a_min", "b_min", "a_max", "b_max"]
        assert len(rows) == db.grid.n_nodes + 1
        assert float(rows[5][2]) == db.metric.values[4]
