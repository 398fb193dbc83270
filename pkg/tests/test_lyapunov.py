import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from factcheck.harness import sample_verdicts
from factcheck.lyapunov import (
    boundary_value,
    c_pi,
    descent_value,
    fd_gradient,
    level_constants,
    lyapunov_gradient,
    lyapunov_report,
    lyapunov_value,
    lyapunov_value_enumerated,
    set_a_sup_surrogate,
    sublevel_escape_sequence,
)
from factcheck.meanfield import boundary_equilibria, mean_field
from factcheck.model import indistinguishable

from .conftest import PI3, interior_pairs, interior_vectors


def brute_distribution(x):
    """g_x by summing over both source signs, one verdict at a time."""
    out = {}
    for r in itertools.product((1, -1), repeat=len(x)):
        p = 0.0
        for s in (1, -1):
            term = 0.5
            for ri, xi in zip(r, x):
                term *= (1 - xi) if ri == s else xi
            p += term
        out[r] = p
    return out


def bern_h(a, x):
    return -a * math.log(x) - (1 - a) * math.log(1 - x)


class TestCPi:
    @given(st.floats(1e-6, 1 - 1e-6))
    def test_single_agent(self, p):
        assert c_pi([p]) == pytest.approx(math.log(0.5), abs=1e-15)

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_uniform(self, n):
        assert c_pi([0.5] * n) == pytest.approx(-n * math.log(2), abs=1e-13)

    def test_against_entropy(self):
        g = brute_distribution(PI3)
        expected = sum(p * math.log(p) for p in g.values())
        assert c_pi(PI3) == pytest.approx(expected, abs=1e-14)

    def test_plug_in_estimate(self):
        g = brute_distribution(PI3)
        r = sample_verdicts(PI3, 10**6, seed=3)
        logs = np.array([math.log(g[tuple(row)]) for row in map(tuple, r[:200_000].tolist())])
        se = logs.std() / math.sqrt(logs.size)
        assert abs(logs.mean() - c_pi(PI3)) <= 4 * se

    @given(interior_vectors(1, 6))
    def test_nonpositive(self, pi):
        assert c_pi(pi) <= 0.0


class TestValue:
    def test_zero_on_s(self, pi3):
        assert lyapunov_value(pi3, pi3) == pytest.approx(0.0, abs=1e-15)
        assert lyapunov_value(1 - pi3, pi3) == pytest.approx(0.0, abs=1e-15)

    def test_positive_off_s(self, pi3):
        for x in ([0.5, 0.5, 0.5], [0.1, 0.2, 0.31], [0.9, 0.2, 0.3]):
            assert lyapunov_value(x, pi3) > 0.0

    def test_brute_force(self):
        x, pi = [0.3, 0.6, 0.15, 0.8], [0.2, 0.1, 0.4, 0.35]
        gx, gp = brute_distribution(x), brute_distribution(pi)
        kl = sum(gp[r] * math.log(gp[r] / gx[r]) for r in gp)
        assert lyapunov_value(x, pi) == pytest.approx(kl, abs=1e-14)

    @given(interior_pairs(1, 6))
    def test_nonnegative_and_symmetric(self, pair):
        x, pi = pair
        v = lyapunov_value(x, pi)
        assert v >= 0.0
        assert lyapunov_value(1 - x, pi) == pytest.approx(v, rel=1e-9, abs=1e-12)

    def test_zero_iff_indistinguishable_on_grid(self, pi3):
        grid = np.linspace(0.05, 0.95, 19)
        for x in itertools.product(grid, repeat=3):
            zero = lyapunov_value(x, pi3) <= 1e-14
            assert zero == indistinguishable(x, pi3, 1e-9)

    def test_boundary_closed_form_matches_enumeration(self, pi3):
        for x in ([0.0, 0.26, 0.34], [1.0, 0.6, 0.2], [0.4, 0.0, 0.7], [0.3, 0.5, 1.0]):
            assert boundary_value(x, pi3) == pytest.approx(lyapunov_value_enumerated(x, pi3), abs=1e-13)

    def test_boundary_is_interior_limit(self, pi3):
        x = np.array([0.0, 0.26, 0.34])
        vals = []
        for eps in (1e-6, 1e-9):
            y = x.copy()
            y[0] = eps
            vals.append(lyapunov_value(y, pi3))
        limit = vals[1] + (vals[1] - vals[0]) * 1e-9 / (1e-6 - 1e-9)
        assert abs(limit - lyapunov_value(x, pi3)) <= 1e-4

    def test_boundary_example_independent(self, pi3):
        # closed form written out by hand for x = (0, 0.26, 0.34)
        expected = c_pi(pi3) + math.log(2) + bern_h(0.74, 0.74) + bern_h(0.66, 0.66)
        assert lyapunov_value([0.0, 0.26, 0.34], pi3) == pytest.approx(expected, abs=1e-14)


class TestGradient:
    def test_zero_at_equilibria(self, pi3):
        assert np.max(np.abs(lyapunov_gradient(pi3, pi3))) <= 1e-14
        assert np.max(np.abs(lyapunov_gradient([0.5] * 3, pi3))) <= 1e-14

    @given(interior_pairs(4, 4, 1e-3, 1 - 1e-3))
    def test_matches_finite_differences(self, pair):
        x, pi = pair
        closed = lyapunov_gradient(x, pi)
        assume(np.max(np.abs(closed)) > 1e-3)  # relative error is undefined at equilibria
        assert np.max(np.abs(closed - fd_gradient(x, pi))) <= 1e-5 * np.max(np.abs(closed))

    def test_boundary_falls_back(self, pi3):
        x = [0.0, 0.4, 0.6]
        np.testing.assert_array_equal(lyapunov_gradient(x, pi3), fd_gradient(x, pi3))


class TestDescent:
    def test_zero_at_pi(self, pi3):
        assert abs(descent_value(pi3, pi3)) <= 1e-30

    @given(interior_pairs(2, 6))
    def test_nonpositive(self, pair):
        x, pi = pair
        assert descent_value(x, pi) <= 1e-14

    @given(interior_vectors(3, 3, 0.01, 0.99))
    def test_strict_off_equilibrium(self, x):
        f = mean_field(x, PI3)
        if np.max(np.abs(f)) > 1e-8:
            assert descent_value(x, PI3) < 0.0

    def test_inner_product(self, pi3):
        x = np.array([0.3, 0.7, 0.45])
        assert descent_value(x, pi3) == pytest.approx(
            float(lyapunov_gradient(x, pi3) @ mean_field(x, pi3)), rel=1e-12
        )

    def test_boundary_coordinate_excluded(self, pi3):
        x = np.array([0.0, 0.5, 0.5])
        f = mean_field(x, pi3)
        assert descent_value(x, pi3) == pytest.approx(-float(np.sum(f[1:] ** 2 / 0.25)), rel=1e-14)


@pytest.fixture(scope="module")
def lc():
    return level_constants(PI3)


class TestLevelConstants:
    def test_positive(self, lc):
        assert np.all(lc.boundary_minima > 0.0)
        assert lc.M_min == lc.boundary_minima.min()

    def test_equilibrium_values(self, lc):
        # at a boundary zero every agreement term sits at its own minimiser
        pi = np.array(PI3)
        base = c_pi(pi) + math.log(2)
        for k, b in enumerate(boundary_equilibria(pi)):
            i = k // 2
            expected = base
            for j in range(3):
                if j != i:
                    a = pi[i] * pi[j] + (1 - pi[i]) * (1 - pi[j])
                    expected += bern_h(a, a)
            assert lc.boundary_equilibrium_values[k] == pytest.approx(expected, abs=1e-13)
            assert lc.boundary_equilibrium_values[k] == pytest.approx(lc.boundary_minima[i], abs=1e-13)

    def test_grid_minimum(self, lc):
        pi = np.array(PI3)
        base = c_pi(pi) + math.log(2)
        grid = np.arange(1, 1000) / 1000.0
        A, B = np.meshgrid(grid, grid, indexing="ij")
        for i in range(3):
            j, k = [m for m in range(3) if m != i]
            best = np.inf
            for e in (0.0, 1.0):
                total = base
                for m, X in ((j, A), (k, B)):
                    a = pi[i] * pi[m] + (1 - pi[i]) * (1 - pi[m])
                    agree = e * X + (1 - e) * (1 - X)
                    total = total - a * np.log(agree) - (1 - a) * np.log(1 - agree)
                best = min(best, float(total.min()))
            assert best == pytest.approx(lc.boundary_minima[i], abs=1e-5)
            assert best >= lc.boundary_minima[i] - 1e-12

    def test_escape_sequence(self, lc):
        level = lc.M_min + 0.01
        points, values = sublevel_escape_sequence(PI3, level)
        i = int(np.argmin(lc.boundary_minima))
        assert np.all(np.diff(points[:, i]) < 0)
        assert values[-1] <= level
        assert np.all(points > 0)


class TestReport:
    def test_json(self, pi3):
        rep = lyapunov_report([0.3, 0.4, 0.2], pi3)
        data = json.loads(rep.to_json())
        assert set(data) == {"x", "region", "V", "gradient", "descent", "residual"}
        assert data["descent"] <= 0
        assert not rep.is_equilibrium

    def test_equilibrium_flag(self, pi3):
        assert lyapunov_report(pi3, pi3).is_equilibrium
        assert lyapunov_report([0.0, 0.26, 0.34], pi3).is_equilibrium

    def test_descent_zero_iff_equilibrium(self, pi3):
        for x in (pi3, [0.5] * 3, [0.2, 0.3, 0.6]):
            rep = lyapunov_report(x, pi3)
            assert (abs(rep.descent) <= 1e-20) == rep.is_equilibrium


def test_set_a_surrogate(pi3):
    value = set_a_sup_surrogate(pi3, samples=2000, seed=0)
    assert value > 0.0
    assert value == set_a_sup_surrogate(pi3, samples=2000, seed=0)
