import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rk4_flow
from tvwellposed.coefficients import constant_path, linear_path, random_path, sinusoidal_path
from tvwellposed.evolution import (BASE, LEFT, RIGHT, DivergenceError, GeneratorKind,
                                   PropagatorTable, StepSizeError, TimeGrid, averaged_left,
                                   backward_adjoint_family, build_family,
                                   build_family_from_generator, build_right_family_volterra,
                                   build_V_family, fit_exponential_bound, generator_matrix,
                                   mild_residual, picard_volterra, refinement_study,
                                   step_propagator, sup_distance, trotter_kato_left,
                                   verify_evolution_axioms)
from tvwellposed.statespace import lti_propagator
from tvwellposed.wavelab import WaveMesh1D, build_wave_realization


def scalar_right_exact(t, tau):
    return np.exp(-(t - tau) - (t**2 - tau**2) / 2)


def max_pair_error(table, exact):
    """``max_{i>=j} |T(i,j) - exact(t_i, t_j)|`` for scalar tables."""
    nodes = table.grid.nodes
    worst = 0.0
    for i, R in table.rows():
        worst = max(worst, np.max(np.abs(R[:, 0, 0] - exact(nodes[i], nodes[: i + 1]))))
    return worst


@pytest.fixture
def scalar_P():
    """A = -1 with P(t) = 1 + t on [0, 1], G = 0."""
    return np.array([[-1.0]]), linear_path([[1.0]], [[1.0]])


class TestKinds:
    def test_parse(self):
        assert GeneratorKind.parse("averaged_left(8)") == averaged_left(8)
        assert GeneratorKind.parse("Right") == RIGHT
        with pytest.raises(ValueError):
            GeneratorKind("middle")
        with pytest.raises(ValueError):
            averaged_left(0)

    def test_generator_matrices(self, rng):
        A = rng.standard_normal((3, 3))
        path = random_path(3, rng)
        P, G = path.P(0.3), path.G(0.3)
        np.testing.assert_allclose(generator_matrix(BASE, A, path, 0.3), np.linalg.solve(P, A))
        np.testing.assert_allclose(generator_matrix(LEFT, A, path, 0.3), np.linalg.solve(P, A) + G)
        np.testing.assert_allclose(generator_matrix(RIGHT, A, path, 0.3), A @ P + G)


class TestStep:
    def test_zero(self):
        S = step_propagator(LEFT, np.zeros((2, 2)), constant_path(np.eye(2)), 0.2, 0.1)
        np.testing.assert_array_equal(S, np.eye(2))

    @pytest.mark.parametrize("lam", [-3.0, 0.5, 2.0])
    def test_scalar_cayley(self, lam):
        h = 0.1
        S = step_propagator(LEFT, [[lam]], constant_path([[1.0]]), 0.0, h)
        assert S[0, 0] == pytest.approx((1 + h * lam / 2) / (1 - h * lam / 2), rel=1e-15)

    def test_singular_midpoint(self):
        with pytest.raises(StepSizeError) as exc:
            step_propagator(LEFT, [[2.0]], constant_path([[1.0]], interval=(0, 2)), 0.0, 1.0)
        assert exc.value.suggested_h < 1.0

    def test_outside_interval(self):
        with pytest.raises(ValueError):
            step_propagator(LEFT, [[1.0]], constant_path([[1.0]]), 0.95, 0.1)

    def test_local_error_is_third_order(self, rng):
        A = rng.standard_normal((4, 4))
        path = random_path(4, rng)

        def f(t, y):
            return generator_matrix(LEFT, A, path, t) @ y

        defects = []
        for h in (0.04, 0.02, 0.01):
            S = step_propagator(LEFT, A, path, 0.3, h)
            exact = np.column_stack([rk4_flow(f, e, 0.3, 0.3 + h, 200) for e in np.eye(4)])
            defects.append(np.linalg.norm(S - exact, 2))
        for h, d in zip((0.04, 0.02, 0.01), defects):
            assert d <= 5.0 * h**3 * (1 + np.linalg.norm(A, 2) + 1) ** 3
        ratios = [a / b for a, b in zip(defects, defects[1:])]
        assert all(6.0 <= r <= 10.0 for r in ratios), ratios


class TestBuild:
    def test_unperturbed_matches_exponential(self, rng):
        A = rng.standard_normal((3, 3))
        grid = TimeGrid.over(0, 1, 200)
        T = build_family(LEFT, A, constant_path(np.eye(3)), grid)
        nodes = grid.nodes
        C = np.linalg.norm(A, 2) ** 3
        for i, j in [(200, 0), (150, 20), (77, 76), (100, 100)]:
            d = np.linalg.norm(T(i, j) - lti_propagator(A, nodes[i] - nodes[j]), 2)
            assert d <= C * grid.h**2 * (nodes[i] - nodes[j]) * np.exp(np.linalg.norm(A, 2))

    def test_scalar_right_analytic(self, scalar_P):
        A, path = scalar_P
        grid = TimeGrid.over(0, 1, 100)
        T = build_family(RIGHT, A, path, grid)
        assert max_pair_error(T, scalar_right_exact) <= 1.0 * grid.h**2

    def test_left_equals_right_without_P(self, rng):
        A = rng.standard_normal((3, 3))
        path = constant_path(np.eye(3), rng.standard_normal((3, 3)))
        grid = TimeGrid.over(0, 1, 50)
        assert sup_distance(build_family(LEFT, A, path, grid),
                            build_family(RIGHT, A, path, grid)) <= 1e-13

    def test_grid_outside_path(self):
        with pytest.raises(ValueError):
            build_family(LEFT, [[0.0]], constant_path([[1.0]]), TimeGrid.over(0, 2, 4))


class TestTable:
    @pytest.fixture
    def table(self, rng):
        A = rng.standard_normal((3, 3))
        return build_family(LEFT, A, random_path(3, rng), TimeGrid.over(0, 1, 40))

    def test_identity_is_exact(self, table):
        for i in range(table.N + 1):
            assert np.array_equal(table(i, i), np.eye(3))

    def test_rows_match_accessor(self, table):
        for i, R in table.rows():
            for j in (0, i // 2, i):
                np.testing.assert_allclose(R[j], table(i, j), atol=1e-14)

    def test_propagate_and_accumulate(self, table, rng):
        v = rng.standard_normal(3)
        xs = table.propagate(5, v)
        np.testing.assert_allclose(xs[10], table(15, 5) @ v, atol=1e-14)
        b = rng.standard_normal((table.N + 1, 3))
        acc = table.accumulate(5, b, 20)
        h = table.grid.h
        for i in (6, 13, 20):
            ref = sum(table(i, s) @ b[s] * (0.5 if s in (5, i) else 1.0) for s in range(5, i + 1))
            np.testing.assert_allclose(acc[i - 5], h * ref, atol=1e-13)

    def test_bad_index(self, table):
        with pytest.raises(IndexError):
            table(3, 4)
        with pytest.raises(IndexError):
            table(table.N + 1, 0)

    def test_concurrent_access(self, table):
        expected = {(i, j): table(i, j) for i in range(0, 41, 5) for j in range(0, i + 1, 5)}
        table.clear_cache()
        errors = []

        def worker(order):
            for key in order:
                if not np.array_equal(table(*key), expected[key]):
                    errors.append(key)

        keys = list(expected)
        threads = [threading.Thread(target=worker, args=(keys[::k] + keys,)) for k in (1, -1, 2, -3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors

    @settings(max_examples=30, deadline=None)
    @given(data=st.data())
    def test_composition(self, data):
        seed = data.draw(st.integers(0, 2**31))
        rng = np.random.default_rng(seed)
        T = build_family(LEFT, rng.standard_normal((3, 3)), random_path(3, rng),
                         TimeGrid.over(0, 1, 30))
        k = data.draw(st.integers(0, 30))
        j = data.draw(st.integers(k, 30))
        i = data.draw(st.integers(j, 30))
        Tik = T(i, k)
        assert np.linalg.norm(T(i, j) @ T(j, k) - Tik) <= 1e-12 * max(1, np.linalg.norm(Tik)) * 30

    def test_cache_budget(self, rng):
        A = rng.standard_normal((3, 3))
        grid = TimeGrid.over(0, 1, 40)
        big = build_family(LEFT, A, constant_path(np.eye(3)), grid)
        small = PropagatorTable(grid, big.one_step, cache_bytes=8 * 9 * 30)
        for i, j in [(40, 0), (30, 5), (40, 10), (12, 0), (40, 0)]:
            assert np.array_equal(small(i, j), big(i, j))
            assert small._cached <= 30 or len(small._columns) == 1

    def test_needs_one_layout(self):
        with pytest.raises(ValueError):
            PropagatorTable(TimeGrid(0, 0.1, 2))
        with pytest.raises(ValueError):
            PropagatorTable(TimeGrid(0, 0.1, 2), np.zeros((3, 2, 2)))


class TestAxioms:
    def test_fresh_table(self, rng):
        T = build_family(LEFT, rng.standard_normal((4, 4)), random_path(4, rng),
                         TimeGrid.over(0, 1, 100))
        rep = verify_evolution_axioms(T)
        assert rep.passed and rep.identity_exact
        assert rep.composition_defect <= 1e-12
        assert rep.M >= 1.0

    def test_max_span(self, rng):
        T = build_family(LEFT, rng.standard_normal((3, 3)), random_path(3, rng),
                         TimeGrid.over(0, 1, 100))
        rep = verify_evolution_axioms(T, max_span=5, fit_bound=False)
        i, j, k = rep.worst_triple
        assert rep.passed and i - k <= 5

    def test_decay_rate(self):
        T = build_family(LEFT, -np.eye(2), constant_path(np.eye(2)), TimeGrid.over(0, 1, 1000))
        rep = verify_evolution_axioms(T)
        assert rep.omega == pytest.approx(-1.0, abs=0.05)
        assert rep.M == pytest.approx(1.0, abs=1e-9)

    def test_wave_is_contractive(self):
        sys = build_wave_realization(WaveMesh1D(16), 1.0)
        T = build_family(LEFT, sys.A, constant_path(np.eye(32)), TimeGrid.over(0, 1, 100))
        rep = verify_evolution_axioms(T)
        assert rep.M <= 1 + 1e-6 and rep.omega <= 1e-6

    def test_fit_envelope_holds(self):
        norms = np.exp(0.3 * np.arange(11) * 0.1) * (1 + 0.2 * np.sin(np.arange(11)))
        norms[0] = 1.0
        M, w = fit_exponential_bound(norms, 0.1)
        assert M >= 1
        assert np.all(norms <= M * np.exp(w * 0.1 * np.arange(11)) * (1 + 1e-12))

    def test_bound_uniform_in_n(self, rng):
        A = rng.standard_normal((4, 4))
        A = A - A.T - 0.3 * np.eye(4)
        path = random_path(4, rng)
        grid = TimeGrid.over(0, 1, 200)
        study = trotter_kato_left(A, path, grid, [2, 4, 8, 16, 32], fit_bounds=True)
        Ms = np.array([b[0] for b in study.bounds])
        ws = np.array([b[1] for b in study.bounds])
        assert np.ptp(Ms) <= 0.1 * Ms.max()
        assert np.ptp(ws) <= 0.1 * max(np.abs(ws).max(), 1.0)

    def test_refinement_order(self, rng):
        A = rng.standard_normal((3, 3))
        study = refinement_study(LEFT, A, random_path(3, rng), TimeGrid.over(0, 1, 20))
        assert 1.7 <= study.slope <= 2.3


class TestPicard:
    def test_no_perturbation(self, rng):
        A = rng.standard_normal((3, 3))
        grid = TimeGrid.over(0, 1, 50)
        path = constant_path(np.eye(3))
        U = build_family(BASE, A, path, grid)
        T = picard_volterra(U, path)
        assert T.meta["corrections"] == [[0.0]]
        assert sup_distance(T, U) == 0.0

    def test_scalar_exponential(self):
        gamma = 0.8
        grid = TimeGrid.over(0, 1, 200)
        path = constant_path([[1.0]], [[gamma]])
        T = picard_volterra(build_family(BASE, [[0.0]], path, grid), path)
        err = max_pair_error(T, lambda t, tau: np.exp(gamma * (t - tau)))
        assert err <= gamma**2 * np.exp(gamma) * grid.h**2

    def test_matches_direct_stepping(self, rng):
        A = rng.standard_normal((4, 4))
        path = random_path(4, rng)
        grid = TimeGrid.over(0, 1, 200)
        T = picard_volterra(build_family(BASE, A, path, grid), path)
        d = sup_distance(T, build_family(LEFT, A, path, grid))
        assert d <= 5 * grid.h**2 * (1 + np.linalg.norm(A, 2) + 1) ** 2

    def test_windows_are_composed(self, rng):
        A = rng.standard_normal((3, 3))
        path = random_path(3, rng, g_scale=4.0)
        grid = TimeGrid.over(0, 1, 120)
        T = picard_volterra(build_family(BASE, A, path, grid), path)
        assert len(T.meta["segment_bounds"]) > 2
        rep = verify_evolution_axioms(T, tol=1e-11)
        assert rep.passed
        scale = 1 + np.linalg.norm(A, 2) + 4.0
        assert sup_distance(T, build_family(LEFT, A, path, grid)) <= 5 * grid.h**2 * scale**2

    def test_divergence_is_reported(self, rng):
        path = random_path(2, rng)
        U = build_family(BASE, -np.eye(2), path, TimeGrid.over(0, 1, 20))
        with pytest.raises(DivergenceError) as exc:
            picard_volterra(U, path, max_iter=2)
        assert exc.value.last_correction > 0


class TestAveraging:
    def test_constant_G(self, rng):
        A = rng.standard_normal((3, 3))
        path = constant_path(np.eye(3), rng.standard_normal((3, 3)))
        study = trotter_kato_left(A, path, TimeGrid.over(0, 1, 50), [1, 2, 4])
        assert max(study.errors) <= 1e-12

    def test_zero_G(self, rng):
        A = rng.standard_normal((3, 3))
        path = linear_path(np.eye(3), 0.3 * np.eye(3))
        study = trotter_kato_left(A, path, TimeGrid.over(0, 1, 50), [1, 3])
        assert max(study.errors) == 0.0

    def test_sine_G(self, rng):
        A = rng.standard_normal((3, 3))
        M = rng.standard_normal((3, 3))
        path = sinusoidal_path(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), M)
        n_list = [2, 4, 8, 16, 32]
        study = trotter_kato_left(A, path, TimeGrid.over(0, 1, 100), n_list)
        assert study.non_increasing(0.10)
        assert study.slope <= -0.8
        scaled = [n * e for n, e in zip(n_list, study.errors)]
        assert max(scaled) <= 2 * min(scaled)

    def test_bad_n_list(self, rng):
        with pytest.raises(ValueError):
            trotter_kato_left(np.eye(1), constant_path([[1.0]]), TimeGrid.over(0, 1, 4), [4, 2])


class TestRightFamilies:
    def test_V_without_P(self, rng):
        A = rng.standard_normal((3, 3))
        path = constant_path(np.eye(3), rng.standard_normal((3, 3)))
        grid = TimeGrid.over(0, 1, 40)
        assert sup_distance(build_V_family(A, path, grid), build_family(LEFT, A, path, grid)) <= 1e-13

    def test_V_generator(self, scalar_P):
        A, path = scalar_P
        grid = TimeGrid.over(0, 1, 100)
        V = build_V_family(A, path, grid)
        ref = build_family_from_generator(
            lambda t: A @ path.P(t) - np.linalg.solve(path.P(t), path.Pdot(t)), grid)
        assert sup_distance(V, ref) <= 2.0 * grid.h**2

    def test_V_conjugation(self, rng):
        A = rng.standard_normal((3, 3))
        path = random_path(3, rng)
        grid = TimeGrid.over(0, 1, 30)
        V = build_V_family(A, path, grid)
        inner = V.meta["inner"]
        for i, j in [(30, 0), (17, 9), (5, 4)]:
            Ti, Tj = path.P(grid.t(i)), path.P(grid.t(j))
            np.testing.assert_allclose(Ti @ V(i, j) @ np.linalg.inv(Tj), inner(i, j), atol=1e-13)

    def test_constant_P_volterra_is_V(self, rng):
        A = rng.standard_normal((3, 3))
        path = constant_path(np.diag([1.0, 2.0, 0.5]), rng.standard_normal((3, 3)))
        grid = TimeGrid.over(0, 1, 40)
        Tr = build_right_family_volterra(A, path, grid)
        assert Tr.meta["corrections"] == [[0.0]]
        assert sup_distance(Tr, build_V_family(A, path, grid)) <= 1e-14

    def test_scalar_volterra_analytic(self, scalar_P):
        A, path = scalar_P
        grid = TimeGrid.over(0, 1, 100)
        Tr = build_right_family_volterra(A, path, grid)
        assert max_pair_error(Tr, scalar_right_exact) <= 2.0 * grid.h**2

    def test_volterra_matches_stepping(self, rng):
        A = rng.standard_normal((4, 4))
        path = random_path(4, rng)
        grid = TimeGrid.over(0, 1, 100)
        d = sup_distance(build_right_family_volterra(A, path, grid), build_family(RIGHT, A, path, grid))
        assert d <= 5 * grid.h**2 * (1 + np.linalg.norm(A, 2) + 1) ** 2

    def test_backward_adjoint_normal_A(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        A = Q @ np.diag([-1.0, -0.5, 0.2]) @ Q.T
        grid = TimeGrid.over(0, 1, 50)
        S = backward_adjoint_family(A, constant_path(np.eye(3)), grid)
        for i, j in [(50, 0), (30, 10)]:
            d = np.linalg.norm(S(i, j) - lti_propagator(A, grid.h * (i - j)), 2)
            assert d <= grid.h**2

    def test_backward_adjoint_scalar(self, scalar_P):
        A, path = scalar_P
        grid = TimeGrid.over(0, 1, 100)
        S = backward_adjoint_family(A, path, grid)
        assert max_pair_error(S, scalar_right_exact) <= 1.0 * grid.h**2

    def test_backward_adjoint_matches_right(self, rng):
        A = rng.standard_normal((4, 4))
        path = random_path(4, rng)
        grid = TimeGrid.over(0, 1, 60)
        d = sup_distance(backward_adjoint_family(A, path, grid), build_family(RIGHT, A, path, grid))
        assert d <= grid.h**2


class TestMild:
    def test_zero_generator(self):
        grid = TimeGrid.over(0, 1, 20)
        path = constant_path(np.eye(2))
        T = build_family(LEFT, np.zeros((2, 2)), path, grid)
        assert np.all(mild_residual(T, LEFT, np.zeros((2, 2)), path, [1.0, -2.0]) == 0.0)

    def test_constant_generator_is_roundoff(self):
        # Cayley stepping is the trapezoid rule for a constant generator, so
        # the discrete mild identity holds to round-off.
        sys = build_wave_realization(WaveMesh1D(8), 1.0)
        path = constant_path(np.eye(16))
        T = build_family(RIGHT, sys.A, path, TimeGrid.over(0, 1, 40))
        x0 = np.sin(np.arange(16))
        assert mild_residual(T, RIGHT, sys.A, path, x0).max() <= 1e-12 * np.linalg.norm(sys.A, 2)

    def test_scalar_quarters(self, scalar_P):
        A, path = scalar_P
        res = []
        for N in (20, 40, 80):
            T = build_family(LEFT, A, path, TimeGrid.over(0, 1, N))
            res.append(mild_residual(T, LEFT, A, path, [1.0]).max())
        assert res[0] <= 1.0 * (1 / 20) ** 2
        assert all(3.6 <= a / b <= 4.4 for a, b in zip(res, res[1:]))
