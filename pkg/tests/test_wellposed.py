import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rk4_flow
from tvwellposed.coefficients import constant_path, linear_path, random_path
from tvwellposed.evolution import LEFT, RIGHT, TimeGrid, build_family
from tvwellposed.statespace import PassiveRealization, random_passive_realization
from tvwellposed.wavelab import wave_preset
from tvwellposed.wellposed import (LaxPhillipsWindow, SampledSignal, energy_ledger,
                                   gronwall_constant, gronwall_envelope, input_map_phi,
                                   io_map_F, lax_phillips_apply, output_map_psi, simulate,
                                   simulate_left, simulate_right, verify_wellposed_axioms)

SCALAR = PassiveRealization([[-1.0]], [[1.0]], [[1.0]], [[0.0]])


def sine_input(grid, m=1, omega=3.0):
    return SampledSignal.from_function(grid, lambda t: np.sin(omega * t + np.arange(m)))


@pytest.fixture(scope="module")
def wave_setup():
    return wave_preset("sine-rho", N_cells=8, eps=0.3, omega=2.0)


class TestSignal:
    def test_truncate_is_half_open(self):
        g = TimeGrid.over(0, 1, 10)
        u = SampledSignal(g, np.arange(11.0)[:, None])
        v = u.truncate(2, 5).values[:, 0]
        assert np.array_equal(v[2:5], [2, 3, 4]) and v[5] == 0 and v[1] == 0

    def test_concatenation(self, rng):
        g = TimeGrid.over(0, 1, 10)
        u = SampledSignal(g, rng.standard_normal((11, 2)))
        joined = u.truncate(0, 4) + u.truncate(4, 10)
        assert np.array_equal(joined.values, u.truncate(0, 10).values)

    def test_norm_trapezoid(self):
        g = TimeGrid.over(0, 1, 100)
        u = SampledSignal.from_function(g, lambda t: [t])
        assert u.norm2() == pytest.approx(1 / 3, abs=1e-4)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            SampledSignal(TimeGrid.over(0, 1, 4), np.zeros((4, 1)))


class TestSimulate:
    def test_scalar_decay(self):
        grid = TimeGrid.over(0, 1, 100)
        tr = simulate_left(SCALAR, constant_path([[1.0]]), grid, [1.0])
        err = np.max(np.abs(tr.x.values[:, 0] - np.exp(-grid.nodes)))
        assert err <= grid.h**2 / 12 * 1.1

    @pytest.mark.parametrize("kind", ["left", "right"])
    def test_against_rk4(self, random6, kind):
        sys, path = random6
        P, G = path.P, path.G
        u_fun = lambda t: np.array([np.sin(3 * t), np.cos(2 * t)])
        if kind == "left":
            f = lambda t, x: np.linalg.solve(P(t), sys.A @ x + sys.B @ u_fun(t)) + G(t) @ x
        else:
            f = lambda t, x: (sys.A @ P(t) + G(t)) @ x + sys.B @ u_fun(t)
        x0 = np.linspace(-1, 1, 6)
        exact = rk4_flow(f, x0, 0.0, 1.0, 2000)
        errs = []
        for N in (50, 100):
            grid = TimeGrid.over(0, 1, N)
            tr = simulate(kind, sys, path, grid, x0, SampledSignal.from_function(grid, u_fun))
            errs.append(np.linalg.norm(tr.x.values[-1] - exact))
        assert 3.0 <= errs[0] / errs[1] <= 5.0
        assert errs[1] <= 50 * (1 / 100) ** 2 * np.linalg.norm(x0)

    def test_identity_P_left_equals_right(self, random6):
        sys, _ = random6
        path = constant_path(np.eye(6), 0.3 * np.eye(6))
        grid = TimeGrid.over(0, 1, 40)
        u = sine_input(grid, 2)
        a = simulate_left(sys, path, grid, np.ones(6), u)
        b = simulate_right(sys, path, grid, np.ones(6), u)
        assert np.array_equal(a.x.values, b.x.values) and np.array_equal(a.y.values, b.y.values)

    def test_bit_identical_rerun(self, random6):
        sys, path = random6
        grid = TimeGrid.over(0, 1, 30)
        a = simulate_right(sys, path, grid, np.ones(6), sine_input(grid, 2))
        b = simulate_right(sys, path, grid, np.ones(6), sine_input(grid, 2))
        assert np.array_equal(a.x.values, b.x.values)

    def test_errors(self, random6):
        sys, path = random6
        with pytest.raises(ValueError):
            simulate_left(sys, path, TimeGrid.over(0, 1, 10), np.ones(5))
        with pytest.raises(ValueError):
            simulate_left(sys, path, TimeGrid.over(0, 2, 10), np.ones(6))
        with pytest.raises(ValueError):
            simulate("middle", sys, path, TimeGrid.over(0, 1, 10), np.ones(6))


class TestMaps:
    @pytest.mark.parametrize("kind", [LEFT, RIGHT])
    def test_quadrature_matches_simulation(self, wave_setup, kind):
        ws = wave_setup
        n = ws.sys.n_state
        x0 = np.sin(np.arange(n) + 1.0)
        errs = {"phi": [], "psi": [], "F": []}
        for N in (40, 80):
            grid = TimeGrid.over(0, 1, N)
            table = build_family(kind, ws.sys.A, ws.path, grid)
            u = sine_input(grid, 1, 5.0)
            tau, t = N // 4, N
            for name, fun, arg in (("phi", input_map_phi, u), ("psi", output_map_psi, x0),
                                   ("F", io_map_F, u)):
                q = fun(kind, ws.sys, ws.path, table, tau, t, arg)
                s = fun(kind, ws.sys, ws.path, table, tau, t, arg, method="simulation")
                if name == "phi":
                    errs[name].append(np.linalg.norm(q - s))
                else:
                    errs[name].append(np.abs(q.values - s.values).max())
        C = (1 + np.linalg.norm(ws.sys.A, 2)) ** 2
        for name, (e1, e2) in errs.items():
            assert e2 <= C * (1 / 80) ** 2, (name, e2)
            assert e2 <= e1 / 3 or e2 <= 1e-13, (name, e1, e2)

    def test_psi_plus_F_is_simulated_output(self, random6):
        sys, path = random6
        grid = TimeGrid.over(0, 1, 40)
        table = build_family(LEFT, sys.A, path, grid)
        x0, u = np.ones(6), sine_input(grid, 2)
        tr = simulate_left(sys, path, grid, x0, u)
        y = (output_map_psi(LEFT, sys, path, table, 0, 40, x0, method="simulation")
             + io_map_F(LEFT, sys, path, table, 0, 40, u, method="simulation"))
        np.testing.assert_allclose(y.values[:40], tr.y.values[:40], atol=1e-12)

    def test_empty_interval(self, random6):
        sys, path = random6
        grid = TimeGrid.over(0, 1, 10)
        table = build_family(LEFT, sys.A, path, grid)
        assert np.all(input_map_phi(LEFT, sys, path, table, 4, 4, None) == 0)
        assert np.all(io_map_F(LEFT, sys, path, table, 4, 4, None).values == 0)
        with pytest.raises(ValueError):
            output_map_psi(LEFT, sys, path, table, 5, 4, np.ones(6))


class TestAxioms:
    @pytest.mark.parametrize("kind", ["left", "right"])
    def test_wave(self, wave_setup, kind):
        ws = wave_setup
        grid = TimeGrid.over(0, 1, 60)
        rep = verify_wellposed_axioms(kind, ws.sys, ws.path, grid, n_probes=50, seed=3)
        assert rep.passed
        assert rep.causality_defect == 0.0
        assert max(rep.phi_defect, rep.psi_defect, rep.F_defect) <= 10 * grid.h**2
        assert rep.shift_defect is None

    def test_shift_invariance(self, random6):
        sys, _ = random6
        path = constant_path(np.diag(np.linspace(1, 2, 6)), 0.1 * np.eye(6))
        rep = verify_wellposed_axioms(LEFT, sys, path, TimeGrid.over(0, 1, 40), n_probes=10)
        assert rep.passed and rep.shift_defect <= 1e-12


class TestLedger:
    def test_exact_for_constant_coefficients(self):
        ws = wave_preset("uniform", N_cells=16)
        grid = TimeGrid.over(0, 1, 100)
        tr = simulate_right(ws.sys, ws.path, grid, np.sin(np.arange(32.0)), sine_input(grid))
        led = energy_ledger(tr, ws.path)
        assert led.max_abs_residual() <= 1e-11 * led.scale

    def test_lossy_core_is_strictly_below(self):
        grid = TimeGrid.over(0, 1, 50)
        tr = simulate_left(SCALAR, linear_path([[1.0]], [[1.0]]), grid, [1.0], sine_input(grid))
        assert energy_ledger(tr, linear_path([[1.0]], [[1.0]])).residual[-1] < -0.1

    def test_second_order_with_moving_P(self, wave_setup):
        ws = wave_setup
        x0 = np.sin(np.arange(16.0))
        res = []
        for N in (100, 200, 400):
            grid = TimeGrid.over(0, 1, N)
            tr = simulate_right(ws.sys, ws.path, grid, x0, sine_input(grid))
            res.append(energy_ledger(tr, ws.path).max_abs_residual())
        assert all(3.5 <= a / b <= 4.5 for a, b in zip(res, res[1:])), res

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_passive_sign(self, seed):
        rng = np.random.default_rng(seed)
        path = random_path(1, rng)
        grid = TimeGrid.over(0, 1, 50)
        u = SampledSignal(grid, rng.standard_normal((51, 1)))
        tr = simulate(rng.choice(["left", "right"]), SCALAR, path, grid, rng.standard_normal(1), u)
        led = energy_ledger(tr, path)
        assert np.max(led.residual) <= 1e-12 * led.scale

    def test_needs_midpoints(self):
        grid = TimeGrid.over(0, 1, 10)
        tr = simulate_left(SCALAR, constant_path([[1.0]]), grid, [1.0], keep_midpoints=False)
        with pytest.raises(ValueError):
            energy_ledger(tr, constant_path([[1.0]]))


class TestGronwall:
    def test_constant_identity(self):
        assert gronwall_constant(constant_path(np.eye(2)), [0.0, 0.5]) == 0.0

    def test_diagonal_matches_dense_route(self, rng):
        d = rng.uniform(0.5, 2.0, 3)
        path = linear_path(np.diag(d), np.diag(d[::-1]), np.diag([0.1, -0.3, 0.2]))
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = linear_path(Q @ np.diag(d) @ Q.T, Q @ np.diag(d[::-1]) @ Q.T,
                              Q @ np.diag([0.1, -0.3, 0.2]) @ Q.T)
        ts = [0.0, 0.4, 1.0]
        assert gronwall_constant(path, ts) == pytest.approx(gronwall_constant(rotated, ts), rel=1e-12)

    def test_scalar_constant(self):
        path = constant_path([[4.0]], [[0.5]])
        assert gronwall_constant(path, [0.0]) == pytest.approx(1.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_envelope_holds(self, seed):
        rng = np.random.default_rng(seed)
        sys = random_passive_realization(3, rng, margin=0.0)
        path = random_path(3, rng)
        grid = TimeGrid.over(0, 1, 40)
        u = SampledSignal(grid, rng.standard_normal((41, 1)))
        tr = simulate(rng.choice(["left", "right"]), sys, path, grid, rng.standard_normal(3), u)
        chk = gronwall_envelope(tr, path)
        assert chk.holds and chk.worst_ratio <= 1 + 1e-10


class TestLaxPhillips:
    @pytest.fixture
    def wave_lti(self):
        ws = wave_preset("uniform", N_cells=8)
        grid = TimeGrid.over(0, 1, 100)
        return ws, grid, build_family(RIGHT, ws.sys.A, ws.path, grid)

    def window(self, rng, n, W=20, h=0.01, t0=0.0):
        return LaxPhillipsWindow(t0, h, rng.standard_normal((W, 1)), rng.standard_normal(n),
                                 rng.standard_normal((W, 1)))

    def test_zero_steps(self, wave_lti, rng):
        ws, grid, table = wave_lti
        w = self.window(rng, 16)
        assert lax_phillips_apply(RIGHT, ws.sys, ws.path, table, w, 0) is w

    def test_composition(self, wave_setup, rng):
        ws = wave_setup
        grid = TimeGrid.over(0, 1, 100)
        table = build_family(LEFT, ws.sys.A, ws.path, grid)
        w = self.window(rng, 16, W=15)
        for a, b in [(3, 4), (10, 25), (20, 1)]:
            two = lax_phillips_apply(LEFT, ws.sys, ws.path, table,
                                     lax_phillips_apply(LEFT, ws.sys, ws.path, table, w, b), a)
            one = lax_phillips_apply(LEFT, ws.sys, ws.path, table, w, a + b)
            assert two.t0 == pytest.approx(one.t0)
            for f in ("y_past", "x", "u_future"):
                np.testing.assert_allclose(getattr(two, f), getattr(one, f), atol=grid.h**2)

    def test_contraction(self, wave_lti, rng):
        ws, grid, table = wave_lti
        w = self.window(rng, 16)
        norms = [w.norm2()]
        for _ in range(40):
            w = lax_phillips_apply(RIGHT, ws.sys, ws.path, table, w, 2)
            norms.append(w.norm2())
        assert all(b <= a + 1e-10 * norms[0] for a, b in zip(norms, norms[1:]))

    def test_alignment_checks(self, wave_lti, rng):
        ws, grid, table = wave_lti
        with pytest.raises(ValueError):
            lax_phillips_apply(RIGHT, ws.sys, ws.path, table, self.window(rng, 16, h=0.02), 1)
        with pytest.raises(ValueError):
            lax_phillips_apply(RIGHT, ws.sys, ws.path, table, self.window(rng, 16, t0=0.005), 1)
        with pytest.raises(ValueError):
            lax_phillips_apply(RIGHT, ws.sys, ws.path, table, self.window(rng, 16, t0=0.99), 5)
