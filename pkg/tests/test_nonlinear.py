import numpy as np
import pytest

from annulab.elliptic import LinearCoefficients, ellipticity_constants, solve_linear_dirichlet
from annulab.grid import UNIFORM_RADIAL, ScalarField, build_grid, hessian
from annulab.nonlinear import (
    FullyNonlinearSpec,
    NewtonError,
    monge_ampere_spec,
    newton_solve,
    radial_ma_reference,
    special_lagrangian_spec,
)


def reference_boundary(a, grid):
    u_in, _, _ = radial_ma_reference(a, grid.radii[0])
    u_out, _, _ = radial_ma_reference(a, grid.radii[-1])
    return float(u_in), float(u_out)


def random_symmetric(rng, norm_cap, det_one=False):
    """Eigenvalues in [1/cap, cap] with a random rotation."""
    lam1 = rng.uniform(1.0 / norm_cap, norm_cap)
    lam2 = 1.0 / lam1 if det_one else rng.uniform(1.0 / norm_cap, norm_cap)
    phi = rng.uniform(0.0, np.pi)
    c, s = np.cos(phi), np.sin(phi)
    m11 = c * c * lam1 + s * s * lam2
    m22 = s * s * lam1 + c * c * lam2
    m12 = c * s * (lam1 - lam2)
    return m11, m12, m22


class TestOperatorSpecs:
    def test_monge_ampere_trivial_roots(self):
        spec = monge_ampere_spec()
        assert spec.evaluate(1.0, 0.0, 1.0) == 0.0
        assert spec.evaluate(2.0, 0.0, 0.5) == 0.0

    def test_monge_ampere_derivative_is_cofactor(self):
        spec = monge_ampere_spec()
        d11, d12, d22 = spec.derivative(2.0, 0.0, 0.5)
        assert (d11, d12, d22) == (0.5, 0.0, 2.0)
        d11, d12, d22 = spec.derivative(3.0, 0.7, 1.0)
        assert (d11, d12, d22) == (1.0, -0.7, 3.0)

    def test_monge_ampere_derivative_eigenvalue_window(self):
        spec = monge_ampere_spec()
        rng = np.random.default_rng(7)
        for _ in range(200):
            m11, m12, m22 = random_symmetric(rng, spec.hessian_bound, det_one=True)
            a11, a12, a22 = spec.derivative(m11, m12, m22)
            mean = 0.5 * (a11 + a22)
            rad = np.hypot(0.5 * (a11 - a22), a12)
            assert mean - rad >= spec.lam - 1e-12
            assert mean + rad <= spec.Lam + 1e-12

    def test_special_lagrangian_trivial_roots(self):
        spec = special_lagrangian_spec(np.pi / 2)
        assert abs(spec.evaluate(1.0, 0.0, 1.0)) <= 1e-15
        assert abs(spec.evaluate(2.0, 0.0, 0.5)) <= 1e-15

    def test_special_lagrangian_odd_symmetry(self):
        spec = special_lagrangian_spec(0.0)
        for t in (0.1, 1.0, 7.5, 300.0):
            assert spec.evaluate(t, 0.0, -t) == 0.0

    def test_special_lagrangian_rotation_invariance(self):
        spec = special_lagrangian_spec(0.3)
        rng = np.random.default_rng(11)
        for _ in range(50):
            m11, m12, m22 = random_symmetric(rng, 3.0)
            mean = 0.5 * (m11 + m22)
            rad = np.hypot(0.5 * (m11 - m22), m12)
            direct = np.arctan(mean + rad) + np.arctan(mean - rad) - 0.3
            assert abs(spec.evaluate(m11, m12, m22) - direct) <= 1e-14

    def test_special_lagrangian_derivative_eigenvalue_window(self):
        spec = special_lagrangian_spec(np.pi / 2)
        rng = np.random.default_rng(13)
        for _ in range(200):
            m11, m12, m22 = random_symmetric(rng, spec.hessian_bound)
            a11, a12, a22 = spec.derivative(m11, m12, m22)
            mean = 0.5 * (a11 + a22)
            rad = np.hypot(0.5 * (a11 - a22), a12)
            assert mean - rad >= spec.lam - 1e-12
            assert mean + rad <= spec.Lam + 1e-12

    def test_special_lagrangian_derivative_smooth_at_coalescence(self):
        # the divided difference hands off to its analytic limit; the two
        # branches must agree across the threshold
        spec = special_lagrangian_spec(0.0)
        for mean in (-1.3, 0.0, 0.8):
            above = spec.derivative(mean + 3e-8, 0.0, mean - 3e-8)
            below = spec.derivative(mean + 3e-9, 0.0, mean - 3e-9)
            exact = 1.0 / (1.0 + mean * mean)
            for d in (above, below):
                assert abs(0.5 * (d[0] + d[2]) - exact) <= 1e-7
                assert abs(d[1]) <= 1e-15
            # off-diagonal route through the limit as well
            d = spec.derivative(mean, 1e-9, mean)
            assert abs(d[0] - exact) <= 1e-7

    def test_special_lagrangian_phase_validation(self):
        with pytest.raises(ValueError, match="singular-input"):
            special_lagrangian_spec(np.pi)
        with pytest.raises(ValueError, match="singular-input"):
            special_lagrangian_spec(-3.5)

    def test_monge_ampere_bound_validation(self):
        with pytest.raises(ValueError, match="singular-input"):
            monge_ampere_spec(hessian_bound=0.5)


class TestRadialReference:
    def test_zero_parameter_is_pure_quadratic(self):
        r = np.linspace(1.0, 20.0, 77)
        u, up, upp = radial_ma_reference(0.0, r)
        assert np.array_equal(u, 0.5 * r * r)
        assert np.array_equal(up, r)
        assert np.array_equal(upp, np.ones_like(r))

    def test_determinant_identity(self):
        r = np.linspace(1.0, 50.0, 1001)
        for a in (0.5, 1.0, 2.0):
            u, up, upp = radial_ma_reference(a, r)
            assert np.max(np.abs(upp * up / r - 1.0)) <= 1e-14

    def test_far_field_constant_term(self):
        # u - r^2/2 - (a/2) log r -> a/4 + (a/2) log 2, remainder O(r^-2)
        r = 1e3
        u, _, _ = radial_ma_reference(2.0, np.array([r]))
        c = float(u[0]) - 0.5 * r * r - np.log(r)
        assert abs(c - (0.5 + np.log(2.0))) <= 1e-6

    def test_derivative_consistency(self):
        r = np.linspace(1.0, 8.0, 2001)
        u, up, upp = radial_ma_reference(1.5, r)
        dr = r[1] - r[0]
        mid_up = (u[2:] - u[:-2]) / (2.0 * dr)
        assert np.max(np.abs(mid_up - up[1:-1])) <= 5e-6
        mid_upp = (up[2:] - up[:-2]) / (2.0 * dr)
        assert np.max(np.abs(mid_upp - upp[1:-1])) <= 5e-6

    def test_input_validation(self):
        with pytest.raises(ValueError, match="singular-input"):
            radial_ma_reference(-0.5, 2.0)
        with pytest.raises(ValueError, match="invalid-radii"):
            radial_ma_reference(1.0, 0.0)
        with pytest.raises(ValueError, match="invalid-radii"):
            radial_ma_reference(1.0, np.array([1.0, -2.0]))


class TestNewtonSolve:
    def test_affine_operator_lands_on_linear_solve(self):
        # F(M) = tr M - 2: the first full step reproduces the direct solve,
        # any further step only polishes rounding
        grid = build_grid(1.0, 4.0, 33, 32)
        spec = FullyNonlinearSpec(
            name="trace-shift",
            evaluate=lambda m11, m12, m22: m11 + m22 - 2.0,
            derivative=lambda m11, m12, m22: (
                np.ones_like(m11), np.zeros_like(m12), np.ones_like(m22)),
            lam=1.0,
            Lam=1.0,
            hessian_bound=10.0,
        )

        def target(x1, x2):
            return 0.5 * (x1 * x1 + x2 * x2) + x1

        g_in = target(*grid.nodes())[0]
        g_out = target(*grid.nodes())[-1]
        u, trace = newton_solve(spec, grid, g_in, g_out)
        assert trace.steps[0] == 1.0
        assert trace.iterations <= 2
        coeffs = LinearCoefficients.trace_operator(grid)
        f = ScalarField(grid, np.full(grid.shape, 2.0))
        direct = solve_linear_dirichlet(coeffs, f, g_in, g_out)
        assert np.max(np.abs(u.values - direct.values)) <= 1e-9

    def test_monge_ampere_radial_family(self):
        grid = build_grid(1.0, 16.0, 128, 64)
        g_in, g_out = reference_boundary(1.0, grid)
        u, trace = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
        assert trace.residuals[-1] < 1e-10
        assert trace.iterations <= 12
        u_ref, _, _ = radial_ma_reference(1.0, grid.radii)
        assert np.max(np.abs(u.values - u_ref[:, None])) <= 2e-2

    def test_monge_ampere_second_order_under_doubling(self):
        errs = []
        for n_r, n_theta in ((65, 32), (129, 64), (257, 128)):
            grid = build_grid(1.0, 16.0, n_r, n_theta)
            g_in, g_out = reference_boundary(1.0, grid)
            u, trace = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
            assert trace.residuals[-1] < 1e-10
            u_ref, _, _ = radial_ma_reference(1.0, grid.radii)
            errs.append(float(np.max(np.abs(u.values - u_ref[:, None]))))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
        assert min(orders) >= 1.8
        assert errs[-1] <= 3e-3

    def test_residuals_non_increasing(self):
        grid = build_grid(1.0, 16.0, 65, 32)
        g_in, g_out = reference_boundary(2.0, grid)
        _, trace = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
        diffs = np.diff(np.asarray(trace.residuals))
        assert np.all(diffs < 0.0)
        assert all(s in (1.0, 0.5, 0.25, 0.125) or s <= 0.125 for s in trace.steps)

    def test_converged_hessian_positive_definite(self):
        grid = build_grid(1.0, 16.0, 97, 48)
        g_in, g_out = reference_boundary(2.0, grid)
        u, _ = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
        h = hessian(u)
        det = h.m11 * h.m22 - h.m12 ** 2
        assert np.all(det > 0.0)
        assert np.all(h.m11 + h.m22 > 0.0)

    def test_converged_linearization_gamma_bound(self):
        # cofactor coefficients of the radial family: gamma(r) = 1 + a/r^2
        a = 1.0
        grid = build_grid(1.0, 16.0, 129, 64)
        g_in, g_out = reference_boundary(a, grid)
        u, _ = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
        h = hessian(u)
        lam, Lam, gamma = ellipticity_constants(
            h.m22[1:-1], -h.m12[1:-1], h.m11[1:-1])
        assert lam > 0.0
        assert gamma <= (1.0 + a) + 0.05

    def test_special_lagrangian_matches_monge_ampere(self):
        grid = build_grid(1.0, 16.0, 129, 64)
        g_in, g_out = reference_boundary(1.0, grid)
        u_ma, _ = newton_solve(monge_ampere_spec(), grid, g_in, g_out)
        u_sl, trace = newton_solve(special_lagrangian_spec(np.pi / 2), grid, g_in, g_out)
        assert trace.residuals[-1] < 1e-10
        assert np.max(np.abs(u_ma.values - u_sl.values)) <= 1e-8

    def test_zero_iterations_when_already_converged(self):
        # r^2/2 is stencil-exact on the uniform spacing, so the start is a
        # discrete root and the loop never runs
        grid = build_grid(1.0, 4.0, 33, 24, spacing=UNIFORM_RADIAL)
        vals = 0.5 * grid.radii[:, None] ** 2 * np.ones((1, grid.n_theta))
        u0 = ScalarField(grid, vals)
        g_in = float(0.5 * grid.radii[0] ** 2)
        g_out = float(0.5 * grid.radii[-1] ** 2)
        u, trace = newton_solve(monge_ampere_spec(), grid, g_in, g_out, u0=u0)
        assert trace.iterations == 0
        assert trace.residuals[0] <= 1e-11
        assert np.max(np.abs(u.values - vals)) <= 1e-13

    def test_max_iters_exceeded_carries_trace(self):
        grid = build_grid(1.0, 16.0, 65, 32)
        g_in, g_out = reference_boundary(1.0, grid)
        with pytest.raises(NewtonError, match="max-iters-exceeded") as info:
            newton_solve(monge_ampere_spec(), grid, g_in, g_out, max_iters=1)
        assert len(info.value.trace.residuals) == 2
        assert len(info.value.trace.steps) == 1

    def test_ellipticity_lost_on_hyperbolic_operator(self):
        # indefinite derivative everywhere: the iteration can only stall or
        # converge off the elliptic branch, both of which must raise
        grid = build_grid(1.0, 4.0, 17, 16)
        spec = FullyNonlinearSpec(
            name="hyperbolic",
            evaluate=lambda m11, m12, m22: m11 - m22,
            derivative=lambda m11, m12, m22: (
                np.ones_like(m11), np.zeros_like(m12), -np.ones_like(m22)),
            lam=-1.0,
            Lam=1.0,
            hessian_bound=10.0,
        )
        with pytest.raises(NewtonError, match="ellipticity-lost") as info:
            newton_solve(spec, grid, 0.0, 0.0, max_iters=60)
        assert len(info.value.trace.residuals) >= 1

    def test_concave_start_recovers_convex_branch(self):
        # the radial lift of the boundary mismatch plus the clamped step
        # computation walk a concave start back onto the convex branch
        grid = build_grid(1.0, 4.0, 33, 24)
        g_in, g_out = reference_boundary(1.0, grid)
        vals = -0.5 * grid.radii[:, None] ** 2 * np.ones((1, grid.n_theta))
        u0 = ScalarField(grid, vals)
        u, trace = newton_solve(monge_ampere_spec(), grid, g_in, g_out,
                                u0=u0, max_iters=80)
        assert trace.residuals[-1] <= 1e-10
        h = hessian(u)
        assert np.all(h.m11 * h.m22 - h.m12 ** 2 > 0.0)
        assert np.all(h.m11 + h.m22 > 0.0)

    def test_input_validation(self):
        grid = build_grid(1.0, 4.0, 33, 24)
        other = build_grid(1.0, 4.0, 25, 24)
        spec = monge_ampere_spec()
        u0 = ScalarField(other, np.ones(other.shape))
        with pytest.raises(ValueError, match="invalid-dimension"):
            newton_solve(spec, grid, 0.0, 0.0, u0=u0)
        with pytest.raises(ValueError, match="singular-input"):
            newton_solve(spec, grid, 0.0, 0.0, tol=-1.0)
        with pytest.raises(ValueError, match="singular-input"):
            newton_solve(spec, grid, 0.0, 0.0, max_iters=0)
        with pytest.raises(ValueError, match="invalid-dimension"):
            newton_solve(spec, grid, np.zeros(7), 0.0)
