import math

import numpy as np
import pytest

from annulab.grid import (
    LOG_RADIAL,
    UNIFORM_RADIAL,
    PlanarMapping,
    ScalarField,
    annulus_integral,
    build_grid,
    circle_flux_integral,
    gradient,
    hessian,
    kelvin_point,
    laplacian,
    read_snapshot,
    write_snapshot,
)


def observed_order(errs):
    """Least-squares slope of log2(err) against refinement level."""
    levels = np.arange(len(errs))
    return -np.polyfit(levels, np.log2(errs), 1)[0]


# ---------------------------------------------------------------------------
# construction and validation


def test_build_grid_log_spacing_ratio_constant():
    g = build_grid(1.0, 64.0, 32, 16)
    ratios = g.radii[1:] / g.radii[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert g.radii[0] == 1.0 and g.radii[-1] == 64.0


def test_build_grid_uniform_spacing():
    g = build_grid(1.0, 4.0, 16, 16, UNIFORM_RADIAL)
    assert np.allclose(np.diff(g.radii), g.radii[1] - g.radii[0], rtol=1e-12)


@pytest.mark.parametrize(
    "args,msg",
    [
        ((0.0, 4.0, 16, 16), "invalid-radii"),
        ((2.0, 1.0, 16, 16), "invalid-radii"),
        ((1.0, 4.0, 4, 16), "invalid-dimension"),
        ((1.0, 4.0, 16, 8), "invalid-dimension"),
        ((1.0, 4.0, 16, 17), "invalid-dimension"),
    ],
)
def test_build_grid_rejects_bad_input(args, msg):
    with pytest.raises(ValueError, match=msg):
        build_grid(*args)


def test_field_rejects_nonfinite():
    g = build_grid(1.0, 4.0, 8, 16)
    vals = np.zeros(g.shape)
    vals[3, 5] = np.nan
    with pytest.raises(ValueError, match="singular-input"):
        ScalarField(g, vals)


# ---------------------------------------------------------------------------
# kelvin point map


def test_kelvin_point_worked_value():
    assert np.allclose(kelvin_point([3.0, 4.0]), [0.12, 0.16], atol=1e-15)


def test_kelvin_point_involution_machine_precision():
    rng = np.random.default_rng(7)
    x = rng.uniform(-10, 10, size=(500, 2))
    x = x[np.hypot(x[:, 0], x[:, 1]) > 1e-3]
    back = kelvin_point(kelvin_point(x))
    assert np.max(np.abs(back - x)) <= 1e-12 * np.max(np.abs(x))


def test_kelvin_point_rejects_origin():
    with pytest.raises(ValueError, match="singular-input"):
        kelvin_point([0.0, 0.0])


# ---------------------------------------------------------------------------
# derivatives


def test_gradient_of_quadratic_is_identity_map():
    g = build_grid(1.0, 4.0, 64, 64)
    x1, x2 = g.nodes()
    u = ScalarField(g, 0.5 * (x1 ** 2 + x2 ** 2))
    w = gradient(u)
    err = np.max(np.hypot(w.p - x1, w.q - x2))
    assert err < 5e-3  # C * h^2 at this resolution


def test_gradient_convergence_order_quadratic():
    errs = []
    for n in (64, 128, 256):
        g = build_grid(1.0, 4.0, n, n)
        x1, x2 = g.nodes()
        u = ScalarField(g, 0.5 * (x1 ** 2 + x2 ** 2))
        w = gradient(u)
        errs.append(np.max(np.hypot(w.p - x1, w.q - x2)))
    assert observed_order(errs) >= 1.9


def test_gradient_of_log_is_kelvin_map():
    # log-radial grids difference log|x| exactly in the radial direction
    g = build_grid(1.0, 8.0, 32, 32)
    x1, x2 = g.nodes()
    r2 = x1 ** 2 + x2 ** 2
    u = ScalarField(g, 0.5 * np.log(r2))
    w = gradient(u)
    assert np.max(np.hypot(w.p - x1 / r2, w.q - x2 / r2)) < 1e-12


def test_hessian_of_quadratic():
    g = build_grid(1.0, 4.0, 64, 64)
    x1, x2 = g.nodes()
    u = ScalarField(g, 0.5 * (x1 ** 2 + x2 ** 2))
    h = hessian(u)
    err = max(
        np.max(np.abs(h.m11 - 1.0)),
        np.max(np.abs(h.m12)),
        np.max(np.abs(h.m22 - 1.0)),
    )
    assert err < 5e-3


def test_hessian_of_log_closed_form():
    g = build_grid(1.0, 8.0, 48, 48)
    x1, x2 = g.nodes()
    r2 = x1 ** 2 + x2 ** 2
    u = ScalarField(g, 0.5 * np.log(r2))
    h = hessian(u)
    # D^2 log|x| = (I |x|^2 - 2 x x^T) / |x|^4
    e11 = (r2 - 2 * x1 ** 2) / r2 ** 2
    e12 = -2 * x1 * x2 / r2 ** 2
    e22 = (r2 - 2 * x2 ** 2) / r2 ** 2
    err = max(
        np.max(np.abs(h.m11 - e11)),
        np.max(np.abs(h.m12 - e12)),
        np.max(np.abs(h.m22 - e22)),
    )
    assert err < 2e-4


def test_hessian_convergence_order_on_smooth_field():
    errs = []
    for n in (32, 64, 128):
        g = build_grid(1.0, 4.0, n, n)
        x1, x2 = g.nodes()
        r2 = x1 ** 2 + x2 ** 2
        u = ScalarField(g, x1 / r2)
        h = hessian(u)
        # symbolic oracle, frozen: second derivatives of x1/|x|^2
        e11 = 2 * x1 * (x1 ** 2 - 3 * x2 ** 2) / r2 ** 3
        e12 = 2 * x2 * (3 * x1 ** 2 - x2 ** 2) / r2 ** 3
        e22 = -e11
        errs.append(
            max(
                np.max(np.abs(h.m11 - e11)),
                np.max(np.abs(h.m12 - e12)),
                np.max(np.abs(h.m22 - e22)),
            )
        )
    assert observed_order(errs) >= 1.8


def test_hessian_oracle_matches_sympy():
    # derive the frozen closed forms above independently
    sympy = pytest.importorskip("sympy")
    x, y = sympy.symbols("x y", real=True)
    u = x / (x ** 2 + y ** 2)
    e11 = sympy.simplify(sympy.diff(u, x, x) - 2 * x * (x ** 2 - 3 * y ** 2) / (x ** 2 + y ** 2) ** 3)
    e12 = sympy.simplify(sympy.diff(u, x, y) - 2 * y * (3 * x ** 2 - y ** 2) / (x ** 2 + y ** 2) ** 3)
    assert e11 == 0 and e12 == 0


def test_laplacian_polynomial_symbolic_oracle():
    # u = x1^2 x2 has Laplacian 2 x2; check the value and the O(h^2) rate
    errs = []
    for n in (64, 128, 256):
        g = build_grid(1.0, 4.0, n, n)
        x1, x2 = g.nodes()
        lap = laplacian(ScalarField(g, x1 ** 2 * x2))
        errs.append(np.max(np.abs(lap.values - 2 * x2)))
    assert errs[0] < 0.1
    assert observed_order(errs) >= 1.8


def test_laplacian_of_harmonic_fields_is_small():
    g = build_grid(1.0, 8.0, 64, 64)
    x1, x2 = g.nodes()
    r2 = x1 ** 2 + x2 ** 2
    for vals in (x1, 0.5 * np.log(r2), x1 / r2, x1 ** 2 - x2 ** 2):
        lap = laplacian(ScalarField(g, vals))
        scale = max(1.0, np.max(np.abs(vals)))
        assert np.max(np.abs(lap.values)) < 2e-3 * scale


def test_hessian_trace_equals_laplacian():
    g = build_grid(1.0, 16.0, 48, 32)
    x1, x2 = g.nodes()
    u = ScalarField(g, x1 ** 2 * x2 + np.log(x1 ** 2 + x2 ** 2) + x1)
    h = hessian(u)
    lap = laplacian(u)
    tr = h.trace()
    denom = np.maximum(np.abs(lap.values), 1.0)
    assert np.max(np.abs(tr - lap.values) / denom) < 1e-10


@pytest.mark.parametrize("spacing", [LOG_RADIAL, UNIFORM_RADIAL])
def test_derivatives_both_spacings(spacing):
    g = build_grid(1.0, 4.0, 96, 128, spacing)
    x1, x2 = g.nodes()
    u = ScalarField(g, x1 ** 3 + x2 ** 2)
    w = gradient(u)
    assert np.max(np.abs(w.p - 3 * x1 ** 2)) < 0.05
    assert np.max(np.abs(w.q - 2 * x2)) < 0.05


# ---------------------------------------------------------------------------
# quadrature


def test_flux_of_kelvin_field_is_2pi():
    g = build_grid(1.0, 8.0, 16, 128)
    w = PlanarMapping.from_function(
        g, lambda x1, x2: (x1 / (x1 ** 2 + x2 ** 2), x2 / (x1 ** 2 + x2 ** 2))
    )
    for radius in (1.0, g.radii[7], 8.0):
        assert abs(circle_flux_integral(w, radius) - 2 * math.pi) < 1e-12


def test_flux_of_identity_field():
    g = build_grid(1.0, 8.0, 16, 64)
    w = PlanarMapping.from_function(g, lambda x1, x2: (x1, x2))
    r = g.radii[5]
    assert abs(circle_flux_integral(w, r) - 2 * math.pi * r ** 2) < 1e-10 * r ** 2


def test_flux_of_constant_field_vanishes():
    g = build_grid(1.0, 8.0, 16, 64)
    w = PlanarMapping.from_function(g, lambda x1, x2: (np.full_like(x1, 2.0), np.full_like(x2, -1.0)))
    assert abs(circle_flux_integral(w, g.radii[3])) < 1e-12


def test_flux_radius_independent_for_harmonic_gradient():
    # spectral accuracy of the periodic trapezoid: the flux of grad(log|x|+x1)
    # is 2*pi on every ring
    g = build_grid(1.0, 32.0, 24, 48)
    w = PlanarMapping.from_function(
        g,
        lambda x1, x2: (x1 / (x1 ** 2 + x2 ** 2) + 1.0, x2 / (x1 ** 2 + x2 ** 2)),
    )
    fluxes = [circle_flux_integral(w, r) for r in g.radii]
    assert np.max(np.abs(np.array(fluxes) - 2 * math.pi)) < 1e-11


def test_flux_requires_grid_radius():
    g = build_grid(1.0, 8.0, 16, 64)
    w = PlanarMapping.from_function(g, lambda x1, x2: (x1, x2))
    with pytest.raises(ValueError, match="radius-not-on-grid"):
        circle_flux_integral(w, 0.5 * (g.radii[3] + g.radii[4]))


@pytest.mark.parametrize("spacing", [LOG_RADIAL, UNIFORM_RADIAL])
def test_annulus_integral_of_one(spacing):
    g = build_grid(1.0, 2.0, 128, 32, spacing)
    f = ScalarField(g, np.ones(g.shape))
    exact = math.pi * (4.0 - 1.0)
    assert abs(annulus_integral(f, 1.0, 2.0) - exact) < 1e-4 * exact


def test_annulus_integral_inverse_quartic():
    R = 16.0
    g = build_grid(1.0, R, 256, 32)
    f = ScalarField.from_function(g, lambda x1, x2: (x1 ** 2 + x2 ** 2) ** -2)
    exact = math.pi * (1.0 - R ** -2)
    assert abs(annulus_integral(f, 1.0, R) - exact) < 1e-4 * exact


def test_annulus_integral_convergence_order():
    errs = []
    exact = math.pi * (4.0 - 1.0) / 2  # integral of cos^2(theta) over annulus [1,2]
    for n in (32, 64, 128):
        g = build_grid(1.0, 2.0, n, 32)
        f = ScalarField.from_function(g, lambda x1, x2: x1 ** 2 / (x1 ** 2 + x2 ** 2))
        errs.append(abs(annulus_integral(f, 1.0, 2.0) - exact))
    assert observed_order(errs) >= 1.8


def test_annulus_integral_window_errors():
    g = build_grid(1.0, 8.0, 16, 16)
    f = ScalarField(g, np.ones(g.shape))
    with pytest.raises(ValueError, match="window-outside-grid"):
        annulus_integral(f, 9.0, 12.0)
    with pytest.raises(ValueError, match="window-outside-grid"):
        annulus_integral(f, 3.0, 2.0)


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_roundtrip_scalar(tmp_path):
    g = build_grid(1.0, 16.0, 16, 16)
    x1, x2 = g.nodes()
    u = ScalarField(g, np.sin(x1) + x2 ** 2)
    path = tmp_path / "u.field"
    write_snapshot(path, u)
    back = read_snapshot(path)
    assert isinstance(back, ScalarField)
    assert back.grid.same_geometry(g)
    assert np.array_equal(back.values, u.values)


def test_snapshot_roundtrip_mapping(tmp_path):
    g = build_grid(2.0, 4.0, 8, 16, UNIFORM_RADIAL)
    w = PlanarMapping.from_function(g, lambda x1, x2: (x1 * x2, x1 - x2))
    path = tmp_path / "w.field"
    write_snapshot(path, w)
    back = read_snapshot(path)
    assert isinstance(back, PlanarMapping)
    assert back.grid.spacing == UNIFORM_RADIAL
    assert np.array_equal(back.p, w.p) and np.array_equal(back.q, w.q)


def test_snapshot_deterministic_bytes(tmp_path):
    g = build_grid(1.0, 16.0, 16, 16)
    u = ScalarField.from_function(g, lambda x1, x2: np.cos(x1 * x2))
    p1, p2 = tmp_path / "a.field", tmp_path / "b.field"
    write_snapshot(p1, u)
    write_snapshot(p2, u)
    assert p1.read_bytes() == p2.read_bytes()
