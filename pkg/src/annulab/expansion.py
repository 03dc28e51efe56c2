"""Far-field expansion extraction and cross-validation.

Solutions that behave like a quadratic plus lower-order terms at infinity
are summarized by the coefficients of

    u(x) = x'Ax/2 + b.x + d log|x| + c + e.x/|x|^2 + remainder.

This module recovers the coefficients three independent ways and measures
the remainder: windowed least squares against the 9-function basis, annular
averaging of the Hessian with a decay fit on the deviations, contour
integrals of the complexified gradient on a circle, and a divergence-theorem
identity for the log coefficient alone.  The bootstrap scheduler turns a
Holder exponent into the doubling count and auxiliary exponents used by the
improvement argument that upgrades decay estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    LOG_RADIAL,
    ScalarField,
    annulus_integral,
    hessian,
    laplacian,
    ring_index,
    window_slice,
)
from .qcmap import DecayFit, fit_power_law

__all__ = [
    "BootstrapSchedule",
    "ExpansionCoefficients",
    "LaurentCoefficients",
    "bootstrap_schedule",
    "d_from_divergence",
    "fit_expansion",
    "formula_schedule",
    "hessian_limit",
    "laurent_coefficients",
]

_CONDITION_LIMIT = 1e10
_MIN_WINDOWS = 3
_MIN_RINGS = 8


@dataclass(frozen=True)
class ExpansionCoefficients:
    """Recovered far-field coefficients plus the remainder decay fit.

    ``A`` is the quadratic part (symmetric 2x2), ``b`` the linear part,
    ``d`` the log coefficient, ``c`` the constant, ``e`` the dipole vector.
    ``residual_fit`` records how the sup-norm of the post-fit residual
    decays across the fitting windows; a degenerate (+inf exponent) fit
    means the field was an exact basis combination.
    """

    A: np.ndarray
    b: np.ndarray
    d: float
    c: float
    e: np.ndarray
    residual_fit: DecayFit

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if A.shape != (2, 2) or b.shape != (2,) or e.shape != (2,):
            raise ValueError("invalid-dimension: A must be 2x2 and b, e 2-vectors")
        if not (
            np.all(np.isfinite(A))
            and np.all(np.isfinite(b))
            and np.all(np.isfinite(e))
            and math.isfinite(self.d)
            and math.isfinite(self.c)
        ):
            raise ValueError("singular-input: expansion coefficients must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "e", e)


@dataclass(frozen=True)
class LaurentCoefficients:
    """Contour coefficients of the complexified gradient.

    ``coefficients[j]`` holds a_{-j}, the coefficient of z^{-j} in the
    expansion of u_x - i u_y on the contour; ``radius_used`` is the ring the
    contour actually ran on.  For gradients of real data, a_0 encodes the
    linear part via b = (Re a_0, -Im a_0) and Re a_{-1} is the log
    coefficient d.
    """

    coefficients: np.ndarray
    radius_used: float

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=complex)
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("invalid-dimension: coefficients must be a 1-d sequence")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def b(self) -> np.ndarray:
        a0 = self.coefficients[0]
        return np.array([a0.real, -a0.imag])

    @property
    def d(self) -> float:
        if self.coefficients.size < 2:
            raise ValueError("invalid-dimension: need max_order >= 1 for d")
        return float(self.coefficients[1].real)


@dataclass(frozen=True)
class BootstrapSchedule:
    """Doubling count and exponents for the decay-improvement argument.

    The defining constraint is delta = 1 - 2^n alpha + (2^n - 1) epsilon
    with 0 < delta < 1/8 and 0 < epsilon < alpha.
    """

    alpha: float
    epsilon: float
    n: int
    delta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"singular-input: alpha must lie in (0, 1), got {self.alpha}")
        if not (0.0 < self.epsilon < self.alpha):
            raise ValueError(
                f"singular-input: epsilon must lie in (0, alpha), got {self.epsilon}"
            )
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"singular-input: n must be a non-negative integer, got {self.n}")
        implied = 1.0 - 2.0 ** self.n * self.alpha + (2.0 ** self.n - 1.0) * self.epsilon
        if abs(self.delta - implied) > 1e-12:
            raise ValueError(
                f"singular-input: delta {self.delta} does not match the schedule "
                f"identity value {implied}"
            )
        if not (0.0 < self.delta < 0.125):
            raise ValueError(
                f"singular-input: delta must lie in (0, 1/8), got {self.delta}"
            )


# ---------------------------------------------------------------------------
# Windowed least squares


def _window_slices(grid, windows):
    wins = [(float(lo), float(hi)) for lo, hi in windows]
    if len(wins) < _MIN_WINDOWS:
        raise ValueError(
            f"insufficient-window: need at least {_MIN_WINDOWS} windows, got {len(wins)}"
        )
    slices = []
    for lo, hi in wins:
        sl = window_slice(grid, lo, hi)
        if sl.stop - sl.start < _MIN_RINGS:
            raise ValueError(
                f"insufficient-window: [{lo}, {hi}] spans {sl.stop - sl.start} "
                f"rings, need >= {_MIN_RINGS}"
            )
        slices.append(sl)
    return wins, slices


def _largest_window(wins):
    return max(range(len(wins)), key=lambda k: (wins[k][1], wins[k][0]))


def _measure_weights(grid, sl):
    """Node weights uniform in (log r, theta); constant on log grids."""
    if grid.spacing == LOG_RADIAL:
        return np.ones(sl.stop - sl.start)
    return 1.0 / grid.radii[sl]


def _basis_matrix(x1, x2):
    rsq = x1 * x1 + x2 * x2
    return np.column_stack([
        0.5 * x1 * x1,
        x1 * x2,
        0.5 * x2 * x2,
        x1,
        x2,
        0.5 * np.log(rsq),
        np.ones_like(x1),
        x1 / rsq,
        x2 / rsq,
    ])


def fit_expansion(u: ScalarField, windows) -> ExpansionCoefficients:
    """Windowed least-squares recovery of the far-field coefficients.

    Each window is fitted independently against the 9-function basis
    (quadratic, linear, log, constant, dipole) with weights uniform in the
    (log r, theta) measure, per-window column normalization, and an
    orthogonal-factorization solve.  The reported coefficients come from
    the largest window; the per-window sup residuals are fitted to a power
    law in the window center radius, which measures the remainder decay.
    """
    grid = u.grid
    wins, slices = _window_slices(grid, windows)
    c, s = np.cos(grid.theta), np.sin(grid.theta)

    mids, sups, betas = [], [], []
    for (lo, hi), sl in zip(wins, slices):
        r = grid.radii[sl]
        x1 = (r[:, None] * c[None, :]).ravel()
        x2 = (r[:, None] * s[None, :]).ravel()
        y = u.values[sl].ravel()
        X = _basis_matrix(x1, x2)
        scale = np.max(np.abs(X), axis=0)
        Xn = X / scale
        w = np.sqrt(np.repeat(_measure_weights(grid, sl), grid.n_theta))
        Xw = Xn * w[:, None]
        cond = float(np.linalg.cond(Xw))
        if cond > _CONDITION_LIMIT:
            raise ValueError(
                f"ill-conditioned-window: condition {cond:.3e} exceeds "
                f"{_CONDITION_LIMIT:.0e} in window [{lo}, {hi}]"
            )
        beta_n, _, _, _ = np.linalg.lstsq(Xw, y * w, rcond=None)
        beta = beta_n / scale
        mids.append(math.sqrt(lo * hi))
        sups.append(float(np.max(np.abs(X @ beta - y))))
        betas.append(beta)

    beta = betas[_largest_window(wins)]
    scale_u = float(np.max(np.abs(u.values)))
    exponent, log_constant, r_squared = fit_power_law(
        mids, sups, degenerate_tol=1e-11 * (1.0 + scale_u)
    )
    fit = DecayFit(exponent, log_constant, 0.0, tuple(zip(mids, sups)), r_squared)
    return ExpansionCoefficients(
        A=np.array([[beta[0], beta[1]], [beta[1], beta[2]]]),
        b=np.array([beta[3], beta[4]]),
        d=float(beta[5]),
        c=float(beta[6]),
        e=np.array([beta[7], beta[8]]),
        residual_fit=fit,
    )


def hessian_limit(u: ScalarField, windows):
    """Hessian limit at infinity and the decay rate of the deviation.

    Per window, the limit candidate is the (log r, theta)-mean of the
    Hessian over the window's nodes and the deviation is the sup over the
    window of the largest entry of ``hessian(u) - mean``.  Referencing each
    window against its own mean keeps the deviations free of the O(R^-alpha)
    bias of the final estimate, so the fitted exponent is clean.  Returns
    ``(A, fit)`` with ``A`` taken from the largest window.
    """
    grid = u.grid
    wins, slices = _window_slices(grid, windows)
    h = hessian(u)

    mids, devs, means = [], [], []
    for (lo, hi), sl in zip(wins, slices):
        wgt = _measure_weights(grid, sl)
        wgt = wgt / np.sum(wgt)
        entries = []
        dev = 0.0
        for comp in (h.m11, h.m12, h.m22):
            ring_mean = comp[sl].mean(axis=1)
            mean = float(np.sum(ring_mean * wgt))
            entries.append(mean)
            dev = max(dev, float(np.max(np.abs(comp[sl] - mean))))
        mids.append(math.sqrt(lo * hi))
        devs.append(dev)
        means.append(entries)

    m11, m12, m22 = means[_largest_window(wins)]
    A = np.array([[m11, m12], [m12, m22]])
    exponent, log_constant, r_squared = fit_power_law(
        mids, devs, degenerate_tol=1e-11 * (1.0 + float(np.max(np.abs(A))))
    )
    fit = DecayFit(exponent, log_constant, A, tuple(zip(mids, devs)), r_squared)
    return A, fit


# ---------------------------------------------------------------------------
# Contour coefficients

# 6th-order centered first derivative, used for the radial part of the
# gradient on the contour ring
_D1_STENCIL = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def laurent_coefficients(
    u: ScalarField, radius: float, max_order: int, harmonic_tol: float = 1e-4
) -> LaurentCoefficients:
    """Contour coefficients a_0 .. a_{-max_order} of u_x - i u_y.

    The gradient on the contour ring comes from a 6th-order radial stencil
    and a spectral angular derivative; the contour integral itself is the
    periodic trapezoid rule (spectrally accurate), evaluated through an
    FFT.  The caller must supply a field harmonic near the contour; a
    discrete-Laplacian diagnostic enforces this up to ``harmonic_tol``
    times the local field scale, which leaves room for the O(h^2) stencil
    error on smooth harmonics (about 1e-5 relative on a 128-sector grid)
    while still rejecting genuinely non-harmonic inputs by many orders.
    """
    grid = u.grid
    i = ring_index(grid, radius)
    if i < 3 or i > grid.n_r - 4:
        raise ValueError(
            f"window-outside-grid: contour radius {radius} needs 3 rings "
            "on each side for the radial stencil"
        )
    max_order = int(max_order)
    if max_order < 0 or max_order > grid.n_theta // 2 - 1:
        raise ValueError(
            f"invalid-dimension: max_order must lie in [0, {grid.n_theta // 2 - 1}] "
            f"for n_theta = {grid.n_theta}"
        )
    lap = laplacian(u)
    worst = float(np.max(np.abs(lap.values[i - 1:i + 2])))
    scale = 1.0 + float(np.max(np.abs(u.values[i - 3:i + 4])))
    if worst > harmonic_tol * scale:
        raise ValueError(
            f"not-harmonic: discrete Laplacian {worst:.3e} exceeds "
            f"{harmonic_tol:.1e} x local scale {scale:.3e} near the contour radius"
        )

    r = float(grid.radii[i])
    ut = _D1_STENCIL @ u.values[i - 3:i + 4] / grid.dt
    u_r = ut / r if grid.spacing == LOG_RADIAL else ut
    freqs = np.fft.fftfreq(grid.n_theta, d=1.0 / grid.n_theta)
    freqs[grid.n_theta // 2] = 0.0
    u_q = np.fft.ifft(1j * freqs * np.fft.fft(u.values[i])).real
    c, s = np.cos(grid.theta), np.sin(grid.theta)
    ux = c * u_r - s * u_q / r
    uy = s * u_r + c * u_q / r
    xi = ux - 1j * uy

    modes = np.fft.ifft(xi)
    orders = np.arange(max_order + 1)
    coeffs = modes[orders] * r ** orders
    return LaurentCoefficients(coefficients=coeffs, radius_used=r)


# ---------------------------------------------------------------------------
# Divergence-theorem log coefficient

# 4th-order one-sided first derivative at the inner boundary ring, and the
# 4th-order stencil family for the fine-quadrature Laplacian below
_D1_ONESIDED = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D1_SHIFT1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
_D2_ONESIDED = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_D2_SHIFT1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0


def _d2_radial(vals, h):
    """4th-order second derivative along axis 0, one-sided at the edges."""
    out = np.empty_like(vals)
    out[2:-2] = (
        -vals[:-4] + 16.0 * vals[1:-3] - 30.0 * vals[2:-2]
        + 16.0 * vals[3:-1] - vals[4:]
    )
    out[0] = _D2_ONESIDED @ vals[:6] * 12.0
    out[1] = _D2_SHIFT1 @ vals[:6] * 12.0
    out[-1] = _D2_ONESIDED @ vals[:-7:-1] * 12.0
    out[-2] = _D2_SHIFT1 @ vals[:-7:-1] * 12.0
    return out / (12.0 * h * h)


def _d1_radial(vals, h):
    """4th-order first derivative along axis 0, one-sided at the edges."""
    out = np.empty_like(vals)
    out[2:-2] = -vals[4:] + 8.0 * vals[3:-1] - 8.0 * vals[1:-3] + vals[:-4]
    out[0] = _D1_ONESIDED @ vals[:5] * 12.0
    out[1] = _D1_SHIFT1 @ vals[:5] * 12.0
    out[-1] = -(_D1_ONESIDED @ vals[:-6:-1]) * 12.0
    out[-2] = -(_D1_SHIFT1 @ vals[:-6:-1]) * 12.0
    return out / (12.0 * h)


def _fine_laplacian(w: ScalarField) -> ScalarField:
    """Laplacian with 4th-order radial and spectral angular derivatives.

    The 2nd-order operator that matches the solver assembly leaves an
    O(h^2) constant in the area term of the divergence identity; this
    version keeps the quadrature error below the identity's tolerances.
    """
    grid = w.grid
    n = grid.n_theta
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    wqq = np.fft.ifft(-(freqs ** 2) * np.fft.fft(w.values, axis=1), axis=1).real
    wtt = _d2_radial(w.values, grid.dt)
    rsq = grid.radii[:, None] ** 2
    if grid.spacing == LOG_RADIAL:
        lap = (wtt + wqq) / rsq
    else:
        wt = _d1_radial(w.values, grid.dt)
        lap = wtt + wt / grid.radii[:, None] + wqq / rsq
    return ScalarField(grid, lap)


def _raw_divergence_d(w: ScalarField, R: float) -> tuple:
    grid = w.grid
    ut0 = _D1_ONESIDED @ w.values[:5] / grid.dt
    w_r = ut0 / grid.r_inner if grid.spacing == LOG_RADIAL else ut0
    flux = float(grid.r_inner * grid.dtheta * np.sum(w_r))
    area = annulus_integral(_fine_laplacian(w), grid.r_inner, R)
    return (flux + area) / (2.0 * math.pi), flux, area


def d_from_divergence(u: ScalarField, A, R: float, extrapolate: bool = False,
                      full_output: bool = False):
    """Log coefficient from the divergence-theorem identity.

    Evaluates d = (flux of grad(u - x'Ax/2) through the inner circle +
    integral of its Laplacian over r_inner <= |x| <= R) / 2 pi.  Subtracting
    the quadratic analytically makes the x'Ax/2 flux cancel its area term
    exactly and removes the dominant differencing error.  The truncation at
    finite R decays like a power of 1/R; with ``extrapolate=True`` the
    identity is evaluated at R and at the ring nearest R/2 and the 1/R^2
    model is eliminated between them.  ``full_output=True`` returns
    ``(d, info)`` with the raw values and the truncation estimate alongside.
    """
    grid = u.grid
    Am = np.asarray(A, dtype=float)
    if Am.shape != (2, 2):
        raise ValueError("invalid-dimension: A must be a 2x2 matrix")
    if not np.all(np.isfinite(Am)):
        raise ValueError("singular-input: A must be finite")
    if abs(Am[0, 1] - Am[1, 0]) > 1e-12 * (1.0 + float(np.max(np.abs(Am)))):
        raise ValueError("invalid-dimension: A must be symmetric")
    i_R = ring_index(grid, R)
    if i_R < 2:
        raise ValueError(
            f"window-outside-grid: R = {R} leaves no annulus above r_inner"
        )

    x1, x2 = grid.nodes()
    quad = 0.5 * (Am[0, 0] * x1 * x1 + Am[1, 1] * x2 * x2) + Am[0, 1] * x1 * x2
    w = ScalarField(grid, u.values - quad)

    R1 = float(grid.radii[i_R])
    d1, flux, area = _raw_divergence_d(w, R1)
    info = {"R": R1, "raw": d1, "flux_term": flux, "area_term": area}

    if extrapolate:
        j = int(np.argmin(np.abs(grid.radii - 0.5 * R1)))
        if j < 1 or j >= i_R:
            raise ValueError(
                "window-outside-grid: extrapolation needs a ring strictly "
                f"between r_inner and R = {R1}"
            )
        R2 = float(grid.radii[j])
        d2, _, _ = _raw_divergence_d(w, R2)
        d = (d1 * R1 ** 2 - d2 * R2 ** 2) / (R1 ** 2 - R2 ** 2)
        info.update({"pair_radius": R2, "raw_pair": d2, "truncation": d - d1})
    else:
        d = d1

    if full_output:
        return d, info
    return d


# ---------------------------------------------------------------------------
# Bootstrap scheduler


def bootstrap_schedule(alpha: float) -> BootstrapSchedule:
    """Constraint-safe doubling schedule for a Holder exponent.

    For alpha > 7/8 no doubling is needed: delta = 1 - alpha already lies
    in (0, 1/8) and epsilon only has to be positive.  Otherwise the minimal
    n with 2^n alpha > 15/16 is chosen and epsilon set so that delta lands
    exactly on 1/16, the midpoint of the admissible interval.  The
    closed-form n (see ``formula_schedule``) can violate the constraint,
    so the search targets the constraint directly.
    """
    a = float(alpha)
    if not (0.0 < a < 1.0) or not math.isfinite(a):
        raise ValueError(f"singular-input: alpha must lie in (0, 1), got {alpha}")
    if a > 0.875:
        return BootstrapSchedule(alpha=a, epsilon=2.0 ** -20, n=0, delta=1.0 - a)
    n = 1
    while 2.0 ** n * a <= 0.9375:
        n += 1
    eps = (2.0 ** n * a - 0.9375) / (2.0 ** n - 1.0)
    delta = 1.0 - 2.0 ** n * a + (2.0 ** n - 1.0) * eps
    return BootstrapSchedule(alpha=a, epsilon=eps, n=n, delta=delta)


def formula_schedule(alpha: float, epsilon: float) -> tuple:
    """Closed-form doubling count n = floor(log2((7/8 - eps)/(alpha - eps))) + 1.

    Returns ``(n, delta)`` without constraint checking: for some inputs the
    resulting delta falls outside (0, 1/8), which is exactly why
    ``bootstrap_schedule`` searches instead of using this formula.
    """
    a, eps = float(alpha), float(epsilon)
    if not (0.0 < eps < a < 0.875):
        raise ValueError(
            "singular-input: the closed form needs 0 < epsilon < alpha < 7/8"
        )
    n = math.floor(math.log2((0.875 - eps) / (a - eps))) + 1
    delta = 1.0 - 2.0 ** n * a + (2.0 ** n - 1.0) * eps
    return n, delta
