"""Fully nonlinear second-order operators and a damped Newton driver.

An operator acts pointwise on the Hessian of a scalar field.  A
``FullyNonlinearSpec`` packages the scalar map ``F`` together with its matrix
derivative and the ellipticity window the derivative guarantees on the
operator's admissible branch.  ``newton_solve`` linearizes around the current
iterate, reuses the sparse Dirichlet solver for the correction, and backtracks
until the interior residual drops while the linearization stays elliptic.

Hessian entries are formed with the same centered stencils the linear
assembly uses, so the linearization is consistent with the discrete residual
to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elliptic import LinearCoefficients, _boundary_values, solve_linear_dirichlet
from .grid import AnnularGrid, ScalarField, hessian

__all__ = [
    "FullyNonlinearSpec",
    "NewtonError",
    "NewtonTrace",
    "monge_ampere_spec",
    "newton_solve",
    "radial_ma_reference",
    "special_lagrangian_spec",
]

# smallest damping factor tried before the line search gives up
_STEP_FLOOR = 2.0 ** -16
# below this eigenvalue gap the spectral divided difference is replaced by
# its analytic limit
_COALESCE = 1e-8


@dataclass(frozen=True)
class FullyNonlinearSpec:
    """Pointwise operator ``F`` on symmetric 2x2 Hessians.

    ``evaluate(m11, m12, m22)`` returns ``F(M)`` elementwise over arrays of
    matrix entries.  ``derivative(m11, m12, m22)`` returns the entries
    ``(F_11, F_12, F_22)`` of the matrix derivative; the off-diagonal entry
    enters the linearized operator with multiplicity two, which is exactly
    the convention ``LinearCoefficients`` expects.  ``lam`` and ``Lam`` bound
    the derivative's eigenvalues for Hessians on the operator's admissible
    branch with norm up to ``hessian_bound``.
    """

    name: str
    evaluate: Callable[..., np.ndarray]
    derivative: Callable[..., tuple]
    lam: float
    Lam: float
    hessian_bound: float


def monge_ampere_spec(hessian_bound: float = 3.0) -> FullyNonlinearSpec:
    """``det D^2 u = 1`` on the convex branch.

    The matrix derivative is the cofactor matrix.  On the solution branch
    the eigenvalues multiply to one, so with both of them below
    ``hessian_bound`` the linearization's spectrum sits inside
    ``[1/hessian_bound, hessian_bound]``.
    """
    b = float(hessian_bound)
    if not (math.isfinite(b) and b > 1.0):
        raise ValueError("singular-input: hessian_bound must be finite and > 1")

    def evaluate(m11, m12, m22):
        return m11 * m22 - m12 * m12 - 1.0

    def derivative(m11, m12, m22):
        return m22, -m12, m11

    return FullyNonlinearSpec(
        name="monge-ampere",
        evaluate=evaluate,
        derivative=derivative,
        lam=1.0 / b,
        Lam=b,
        hessian_bound=b,
    )


def special_lagrangian_spec(theta: float, hessian_bound: float = 3.0) -> FullyNonlinearSpec:
    """``arctan(lambda_1) + arctan(lambda_2) = theta`` with ``|theta| < pi``.

    The derivative is the spectral function ``1/(1 + lambda^2)`` applied to
    the Hessian; its eigenvalues lie in ``[1/(1 + hessian_bound^2), 1]``
    whenever the Hessian norm stays below ``hessian_bound``, so the equation
    is unconditionally elliptic there.  At ``theta = pi/2`` the equation
    pins ``lambda_1 * lambda_2 = 1`` on the positive branch and shares its
    solutions with the determinant equation.
    """
    th = float(theta)
    if not (math.isfinite(th) and abs(th) < math.pi):
        raise ValueError("singular-input: phase must satisfy |theta| < pi")
    b = float(hessian_bound)
    if not (math.isfinite(b) and b > 0.0):
        raise ValueError("singular-input: hessian_bound must be finite and positive")

    def evaluate(m11, m12, m22):
        mean = 0.5 * (m11 + m22)
        rad = np.hypot(0.5 * (m11 - m22), m12)
        return np.arctan(mean + rad) + np.arctan(mean - rad) - th

    def derivative(m11, m12, m22):
        mean = 0.5 * (m11 + m22)
        half = 0.5 * (m11 - m22)
        rad = np.hypot(half, m12)
        s_hi = 1.0 / (1.0 + (mean + rad) ** 2)
        s_lo = 1.0 / (1.0 + (mean - rad) ** 2)
        # derivative = mid * I + slope * (M - mean * I); the divided
        # difference degenerates at coalescing eigenvalues, where the slope
        # tends to the second derivative of arctan at the double eigenvalue
        mid = 0.5 * (s_hi + s_lo)
        slope = np.where(
            rad > _COALESCE,
            (s_hi - s_lo) / (2.0 * np.maximum(rad, _COALESCE)),
            -2.0 * mean / (1.0 + mean * mean) ** 2,
        )
        return mid + slope * half, slope * m12, mid - slope * half

    return FullyNonlinearSpec(
        name="special-lagrangian",
        evaluate=evaluate,
        derivative=derivative,
        lam=1.0 / (1.0 + b * b),
        Lam=1.0,
        hessian_bound=b,
    )


def radial_ma_reference(a: float, r):
    """Radial convex solutions of ``det D^2 u = 1`` outside the unit disk.

    The profile with ``u'(r) = sqrt(r^2 + a)`` satisfies ``u'' u' / r = 1``
    identically for every ``a >= 0``.  Its far field is
    ``|x|^2/2 + (a/2) log|x| + a/4 + (a/2) log 2 + O(|x|^-2)``, which makes
    the family the reference for expansion-coefficient recovery.

    Returns ``(u, u', u'')`` evaluated at ``r`` (scalar or array).
    """
    af = float(a)
    if not (math.isfinite(af) and af >= 0.0):
        raise ValueError("singular-input: parameter a must be finite and >= 0")
    rv = np.asarray(r, dtype=float)
    if rv.size == 0 or not np.all(np.isfinite(rv)) or np.any(rv <= 0.0):
        raise ValueError("invalid-radii: radii must be finite and positive")
    s = np.sqrt(rv * rv + af)
    u = 0.5 * (rv * s + af * np.log(rv + s))
    return u, s, rv / s


class NewtonError(ValueError):
    """Newton failure; carries the partial iteration trace for diagnosis."""

    def __init__(self, message: str, trace: "NewtonTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class NewtonTrace:
    """Residual history (initial iterate included) and accepted step sizes."""

    residuals: tuple
    steps: tuple

    @property
    def iterations(self) -> int:
        return len(self.steps)


def _interior_state(spec, field):
    """Hessian rows with centered stencils, operator values, sup residual."""
    h = hessian(field)
    m = (h.m11[1:-1], h.m12[1:-1], h.m22[1:-1])
    fvals = np.asarray(spec.evaluate(*m), dtype=float)
    return m, fvals, float(np.max(np.abs(fvals)))


def _min_eigenvalue(spec, m):
    a11, a12, a22 = (np.asarray(c, dtype=float) for c in spec.derivative(*m))
    gap = np.hypot(0.5 * (a11 - a22), a12)
    return float(np.min(0.5 * (a11 + a22) - gap))


def _linearization(spec, grid, m):
    """Full-shape coefficient arrays plus the smallest raw eigenvalue.

    Boundary-data kinks in the initial iterate can push the derivative
    indefinite on a ring or two.  The step computation then clamps the nodal
    eigenvalues to a small positive floor (direction only; the residual line
    search keeps global control), so the sparse solve stays elliptic while
    the iterate works its way back onto the branch.
    """
    a11, a12, a22 = (np.asarray(c, dtype=float) for c in spec.derivative(*m))
    mean = 0.5 * (a11 + a22)
    half = 0.5 * (a11 - a22)
    gap = np.hypot(half, a12)
    lam = float(np.min(mean - gap))
    if lam <= 0.0:
        floor = 1e-3 * max(1.0, float(np.max(mean + gap)))
        hi = np.maximum(mean + gap, floor)
        lo = np.maximum(mean - gap, floor)
        scale = np.where(gap > 0.0, (hi - lo) / (2.0 * np.maximum(gap, 1e-300)), 0.0)
        a11 = 0.5 * (hi + lo) + scale * half
        a22 = 0.5 * (hi + lo) - scale * half
        a12 = scale * a12
    rows = []
    for arr in (a11, a12, a22):
        full = np.empty(grid.shape)
        full[1:-1] = arr
        # boundary rows never reach the assembly; copy the adjacent ring so
        # the coefficient validation reflects the interior operator
        full[0] = arr[0]
        full[-1] = arr[-1]
        rows.append(full)
    return rows, lam


def newton_solve(spec, grid, g_inner, g_outer, u0=None, tol=1e-10, max_iters=30):
    """Damped Newton iteration for ``F(D^2 u) = 0`` with Dirichlet data.

    Each correction solves the linearized equation with zero boundary
    values.  A step is accepted once it strictly decreases the interior sup
    residual; once the linearization is positive definite everywhere, steps
    that would leave that branch are rejected and the damping factor halves
    until an admissible one is found.  ``u0`` defaults to ``|x|^2/2``.  Any
    mismatch between ``u0`` and the Dirichlet data is lifted into the
    iterate linearly in the radial coordinate, so the start satisfies the
    data without a kink at the boundary rings; a caller-supplied iterate
    only has to be accurate in the interior.  Should the linearization still
    go indefinite somewhere, the step computation clamps its nodal
    eigenvalues to a positive floor until the iterate is back on the branch.

    Returns ``(solution, NewtonTrace)``.  Raises ``NewtonError`` carrying
    the partial trace when the iteration converges or stalls off the
    elliptic branch (``ellipticity-lost``) or when no admissible step exists
    within the iteration budget (``max-iters-exceeded``).
    """
    if not isinstance(grid, AnnularGrid):
        raise TypeError("invalid-dimension: grid must be an AnnularGrid")
    gin = _boundary_values(grid, g_inner, "g_inner")
    gout = _boundary_values(grid, g_outer, "g_outer")
    tol = float(tol)
    if not (math.isfinite(tol) and tol > 0.0):
        raise ValueError("singular-input: tol must be positive and finite")
    if int(max_iters) < 1:
        raise ValueError("singular-input: max_iters must be >= 1")

    if u0 is None:
        vals = (0.5 * grid.radii[:, None] ** 2) * np.ones((1, grid.n_theta))
    else:
        if u0.grid is not grid and not u0.grid.same_geometry(grid):
            raise ValueError("invalid-dimension: u0 lives on a different grid")
        vals = u0.values.copy()
    # lift any boundary mismatch linearly in the radial coordinate instead
    # of overwriting the boundary rings: a kinked start parks the iterate
    # next to spurious roots of the central discretization
    w = ((grid.t - grid.t[0]) / (grid.t[-1] - grid.t[0]))[:, None]
    vals = vals + (1.0 - w) * (gin - vals[0])[None, :] + w * (gout - vals[-1])[None, :]
    vals[0] = gin
    vals[-1] = gout
    u = ScalarField(grid, vals)

    m, fvals, resid = _interior_state(spec, u)
    residuals = [resid]
    steps = []

    def fail(message):
        return NewtonError(message, NewtonTrace(tuple(residuals), tuple(steps)))

    zero = np.zeros(grid.n_theta)
    while residuals[-1] > tol:
        if len(steps) >= int(max_iters):
            raise fail(
                f"max-iters-exceeded: residual {residuals[-1]:.3e} "
                f"after {int(max_iters)} iterations"
            )
        coeff_rows, lam = _linearization(spec, grid, m)
        on_branch = lam > 0.0
        coeffs = LinearCoefficients(grid, *coeff_rows)
        rhs = np.zeros(grid.shape)
        rhs[1:-1] = -fvals
        delta = solve_linear_dirichlet(coeffs, ScalarField(grid, rhs), zero, zero)

        s = 1.0
        while True:
            trial = ScalarField(grid, u.values + s * delta.values)
            m_t, f_t, r_t = _interior_state(spec, trial)
            admissible = np.all(np.isfinite(f_t)) and r_t < residuals[-1]
            if admissible and on_branch:
                # never step off the elliptic branch once it is reached
                admissible = _min_eigenvalue(spec, m_t) > 0.0
            if admissible:
                break
            s *= 0.5
            if s < _STEP_FLOOR:
                if on_branch:
                    raise fail(
                        "max-iters-exceeded: no admissible step "
                        f"at iteration {len(steps) + 1}"
                    )
                raise fail(
                    f"ellipticity-lost: linearization eigenvalue {lam:.3e} "
                    f"and no recovering step at iteration {len(steps) + 1}"
                )
        u, m, fvals = trial, m_t, f_t
        residuals.append(r_t)
        steps.append(s)

    lam_final = _min_eigenvalue(spec, m)
    if lam_final <= 0.0:
        raise fail(
            f"ellipticity-lost: converged with linearization eigenvalue "
            f"{lam_final:.3e} off the elliptic branch"
        )
    return u, NewtonTrace(tuple(residuals), tuple(steps))
