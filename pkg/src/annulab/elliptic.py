"""Linear uniformly elliptic solves on annuli and the log-kernel potential.

Two workhorses live here.  ``solve_linear_dirichlet`` assembles the
second-order nine-point stencil system for a_ij u_ij = f on an annular
grid and solves it with a direct sparse factorization, refining until the
discrete residual sits at rounding level.  ``newtonian_potential``
integrates the normalized kernel log|x - y| - log|y| against a compactly
supported density: node-centered product quadrature in the bulk, 8x8
subdivision of cells near each target, and local polar integration (exact
cell geometry, closed-form ray exits) of the cell containing the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .grid import (
    LOG_RADIAL,
    AnnularGrid,
    ScalarField,
    _check_values,
)

__all__ = [
    "LinearCoefficients",
    "ellipticity_constants",
    "newtonian_potential",
    "solve_linear_dirichlet",
]


def ellipticity_constants(a11, a12, a22):
    """Global eigenvalue extremes and their ratio for a symmetric field.

    The nodal eigenvalues of [[a11, a12], [a12, a22]] come from the closed
    form mean +- hypot(skew, a12).  Returns ``(lam, Lam, gamma)`` with
    gamma = Lam / lam; raises when the minimum eigenvalue is not strictly
    positive.
    """
    a11, a12, a22 = (np.asarray(a, dtype=float) for a in (a11, a12, a22))
    if not all(np.all(np.isfinite(a)) for a in (a11, a12, a22)):
        raise ValueError("singular-input: non-finite coefficient entries")
    mean = 0.5 * (a11 + a22)
    rad = np.hypot(0.5 * (a11 - a22), a12)
    lam = float(np.min(mean - rad))
    big = float(np.max(mean + rad))
    if lam <= 0.0:
        raise ValueError(
            f"not-elliptic: minimum coefficient eigenvalue {lam:.6e} is not positive"
        )
    return lam, big, big / lam


@dataclass(frozen=True, eq=False)
class LinearCoefficients:
    """Symmetric coefficient field a(x) with its ellipticity constants.

    Scalar entries broadcast across the grid, so constant operators read
    ``LinearCoefficients(grid, 1.0, 0.0, 1.0)``.  Construction validates
    uniform ellipticity and records (lam, Lam, gamma).
    """

    grid: AnnularGrid
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    lam: float = 0.0
    Lam: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("a11", "a12", "a22"):
            arr = np.array(
                np.broadcast_to(np.asarray(getattr(self, name), dtype=float), self.grid.shape)
            )
            object.__setattr__(self, name, _check_values(self.grid, arr, name))
        lam, big, gamma = ellipticity_constants(self.a11, self.a12, self.a22)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "Lam", big)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def trace_operator(cls, grid):
        """Coefficients of the plain Laplacian, a = identity."""
        return cls(grid, 1.0, 0.0, 1.0)


def _boundary_values(grid, data, name):
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        arr = np.full(grid.n_theta, float(arr))
    if arr.shape != (grid.n_theta,):
        raise ValueError(
            f"invalid-dimension: {name} must be a scalar or length-{grid.n_theta} array"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"singular-input: non-finite entries in {name}")
    return arr


def _stencil_coefficients(coeffs):
    """Per-node coefficients of u_tt, u_ttheta, u_thth, u_t, u_theta.

    The Cartesian operator a_ij u_ij is rotated to the polar frame
    (A_rr, A_rt, A_tt) and expressed in the differenced parameters
    (t, theta), with t = log r on log-radial grids and t = r otherwise.
    """
    g = coeffs.grid
    r = g.radii[:, None]
    c = np.cos(g.theta)[None, :]
    s = np.sin(g.theta)[None, :]
    a11, a12, a22 = coeffs.a11, coeffs.a12, coeffs.a22
    a_rr = a11 * c * c + 2.0 * a12 * c * s + a22 * s * s
    a_tt = a11 * s * s - 2.0 * a12 * c * s + a22 * c * c
    a_rt = 2.0 * ((a22 - a11) * c * s + a12 * (c * c - s * s))
    inv_r2 = 1.0 / (r * r)
    if g.spacing == LOG_RADIAL:
        return (
            a_rr * inv_r2,
            a_rt * inv_r2,
            a_tt * inv_r2,
            (a_tt - a_rr) * inv_r2,
            -a_rt * inv_r2,
        )
    return a_rr, a_rt / r, a_tt * inv_r2, a_tt / r, -a_rt * inv_r2


def solve_linear_dirichlet(coeffs, f, g_inner, g_outer):
    """Solve a_ij u_ij = f with Dirichlet data on the boundary rings.

    Interior nodes carry the centered nine-point stencil; boundary rings
    are eliminated into the right-hand side.  The sparse system is
    factored directly (SuperLU) and polished by iterative refinement so
    the discrete residual max-norm lands below 1e-10 * (1 + max|f|).
    """
    g = coeffs.grid
    if f.grid is not g and not g.same_geometry(f.grid):
        raise ValueError("invalid-dimension: source field grid does not match coefficients")
    ellipticity_constants(coeffs.a11, coeffs.a12, coeffs.a22)
    gin = _boundary_values(g, g_inner, "g_inner")
    gout = _boundary_values(g, g_outer, "g_outer")

    n_r, n_t = g.shape
    dt, dq = g.dt, g.dtheta
    ctt, ctq, cqq, ct, cq = (a[1:-1] for a in _stencil_coefficients(coeffs))

    ni = n_r - 2
    n_unknown = ni * n_t
    ii0 = np.arange(1, n_r - 1)[:, None]
    jj0 = np.arange(n_t)[None, :]
    row = (ii0 - 1) * n_t + jj0

    inv_dt2 = 1.0 / (dt * dt)
    inv_dq2 = 1.0 / (dq * dq)
    inv_2dt = 0.5 / dt
    inv_2dq = 0.5 / dq
    inv_cross = 0.25 / (dt * dq)
    stencil = (
        (0, 0, -2.0 * ctt * inv_dt2 - 2.0 * cqq * inv_dq2),
        (1, 0, ctt * inv_dt2 + ct * inv_2dt),
        (-1, 0, ctt * inv_dt2 - ct * inv_2dt),
        (0, 1, cqq * inv_dq2 + cq * inv_2dq),
        (0, -1, cqq * inv_dq2 - cq * inv_2dq),
        (1, 1, ctq * inv_cross),
        (1, -1, -ctq * inv_cross),
        (-1, 1, -ctq * inv_cross),
        (-1, -1, ctq * inv_cross),
    )

    b = f.values[1:-1].astype(float).copy()
    b_flat = b.reshape(-1)
    rows, cols, data = [], [], []
    for di, dj, wgt in stencil:
        ii = np.broadcast_to(ii0 + di, (ni, n_t))
        jj = np.broadcast_to((jj0 + dj) % n_t, (ni, n_t))
        interior = (ii >= 1) & (ii <= n_r - 2)
        rows.append(row[interior])
        cols.append((ii[interior] - 1) * n_t + jj[interior])
        data.append(wgt[interior])
        if not interior.all():
            bnd = ~interior
            gvals = np.where(ii[bnd] == 0, gin[jj[bnd]], gout[jj[bnd]])
            np.add.at(b_flat, row[bnd], -wgt[bnd] * gvals)

    mat = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsc()
    try:
        lu = splu(mat)
    except RuntimeError as exc:
        raise ValueError(f"singular-system: sparse factorization failed ({exc})") from None

    x = lu.solve(b_flat)
    tol = 1e-10 * (1.0 + float(np.max(np.abs(f.values))))
    for _ in range(3):
        resid = b_flat - mat @ x
        if float(np.max(np.abs(resid))) <= 0.25 * tol:
            break
        x = x + lu.solve(resid)
    final = float(np.max(np.abs(b_flat - mat @ x)))
    if not np.isfinite(final) or final > tol:
        raise ValueError(
            f"singular-system: discrete residual {final:.3e} exceeds tolerance {tol:.3e}"
        )

    u = np.empty(g.shape)
    u[0] = gin
    u[-1] = gout
    u[1:-1] = x.reshape(ni, n_t)
    return ScalarField(g, u)


# -- Newtonian potential ----------------------------------------------------


def _cell_bounds(grid):
    """Node-centered cell edges: radii and parameter values per ring."""
    t = grid.t
    half = 0.5 * grid.dt
    t_lo = np.maximum(t - half, t[0])
    t_hi = np.minimum(t + half, t[-1])
    if grid.spacing == LOG_RADIAL:
        return np.exp(t_lo), np.exp(t_hi), t_lo, t_hi
    return t_lo, t_hi, t_lo, t_hi


def _bilinear(grid, vals, tq, thq):
    """Bilinear interpolation of nodal values at parameters (tq, thq)."""
    tq = np.asarray(tq, dtype=float)
    thq = np.asarray(thq, dtype=float)
    it = np.clip(np.searchsorted(grid.t, tq, side="right") - 1, 0, grid.n_r - 2)
    wt = np.clip((tq - grid.t[it]) / grid.dt, 0.0, 1.0)
    jf = thq / grid.dtheta
    j0f = np.floor(jf)
    wj = jf - j0f
    j0 = j0f.astype(int) % grid.n_theta
    j1 = (j0 + 1) % grid.n_theta
    low = (1.0 - wj) * vals[it, j0] + wj * vals[it, j1]
    high = (1.0 - wj) * vals[it + 1, j0] + wj * vals[it + 1, j1]
    return (1.0 - wt) * low + wt * high


def _polar_cell_integral(r_x, r_lo, r_hi, beta_lo, beta_hi, n_phi):
    """Integrals of log|x - y| and of 1 over one polar cell, by rays from x.

    The target sits at local coordinates (r_x, 0) inside the cell
    {r_lo <= |y| <= r_hi, beta_lo <= arg y <= beta_hi} with
    beta_lo <= 0 <= beta_hi.  Each ray's exit distance is the nearest
    positive crossing of the four cell boundaries (all closed forms);
    midpoint rule over the ray angle.  Returns (S_log, area).
    """
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    cphi = np.cos(phi)
    disc_out = r_x * r_x * cphi * cphi + (r_hi * r_hi - r_x * r_x)
    rho = -r_x * cphi + np.sqrt(np.maximum(disc_out, 0.0))
    gap = r_x * r_x - r_lo * r_lo
    disc_in = r_x * r_x * cphi * cphi - gap
    inward = (disc_in >= 0.0) & (cphi < 0.0)
    rho_in = np.where(
        inward, -r_x * cphi - np.sqrt(np.maximum(disc_in, 0.0)), np.inf
    )
    rho = np.minimum(rho, np.maximum(rho_in, 0.0))
    for beta, side in ((beta_lo, -1.0), (beta_hi, 1.0)):
        sb = math.sin(beta)
        if sb == 0.0:
            # target on this angular edge: rays heading across exit at once
            cand = np.where(side * np.sin(phi) > 0.0, 0.0, np.inf)
        else:
            denom = np.sin(phi - beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = r_x * sb / denom
            cand = np.where(np.isfinite(cand) & (cand > 0.0), cand, np.inf)
        rho = np.minimum(rho, cand)
    rho = np.maximum(rho, 0.0)
    dphi = 2.0 * math.pi / n_phi
    with np.errstate(divide="ignore", invalid="ignore"):
        glog = np.where(rho > 0.0, rho * rho * (2.0 * np.log(rho) - 1.0) * 0.25, 0.0)
    s_log = float(np.sum(glog)) * dphi
    area = float(np.sum(rho * rho)) * 0.5 * dphi
    return s_log, area


_N_SUB = 8  # subdivision factor for cells near a target


def _refined_cells(grid, fvals, idx_r, idx_q, x1k, x2k, t_lo, t_hi):
    """Subdivided midpoint contribution of the listed cells for one target."""
    dq = grid.dtheta
    ta = t_lo[idx_r][:, None]
    tb = t_hi[idx_r][:, None]
    frac = np.arange(_N_SUB + 1) / _N_SUB
    edges = ta + (tb - ta) * frac[None, :]
    if grid.spacing == LOG_RADIAL:
        r_edges = np.exp(edges)
    else:
        r_edges = edges
    wr_sub = 0.5 * (r_edges[:, 1:] ** 2 - r_edges[:, :-1] ** 2)
    t_mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    r_mid = np.exp(t_mid) if grid.spacing == LOG_RADIAL else t_mid
    offs = (np.arange(_N_SUB) + 0.5) / _N_SUB - 0.5
    th_mid = grid.theta[idx_q][:, None] + offs[None, :] * dq

    r3 = r_mid[:, :, None]
    th3 = th_mid[:, None, :]
    yy1 = r3 * np.cos(th3)
    yy2 = r3 * np.sin(th3)
    d2 = (x1k - yy1) ** 2 + (x2k - yy2) ** 2
    if np.min(d2) <= 0.0:
        raise ValueError(
            "target-inside-singular-cell: target coincides with a quadrature node "
            f"near ({x1k!r}, {x2k!r})"
        )
    tq = np.broadcast_to(t_mid[:, :, None], d2.shape).reshape(-1)
    thq = np.broadcast_to(th3 % (2.0 * math.pi), d2.shape).reshape(-1)
    f_sub = _bilinear(grid, fvals, tq, thq).reshape(d2.shape)
    kern = 0.5 * np.log(d2) - np.log(r3)
    w3 = wr_sub[:, :, None] * (dq / _N_SUB)
    return float(np.sum(kern * f_sub * w3))


def newtonian_potential(f, targets, n_phi=None):
    """Potential of a compactly supported density against the log kernel.

    Computes u(x) = (1/2pi) * integral of (log|x - y| - log|y|) f(y) dy
    over the grid annulus for each target x, together with
    log_mass = (1/2pi) * integral of f.  The normalization makes rings
    outside a target's radius drop out exactly, so Delta u = f holds on
    the support with no truncation term, while u grows like
    log_mass * log|x| beyond it.

    Quadrature: midpoint rule on node-centered cells with exact radial
    weights; cells within 2.5 index units of a target are re-done with an
    8x8 subdivision; the cell containing the target is integrated in
    local polar coordinates about the target (``n_phi`` rays, default
    4x the angular resolution).  Returns ``(values, log_mass)``.
    """
    g = f.grid
    fvals = f.values
    if not np.all(np.isfinite(fvals)):
        raise ValueError("singular-input: non-finite density values")
    pts = np.asarray(targets, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("invalid-dimension: targets must have shape (m, 2)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("singular-input: non-finite target coordinates")
    if n_phi is None:
        n_phi = max(64, 4 * g.n_theta)

    r_lo, r_hi, t_lo, t_hi = _cell_bounds(g)
    wr = 0.5 * (r_hi * r_hi - r_lo * r_lo)
    fw = fvals * (wr[:, None] * g.dtheta)
    log_mass = float(np.sum(fw)) / (2.0 * math.pi)

    y1, y2 = g.nodes()
    y1f, y2f = y1.ravel(), y2.ravel()
    fwf = fw.ravel()
    logr_nodes = np.log(g.radii)
    logyf = np.broadcast_to(logr_nodes[:, None], g.shape).ravel()

    m = pts.shape[0]
    acc = np.empty(m)
    chunk = max(1, int(2.0e6 // max(y1f.size, 1)))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        dx = pts[lo:hi, 0:1] - y1f[None, :]
        dy = pts[lo:hi, 1:2] - y2f[None, :]
        d2 = dx * dx + dy * dy
        kern = 0.5 * np.log(np.maximum(d2, 1e-300)) - logyf[None, :]
        acc[lo:hi] = kern @ fwf

    t0 = g.t[0]
    n_r, n_q = g.shape
    reach = 2.5 + 1e-9
    two_pi = 2.0 * math.pi
    for k in range(m):
        x1k, x2k = pts[k]
        r_k = math.hypot(x1k, x2k)
        if r_k == 0.0:
            continue  # kernel vanishes identically at the origin
        tf = ((math.log(r_k) if g.spacing == LOG_RADIAL else r_k) - t0) / g.dt
        if tf < -reach or tf > (n_r - 1) + reach:
            continue
        th_k = math.atan2(x2k, x1k) % two_pi
        jf = th_k / g.dtheta
        inside = -1e-9 <= tf <= (n_r - 1) + 1e-9
        i_c = min(max(int(round(tf)), 0), n_r - 1)
        j_c = int(round(jf)) % n_q

        i_near = [i for i in range(i_c - 3, i_c + 4) if 0 <= i < n_r and abs(i - tf) <= reach]
        j_near = []
        for dj in range(-3, 4):
            j = (j_c + dj) % n_q
            dist = abs((j - jf + n_q / 2.0) % n_q - n_q / 2.0)
            if dist <= reach:
                j_near.append(j)
        ii = np.repeat(i_near, len(j_near))
        jj = np.tile(j_near, len(i_near))

        # remove the plain midpoint contribution of every special cell
        d2s = (x1k - y1[ii, jj]) ** 2 + (x2k - y2[ii, jj]) ** 2
        base = (0.5 * np.log(np.maximum(d2s, 1e-300)) - logr_nodes[ii]) * fw[ii, jj]
        acc[k] -= float(np.sum(base))

        singular = inside & (ii == i_c) & (jj == j_c)
        if np.any(~singular):
            acc[k] += _refined_cells(
                g, fvals, ii[~singular], jj[~singular], x1k, x2k, t_lo, t_hi
            )
        if inside:
            delta = (g.theta[j_c] - th_k + math.pi) % two_pi - math.pi
            beta_lo = min(delta - 0.5 * g.dtheta, 0.0)
            beta_hi = max(delta + 0.5 * g.dtheta, 0.0)
            s_log, area = _polar_cell_integral(
                r_k, r_lo[i_c], r_hi[i_c], beta_lo, beta_hi, n_phi
            )
            t_k = min(max(math.log(r_k) if g.spacing == LOG_RADIAL else r_k, g.t[0]), g.t[-1])
            f_at_x = float(_bilinear(g, fvals, t_k, th_k))
            acc[k] += f_at_x * (s_log - math.log(r_k) * area)

    if not np.all(np.isfinite(acc)):
        bad = int(np.argmax(~np.isfinite(acc)))
        raise ValueError(
            "target-inside-singular-cell: quadrature failed to resolve target "
            f"({pts[bad, 0]!r}, {pts[bad, 1]!r})"
        )
    return acc / two_pi, log_mass
