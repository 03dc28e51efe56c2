"""Annular grids and discrete vector calculus on them.

Fields live on tensor-product (r, theta) grids covering the annulus
{r_inner <= |x| <= r_outer}.  Radial spacing is logarithmic by default, so
a fixed number of rings per dyadic shell resolves power-law behaviour all
the way to the outer edge; uniform radial spacing is available for cases
where polynomial profiles should be differenced exactly.

All derivative operators are second order: centered stencils in the
(radial coordinate, theta) plane at interior rings, one-sided stencils of
the same order on the two boundary rings, and the polar chain rule to
convert to Cartesian components.  The angular direction is periodic, so
every angular stencil is centered.

Storage convention: node (i, j) is (radii[i], theta[j]); flattening is
row-major radial-then-angular, which is also the order used by the
snapshot file format.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

LOG_RADIAL = "log-radial"
UNIFORM_RADIAL = "uniform-radial"

_SPACINGS = (LOG_RADIAL, UNIFORM_RADIAL)

SNAPSHOT_MAGIC = "annular-field"
SNAPSHOT_VERSION = "v1"

__all__ = [
    "LOG_RADIAL",
    "UNIFORM_RADIAL",
    "AnnularGrid",
    "ScalarField",
    "PlanarMapping",
    "SymMatrixField",
    "build_grid",
    "kelvin_point",
    "gradient",
    "hessian",
    "laplacian",
    "circle_flux_integral",
    "annulus_integral",
    "ring_index",
    "window_slice",
    "read_snapshot",
    "write_snapshot",
]


@dataclass(frozen=True, eq=False)
class AnnularGrid:
    """Tensor-product polar grid on {r_inner <= |x| <= r_outer}.

    ``radii`` holds the n_r ring radii (increasing), ``theta`` the n_theta
    angles in [0, 2pi).  ``t`` is the radial parameter actually differenced:
    log(r) for log-radial spacing, r itself for uniform spacing.  ``dt`` and
    ``dtheta`` are the constant parameter spacings.
    """

    r_inner: float
    r_outer: float
    n_r: int
    n_theta: int
    spacing: str = LOG_RADIAL

    def __post_init__(self):
        if not (self.r_inner > 0.0 and self.r_outer > self.r_inner):
            raise ValueError(
                "invalid-radii: need 0 < r_inner < r_outer, got "
                f"({self.r_inner}, {self.r_outer})"
            )
        if self.n_r < 8:
            raise ValueError(f"invalid-dimension: n_r must be >= 8, got {self.n_r}")
        if self.n_theta < 16 or self.n_theta % 2 != 0:
            raise ValueError(
                f"invalid-dimension: n_theta must be even and >= 16, got {self.n_theta}"
            )
        if self.spacing not in _SPACINGS:
            raise ValueError(f"invalid-dimension: unknown spacing {self.spacing!r}")
        if self.spacing == LOG_RADIAL:
            t = np.linspace(math.log(self.r_inner), math.log(self.r_outer), self.n_r)
            radii = np.exp(t)
            # pin the endpoints so snapshot round-trips compare exactly
            radii[0], radii[-1] = self.r_inner, self.r_outer
        else:
            t = np.linspace(self.r_inner, self.r_outer, self.n_r)
            radii = t.copy()
        theta = np.arange(self.n_theta) * (2.0 * math.pi / self.n_theta)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "dt", float(t[1] - t[0]))
        object.__setattr__(self, "dtheta", 2.0 * math.pi / self.n_theta)

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    def polar(self):
        """Broadcast (R, THETA) node arrays of shape (n_r, n_theta)."""
        return np.meshgrid(self.radii, self.theta, indexing="ij")

    def nodes(self):
        """Cartesian (X1, X2) node arrays of shape (n_r, n_theta)."""
        rr, th = self.polar()
        return rr * np.cos(th), rr * np.sin(th)

    def same_geometry(self, other) -> bool:
        return (
            self.shape == other.shape
            and self.spacing == other.spacing
            and math.isclose(self.r_inner, other.r_inner, rel_tol=1e-12)
            and math.isclose(self.r_outer, other.r_outer, rel_tol=1e-12)
        )


def build_grid(r_inner, r_outer, n_r, n_theta, spacing=LOG_RADIAL) -> AnnularGrid:
    """Construct an AnnularGrid; validates radii, sizes and spacing."""
    return AnnularGrid(float(r_inner), float(r_outer), int(n_r), int(n_theta), spacing)


def _check_values(grid, values, name, allow_nonfinite=False):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(
            f"invalid-dimension: {name} has shape {values.shape}, "
            f"grid expects {grid.shape}"
        )
    if not allow_nonfinite and not np.all(np.isfinite(values)):
        raise ValueError(f"singular-input: non-finite entries in {name}")
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar samples, one per grid node.

    Inputs must be finite; diagnostic fields (e.g. pointwise dilatation with
    NaN at orientation failures) may opt out via ``allow_nonfinite``.
    """

    grid: AnnularGrid
    values: np.ndarray
    allow_nonfinite: bool = False

    def __post_init__(self):
        object.__setattr__(
            self,
            "values",
            _check_values(self.grid, self.values, "values", self.allow_nonfinite),
        )

    @classmethod
    def from_function(cls, grid, fn):
        """Sample fn(x1, x2) at the grid nodes."""
        x1, x2 = grid.nodes()
        return cls(grid, np.asarray(fn(x1, x2), dtype=float))

    @classmethod
    def from_radial(cls, grid, fn):
        """Sample a radial profile fn(r) at the grid nodes."""
        vals = np.broadcast_to(fn(grid.radii)[:, None], grid.shape)
        return cls(grid, np.array(vals, dtype=float))


@dataclass(frozen=True, eq=False)
class PlanarMapping:
    """Planar map w = (p, q) sampled per node (Cartesian components)."""

    grid: AnnularGrid
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _check_values(self.grid, self.p, "p"))
        object.__setattr__(self, "q", _check_values(self.grid, self.q, "q"))

    @classmethod
    def from_function(cls, grid, fn):
        x1, x2 = grid.nodes()
        p, q = fn(x1, x2)
        return cls(grid, np.asarray(p, float), np.asarray(q, float))


@dataclass(frozen=True, eq=False)
class SymMatrixField:
    """Symmetric 2x2 matrix per node, stored as the three entries."""

    grid: AnnularGrid
    m11: np.ndarray
    m12: np.ndarray
    m22: np.ndarray

    def __post_init__(self):
        for name in ("m11", "m12", "m22"):
            object.__setattr__(self, name, _check_values(self.grid, getattr(self, name), name))

    def trace(self):
        return self.m11 + self.m22

    def det(self):
        return self.m11 * self.m22 - self.m12 ** 2

    def eigenvalues(self):
        """Closed-form eigenvalues (lo, hi) per node."""
        mean = 0.5 * (self.m11 + self.m22)
        rad = np.hypot(0.5 * (self.m11 - self.m22), self.m12)
        return mean - rad, mean + rad


# ---------------------------------------------------------------------------
# Kelvin point map


def kelvin_point(x):
    """Inversion x -> x / |x|^2, acting on the last axis of length 2.

    An involution away from the origin; rejects the origin itself.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"invalid-dimension: expected 2-vectors, got shape {x.shape}")
    n2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(n2 == 0.0):
        raise ValueError("singular-input: kelvin_point is undefined at the origin")
    return x / n2


# ---------------------------------------------------------------------------
# Second-order difference stencils (radial parameter axis 0, angular axis 1)


def _diff_t(vals, dt):
    """d/dt along axis 0: centered inside, one-sided order 2 at the ends."""
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dt)
    out[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * dt)
    return out


def _diff2_t(vals, dt):
    """d2/dt2 along axis 0: centered inside, 4-point one-sided at the ends."""
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / dt ** 2
    out[0] = (2.0 * vals[0] - 5.0 * vals[1] + 4.0 * vals[2] - vals[3]) / dt ** 2
    out[-1] = (2.0 * vals[-1] - 5.0 * vals[-2] + 4.0 * vals[-3] - vals[-4]) / dt ** 2
    return out


def _diff_theta(vals, dtheta):
    return (np.roll(vals, -1, axis=1) - np.roll(vals, 1, axis=1)) / (2.0 * dtheta)


def _diff2_theta(vals, dtheta):
    return (np.roll(vals, -1, axis=1) - 2.0 * vals + np.roll(vals, 1, axis=1)) / dtheta ** 2


def _polar_derivatives(field: ScalarField):
    """Return (u_r, u_theta, u_rr, u_rtheta, u_thetatheta) as node arrays."""
    g = field.grid
    u = field.values
    u_t = _diff_t(u, g.dt)
    u_tt = _diff2_t(u, g.dt)
    u_q = _diff_theta(u, g.dtheta)
    u_qq = _diff2_theta(u, g.dtheta)
    u_tq = _diff_theta(u_t, g.dtheta)
    r = g.radii[:, None]
    if g.spacing == LOG_RADIAL:
        u_r = u_t / r
        u_rr = (u_tt - u_t) / r ** 2
        u_rq = u_tq / r
    else:
        u_r, u_rr, u_rq = u_t, u_tt, u_tq
    return u_r, u_q, u_rr, u_rq, u_qq


def gradient(field: ScalarField) -> PlanarMapping:
    """Cartesian gradient of a scalar field, second order at every node."""
    g = field.grid
    u_r, u_q, _, _, _ = _polar_derivatives(field)
    r = g.radii[:, None]
    c = np.cos(g.theta)[None, :]
    s = np.sin(g.theta)[None, :]
    u_q_over_r = u_q / r
    return PlanarMapping(g, c * u_r - s * u_q_over_r, s * u_r + c * u_q_over_r)


def hessian(field: ScalarField) -> SymMatrixField:
    """Cartesian Hessian via the polar chain rule, second order."""
    g = field.grid
    u_r, u_q, u_rr, u_rq, u_qq = _polar_derivatives(field)
    r = g.radii[:, None]
    c = np.cos(g.theta)[None, :]
    s = np.sin(g.theta)[None, :]
    # angular pieces that recur in every entry
    a = u_r / r + u_qq / r ** 2          # tangential second derivative
    m = u_rq / r - u_q / r ** 2          # mixed radial/tangential piece
    m11 = c ** 2 * u_rr + s ** 2 * a - 2.0 * s * c * m
    m22 = s ** 2 * u_rr + c ** 2 * a + 2.0 * s * c * m
    m12 = s * c * (u_rr - a) + (c ** 2 - s ** 2) * m
    return SymMatrixField(g, m11, m12, m22)


def laplacian(field: ScalarField) -> ScalarField:
    """Discrete Laplacian u_rr + u_r/r + u_qq/r^2.

    Built from the same stencil pieces as ``hessian``, so the Hessian trace
    and the Laplacian agree to rounding at every node.
    """
    g = field.grid
    u_r, _, u_rr, _, u_qq = _polar_derivatives(field)
    r = g.radii[:, None]
    return ScalarField(g, u_rr + u_r / r + u_qq / r ** 2)


# ---------------------------------------------------------------------------
# Quadrature


def ring_index(grid: AnnularGrid, radius: float) -> int:
    """Index of the grid ring at ``radius``; the radius must lie on the grid."""
    i = int(np.argmin(np.abs(grid.radii - radius)))
    if abs(grid.radii[i] - radius) > 1e-9 * max(1.0, abs(radius)):
        raise ValueError(
            f"radius-not-on-grid: {radius} is not a ring radius "
            f"(nearest is {grid.radii[i]!r})"
        )
    return i


def circle_flux_integral(w: PlanarMapping, radius: float) -> float:
    """Outward flux of w through the circle |x| = radius (a grid ring).

    Trapezoidal rule in theta, which is spectrally accurate for smooth
    periodic integrands.
    """
    g = w.grid
    i = ring_index(g, radius)
    c, s = np.cos(g.theta), np.sin(g.theta)
    radial = w.p[i] * c + w.q[i] * s
    return float(g.radii[i] * g.dtheta * np.sum(radial))


def window_slice(grid: AnnularGrid, r_lo: float, r_hi: float) -> slice:
    """Radial index slice covering [r_lo, r_hi]; edges snap to the nearest ring."""
    if r_lo >= r_hi:
        raise ValueError(f"window-outside-grid: empty window [{r_lo}, {r_hi}]")
    eps = 1e-9
    if r_hi < grid.r_inner * (1 - eps) or r_lo > grid.r_outer * (1 + eps):
        raise ValueError(
            f"window-outside-grid: [{r_lo}, {r_hi}] does not meet "
            f"[{grid.r_inner}, {grid.r_outer}]"
        )
    lo = int(np.argmin(np.abs(grid.radii - r_lo)))
    hi = int(np.argmin(np.abs(grid.radii - r_hi)))
    if hi - lo < 1:
        raise ValueError(f"window-outside-grid: [{r_lo}, {r_hi}] spans fewer than 2 rings")
    return slice(lo, hi + 1)


def annulus_integral(f: ScalarField, r_lo: float, r_hi: float) -> float:
    """Integral of f over the sub-annulus r_lo <= |x| <= r_hi.

    Tensor-product rule: trapezoid in the radial parameter (with the area
    Jacobian r dr dtheta), full periodic trapezoid in theta.  Window edges
    snap to grid rings.
    """
    g = f.grid
    sl = window_slice(g, r_lo, r_hi)
    vals = f.values[sl]
    r = g.radii[sl]
    # weight in the differenced parameter: r dr = r^2 ds on log grids
    jac = r ** 2 if g.spacing == LOG_RADIAL else r
    w = np.full(r.shape, g.dt)
    w[0] = w[-1] = 0.5 * g.dt
    radial = vals.sum(axis=1) * g.dtheta
    return float(np.sum(radial * jac * w))


# ---------------------------------------------------------------------------
# Snapshot file format
#
# header:  annular-field v1 <r_inner> <r_outer> <n_r> <n_theta> <spacing>
# then one node per line in row-major radial-then-angular order; scalar
# fields carry one column, planar mappings two.


def write_snapshot(path, field) -> None:
    """Write a ScalarField or PlanarMapping to a text snapshot."""
    g = field.grid
    header = (
        f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} {float(g.r_inner)!r} {float(g.r_outer)!r} "
        f"{g.n_r} {g.n_theta} {g.spacing}"
    )
    buf = io.StringIO()
    buf.write(header + "\n")
    if isinstance(field, ScalarField):
        for v in field.values.ravel():
            buf.write(f"{float(v)!r}\n")
    elif isinstance(field, PlanarMapping):
        for a, b in zip(field.p.ravel(), field.q.ravel()):
            buf.write(f"{float(a)!r} {float(b)!r}\n")
    else:
        raise ValueError(f"invalid-dimension: cannot snapshot {type(field).__name__}")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_snapshot(path):
    """Read a snapshot; returns ScalarField or PlanarMapping by column count."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[0] != SNAPSHOT_MAGIC or header[1] != SNAPSHOT_VERSION:
            raise ValueError(f"invalid-dimension: bad snapshot header in {path}")
        r_inner, r_outer = float(header[2]), float(header[3])
        n_r, n_theta, spacing = int(header[4]), int(header[5]), header[6]
        data = np.loadtxt(fh, ndmin=2)
    grid = build_grid(r_inner, r_outer, n_r, n_theta, spacing)
    if data.shape[0] != n_r * n_theta:
        raise ValueError(
            f"invalid-dimension: snapshot has {data.shape[0]} rows, "
            f"expected {n_r * n_theta}"
        )
    if data.shape[1] == 1:
        return ScalarField(grid, data[:, 0].reshape(grid.shape))
    if data.shape[1] == 2:
        return PlanarMapping(
            grid, data[:, 0].reshape(grid.shape), data[:, 1].reshape(grid.shape)
        )
    raise ValueError(f"invalid-dimension: snapshot has {data.shape[1]} columns")
