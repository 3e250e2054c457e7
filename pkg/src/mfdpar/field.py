"""Analytic flux function, advective field and manufactured solutions.

The advective/magnetic unit field is derived from a flux function with a
closed-flux-surface term (a regularized exponential integral) and two
logarithmic terms producing an X-point below the domain, mimicking a
lower-single-null tokamak cross-section:

    psi(x, y) = A/2 * [ Ei(-r1^2/a^2) - log(r1^2) - log(r2^2) ]

with r1, r2 the distances to (x_mag, y_mag1) and (x_mag, y_mag2).  The field
itself is the Hamiltonian rotation of the flux gradient plus a constant axial
component,

    b = (d(psi)/dy, -d(psi)/dx, -1),

which is divergence-free by construction.  All first and second derivatives
of psi are provided in closed form; Ei(-r1^2/a^2) - log(r1^2) is smooth at
r1 = 0, so the field is regular everywhere as long as (x_mag, y_mag2) lies
outside the domain.

The module also defines the manufactured solutions of the shear Alfven wave
verification cases and their source terms, evaluated from the closed-form
derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DualGrid, StaggeredScalar

EULER_GAMMA = 0.5772156649015328606

# -- exponential integral ----------------------------------------------------


def _ei_neg_series(u):
    # Ei(-u) = gamma + ln u + sum_{n>=1} (-u)^n / (n n!); fine for u <= ~1.5
    out = np.full_like(u, EULER_GAMMA) + np.log(u)
    term = np.ones_like(u)
    for n in range(1, 30):
        term = term * (-u) / n
        out += term / n
    return out


def _e1_cf(u, maxiter=200):
    # Continued fraction E1(u) = e^-u / (u+1 - 1/(u+3 - 4/(u+5 - ...))),
    # evaluated with the modified Lentz algorithm.
    tiny = 1e-300
    f = np.full_like(u, tiny)
    c = f.copy()
    d = np.zeros_like(u)
    for k in range(1, maxiter + 1):
        a = 1.0 if k == 1 else -((k - 1.0) ** 2)
        b = u + (2.0 * k - 1.0)
        d = b + a * d
        d[d == 0.0] = tiny
        c = b + a / c
        c[c == 0.0] = tiny
        d = 1.0 / d
        delta = c * d
        f = f * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return np.exp(-u) * f


def expint_ei_neg(u):
    """Ei(-u) for u > 0, accurate to ~1e-13 relative.

    Power series below u = 1.5 and a continued fraction for E1(u) = -Ei(-u)
    above; only negative arguments of Ei occur in the flux function.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0):
        raise ValueError("expint_ei_neg requires u > 0")
    out = np.empty_like(u_arr)
    small = u_arr <= 1.5
    if np.any(small):
        out[small] = _ei_neg_series(u_arr[small])
    if np.any(~small):
        out[~small] = -_e1_cf(u_arr[~small])
    return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out


def _ei_neg_regular(w):
    """Ei(-w) - log(w), extended smoothly through w = 0."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = w <= 1.5
    if np.any(small):
        ws = w[small]
        acc = np.full_like(ws, EULER_GAMMA)
        term = np.ones_like(ws)
        for n in range(1, 30):
            term = term * (-ws) / n
            acc += term / n
        out[small] = acc
    if np.any(~small):
        wl = w[~small]
        out[~small] = -_e1_cf(wl) - np.log(wl)
    return out


# -- flux function -----------------------------------------------------------


@dataclass(frozen=True)
class PsiParams:
    """Parameters of the flux function."""

    a_mag: float
    x_mag: float
    y_mag1: float
    y_mag2: float
    a_s: float

    def __post_init__(self):
        if not self.a_s > 0.0:
            raise ValueError("a_s must be positive")

    @classmethod
    def from_domain(cls, lx: float, ly: float, a_mag: float | None = None):
        """Defaults scaled with the domain extents.

        The amplitude defaults to 25*lx/12, which keeps the in-plane field
        components O(1) so the stiffest wave frequencies stay resolvable by
        the explicit integrator at its reference step size.
        """
        if a_mag is None:
            a_mag = 25.0 * lx / 12.0
        params = cls(a_mag=a_mag, x_mag=lx / 2.0, y_mag1=5.0 * ly / 8.0,
                     y_mag2=18.0 * ly / 40.0 - 5.0 * ly / 8.0, a_s=ly / 8.0)
        params.check_outside_domain(lx, ly)
        return params

    def check_outside_domain(self, lx: float, ly: float):
        """The second log center is a true singularity; keep it outside."""
        if 0.0 <= self.x_mag <= lx and 0.0 <= self.y_mag2 <= ly:
            raise ValueError(
                "(x_mag, y_mag2) lies inside the domain; psi would be singular"
            )


def _r2sq(x, y, params):
    dx = np.asarray(x, dtype=float) - params.x_mag
    dy2 = np.asarray(y, dtype=float) - params.y_mag2
    return dx, dy2, dx * dx + dy2 * dy2


def psi(x, y, params: PsiParams):
    """Flux function value; regular at (x_mag, y_mag1)."""
    dx = np.asarray(x, dtype=float) - params.x_mag
    dy1 = np.asarray(y, dtype=float) - params.y_mag1
    _, _, r2 = _r2sq(x, y, params)
    if np.any(r2 == 0.0):
        raise ValueError("psi evaluated at the singular point (x_mag, y_mag2)")
    a2 = params.a_s ** 2
    w = (dx * dx + dy1 * dy1) / a2
    val = 0.5 * params.a_mag * (_ei_neg_regular(w) - np.log(a2) - np.log(r2))
    return val if val.ndim else float(val)


def _gfun(u, a2):
    # g(u) = (exp(-u/a^2) - 1)/u, with g(0) = -1/a^2.
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    nz = u != 0.0
    out[nz] = np.expm1(-u[nz] / a2) / u[nz]
    out[~nz] = -1.0 / a2
    return out


def _gfun_prime(u, a2):
    # g'(u) = -(w e^-w + expm1(-w))/u^2 with w = u/a^2; series near w = 0.
    u = np.asarray(u, dtype=float)
    w = u / a2
    out = np.empty_like(u)
    small = w < 1e-4
    ws = w[small]
    out[small] = (0.5 - ws / 3.0 + ws * ws / 8.0) / a2 ** 2
    ul = u[~small]
    wl = w[~small]
    out[~small] = -(wl * np.exp(-wl) + np.expm1(-wl)) / (ul * ul)
    return out


def grad_psi(x, y, params: PsiParams):
    """(d(psi)/dx, d(psi)/dy) in closed form.

    The exponential-integral and first-log gradients combine into the smooth
    kernel g(r1^2) = (exp(-r1^2/a^2) - 1)/r1^2, removing the 1/r1^2
    singularity at the magnetic axis.
    """
    dx = np.asarray(x, dtype=float) - params.x_mag
    dy1 = np.asarray(y, dtype=float) - params.y_mag1
    _, dy2, r2 = _r2sq(x, y, params)
    if np.any(r2 == 0.0):
        raise ValueError("gradient evaluated at the singular point")
    a2 = params.a_s ** 2
    g = _gfun(dx * dx + dy1 * dy1, a2)
    px = params.a_mag * (dx * g - dx / r2)
    py = params.a_mag * (dy1 * g - dy2 / r2)
    if px.ndim:
        return px, py
    return float(px), float(py)


def psi_second_derivatives(x, y, params: PsiParams):
    """(psi_xx, psi_xy, psi_yy) in closed form."""
    dx = np.asarray(x, dtype=float) - params.x_mag
    dy1 = np.asarray(y, dtype=float) - params.y_mag1
    _, dy2, r2 = _r2sq(x, y, params)
    if np.any(r2 == 0.0):
        raise ValueError("second derivatives evaluated at the singular point")
    a2 = params.a_s ** 2
    u = dx * dx + dy1 * dy1
    g = _gfun(u, a2)
    gp = _gfun_prime(u, a2)
    r4 = r2 * r2
    pxx = params.a_mag * (g + 2.0 * dx * dx * gp
                          - 1.0 / r2 + 2.0 * dx * dx / r4)
    pxy = params.a_mag * (2.0 * dx * dy1 * gp + 2.0 * dx * dy2 / r4)
    pyy = params.a_mag * (g + 2.0 * dy1 * dy1 * gp
                          - 1.0 / r2 + 2.0 * dy2 * dy2 / r4)
    return pxx, pxy, pyy


# -- advective field ---------------------------------------------------------


@dataclass(frozen=True)
class AdvectiveField:
    """The unit advective field b = (psi_y, -psi_x, -1).

    ``kind`` records which model the field is used in; after the
    nondimensionalization of the wave operators the components coincide, so
    it does not change any value.  ``params=None`` gives the uniform field
    (0, 0, -1).
    """

    params: PsiParams | None
    kind: str = "wave"

    def b_xy(self, x, y):
        """In-plane components (b_x, b_y) at the given points."""
        if self.params is None:
            z = np.zeros_like(np.asarray(x, dtype=float))
            return z, z.copy()
        px, py = grad_psi(x, y, self.params)
        return py, -np.asarray(px)

    def b_xy_jacobian(self, x, y):
        """(db_x/dx, db_x/dy, db_y/dx, db_y/dy) at the given points."""
        if self.params is None:
            z = np.zeros_like(np.asarray(x, dtype=float))
            return z, z.copy(), z.copy(), z.copy()
        pxx, pxy, pyy = psi_second_derivatives(x, y, self.params)
        return pxy, pyy, -pxx, -pxy

    def directional_derivative(self, x, y, fx, fy, fz):
        """b . grad(f) from the analytic partials of f at (x, y)."""
        bx, by = self.b_xy(x, y)
        return bx * fx + by * fy - fz

    def parallel_laplacian(self, x, y, fx, fy, fz, fxx, fxy, fxz, fyy,
                           fyz, fzz):
        """b . grad(b . grad f) from analytic partials of f at (x, y)."""
        bx, by = self.b_xy(x, y)
        bxx, bxy, byx, byy = self.b_xy_jacobian(x, y)
        quad = (bx * bx * fxx + by * by * fyy + fzz
                + 2.0 * bx * by * fxy - 2.0 * bx * fxz - 2.0 * by * fyz)
        drift_x = bx * bxx + by * bxy
        drift_y = bx * byx + by * byy
        return quad + drift_x * fx + drift_y * fy


def sample_b(field: AdvectiveField, grid: DualGrid, tag: str):
    """Sample (b_x, b_y, b_z) at the nodes of one grid."""
    x, y, _ = grid.mesh(tag)
    bx, by = field.b_xy(x, y)
    bz = np.full_like(bx, -1.0)
    return (StaggeredScalar(tag, bx), StaggeredScalar(tag, by),
            StaggeredScalar(tag, bz))


# -- manufactured solutions --------------------------------------------------


def manufactured_solution(which: str, x, y, z, t):
    """Manufactured fields for the wave-system verification runs."""
    if which == "phi":
        return 3.1 + 0.8 * np.sin(y + 0.1) * np.sin(z) * np.sin(x + t)
    if which == "v":
        return np.sin(y + 0.2) * np.sin(z + 0.2) * np.sin(x + t + 0.2)
    raise ValueError(f"unknown manufactured field {which!r}")


def manufactured_time_derivative(which: str, x, y, z, t):
    """Time derivative of a manufactured field."""
    if which == "phi":
        return _phi_partials(x, y, z, t)["t"]
    if which == "v":
        return _v_partials(x, y, z, t)["t"]
    raise ValueError(f"unknown manufactured field {which!r}")


def manufactured_gradient(which: str, x, y, z, t):
    """Spatial gradient (d/dx, d/dy, d/dz) of a manufactured field."""
    if which == "phi":
        p = _phi_partials(x, y, z, t)
    elif which == "v":
        p = _v_partials(x, y, z, t)
    else:
        raise ValueError(f"unknown manufactured field {which!r}")
    return p["x"], p["y"], p["z"]


def _phi_partials(x, y, z, t):
    sy, cy = np.sin(y + 0.1), np.cos(y + 0.1)
    sz, cz = np.sin(z), np.cos(z)
    sx, cx = np.sin(x + t), np.cos(x + t)
    return {
        "t": 0.8 * sy * sz * cx,
        "x": 0.8 * sy * sz * cx,
        "y": 0.8 * cy * sz * sx,
        "z": 0.8 * sy * cz * sx,
        "perp_lap_t": -1.6 * sy * sz * cx,
    }


def _v_partials(x, y, z, t):
    sy, cy = np.sin(y + 0.2), np.cos(y + 0.2)
    sz, cz = np.sin(z + 0.2), np.cos(z + 0.2)
    sx, cx = np.sin(x + t + 0.2), np.cos(x + t + 0.2)
    v = sy * sz * sx
    return {
        "v": v,
        "t": sy * sz * cx,
        "x": sy * sz * cx,
        "y": cy * sz * sx,
        "z": sy * cz * sx,
        "xx": -v,
        "yy": -v,
        "zz": -v,
        "xy": cy * sz * cx,
        "xz": sy * cz * cx,
        "yz": cy * cz * sx,
    }


def mms_sources(x, y, z, t, zeta: float, eta: float, field: AdvectiveField):
    """Source terms (S_phi, S_v) that make the manufactured fields solve

        d(perp_lap phi)/dt = -par_grad(v) + S_phi,
        dv/dt = zeta*par_grad(phi) + eta*par_lap(v) + S_v,

    with all continuous operators in their dimensionless form.
    """
    ph = _phi_partials(x, y, z, t)
    vv = _v_partials(x, y, z, t)
    par_grad_v = field.directional_derivative(x, y, vv["x"], vv["y"], vv["z"])
    s_phi = ph["perp_lap_t"] + par_grad_v
    par_grad_phi = field.directional_derivative(x, y, ph["x"], ph["y"],
                                                ph["z"])
    par_lap_v = field.parallel_laplacian(
        x, y, vv["x"], vv["y"], vv["z"], vv["xx"], vv["xy"], vv["xz"],
        vv["yy"], vv["yz"], vv["zz"])
    s_v = vv["t"] - zeta * par_grad_phi - eta * par_lap_v
    return s_phi, s_v
