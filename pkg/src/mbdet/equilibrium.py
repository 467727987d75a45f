"""Equilibrium measure of the two-kernel logarithmic energy on ``[a, b]``.

Everything is built on the conformal map

    J(s) = (c1 s + c0) ((s + 1) / s)^(1/theta)

whose critical points ``s_a < -1`` and ``s_b > 1/theta`` are sent to the
endpoints ``a`` and ``b``.  The upper boundary values ``I1+(x)`` of the outer
inverse of ``J`` on ``(a, b)`` give the density, the distribution function and
the logarithmic potential of the measure.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BracketFailure,
    BranchCutError,
    ContinuationStall,
    DomainError,
    NewtonDivergence,
    NonFiniteSample,
    NonpositiveInterval,
    NonpositiveTheta,
    ToleranceNotMet,
)
from .quadrature import chebyshev_angles, tanh_sinh

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EquilibriumData:
    c0: float
    c1: float
    s_a: float
    s_b: float
    d_a: float
    d_b: float
    ell: float
    theta: float
    a: float
    b: float

    def to_dict(self) -> dict:
        return asdict(self)

    # vectorized J and its derivatives
    def J(self, s):
        return _J(s, self.c0, self.c1, self.theta)

    def dJ(self, s):
        return _dJ(s, self.c0, self.c1, self.theta)

    def d2J(self, s):
        return _d2J(s, self.c0, self.c1, self.theta)


@dataclass(frozen=True)
class BoundaryPoint:
    x: float
    s_plus: complex
    s_prime: complex


# ---------------------------------------------------------------------------
# the map J
# ---------------------------------------------------------------------------
def _q(s, theta):
    return np.exp(np.log((s + 1.0) / s) / theta)


def _J(s, c0, c1, theta):
    s = np.asarray(s, dtype=complex)
    return (c1 * s + c0) * _q(s, theta)


def _dJ(s, c0, c1, theta):
    s = np.asarray(s, dtype=complex)
    return _q(s, theta) * (c1 - (c1 * s + c0) / (theta * s * (s + 1.0)))


def _d2J(s, c0, c1, theta):
    s = np.asarray(s, dtype=complex)
    q = _q(s, theta)
    lam = (c1 * s + c0) / (theta * s * (s + 1.0))
    dlam = (c1 * s * (s + 1.0) - (c1 * s + c0) * (2.0 * s + 1.0)) / (
        theta * s**2 * (s + 1.0) ** 2
    )
    return -q / (theta * s * (s + 1.0)) * (c1 - lam) - q * dlam


def _on_cut(s: complex, tol: float = 1e-14) -> bool:
    return abs(s.imag) <= tol * (1.0 + abs(s)) and -1.0 - tol <= s.real <= tol


def map_J(s: complex, data: EquilibriumData) -> complex:
    """``J(s)`` with the principal branch of ``log((s+1)/s)``; cut on ``[-1, 0]``."""
    s = complex(s)
    if _on_cut(s):
        raise BranchCutError(f"s={s} lies on the branch cut [-1, 0]")
    return complex(data.J(s))


def critical_points(ratio: float, theta: float) -> tuple[float, float]:
    """Zeros ``(s_a, s_b)`` of ``J'`` for ``c0 / c1 = ratio``."""
    disc = math.sqrt(4.0 * theta * ratio + (1.0 - theta) ** 2)
    centre = (1.0 - theta) / (2.0 * theta)
    return centre - disc / (2.0 * theta), centre + disc / (2.0 * theta)


def _edge_value(s: float, theta: float) -> float:
    # J(s; x, 1) at a critical point s, where s + x = theta s (s + 1)
    return theta * s * (s + 1.0) * ((s + 1.0) / s) ** (1.0 / theta)


def _log_edge_ratio(x: float, theta: float) -> float:
    sa, sb = critical_points(x, theta)
    lb = math.log(sb * (sb + 1.0)) + math.log1p(1.0 / sb) / theta
    la = math.log(sa * (sa + 1.0)) + math.log1p(1.0 / sa) / theta
    return lb - la


def solve_coefficients(a: float, b: float, theta: float, tol: float = 1e-12) -> EquilibriumData:
    """Find ``(c0, c1)`` with ``J(s_a) = a``, ``J(s_b) = b`` and assemble the data.

    The ratio ``x = c0/c1`` solves ``f(x) = b/a`` where
    ``f(x) = J(s_b(x); x, 1) / J(s_a(x); x, 1)`` is strictly decreasing from
    ``+inf`` (at ``x = 1``) to ``1`` (at infinity).
    """
    if not (a > 0 and b > a):
        raise NonpositiveInterval(f"need 0 < a < b, got a={a}, b={b}")
    if not theta > 0:
        raise NonpositiveTheta(f"theta must be positive, got {theta}")
    target = math.log(b / a)

    def g(x):
        return _log_edge_ratio(x, theta) - target

    lo_eps = 1e-3
    while True:
        lo = 1.0 + lo_eps
        try:
            if lo > 1.0 and g(lo) > 0:
                break
        except (ValueError, ZeroDivisionError, OverflowError):
            pass
        lo_eps *= 1e-2
        if lo_eps < 1e-15:
            raise BracketFailure(f"cannot bracket f(x) = b/a = {b / a} near x = 1 (theta={theta})")
    hi = 2.0
    while True:
        try:
            if g(hi) < 0:
                break
        except (ValueError, OverflowError):
            raise BracketFailure(f"overflow while bracketing f(x) = b/a (theta={theta})")
        hi *= 2.0
        if hi > 1e300:
            raise BracketFailure(f"cannot bracket f(x) = b/a = {b / a} (theta={theta})")

    xs = brentq(g, lo, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500)
    sa, sb = critical_points(xs, theta)
    c1 = b / _edge_value(sb, theta)
    c0 = xs * c1
    da = sa * (1.0 + sa) * (sb * theta - 1.0) / (sb - sa)
    db = sb * (1.0 + sb) * (1.0 - sa * theta) / (sb - sa)
    ell = -math.log(c1) - theta * math.log(c0)
    data = EquilibriumData(c0, c1, sa, sb, da, db, ell, float(theta), float(a), float(b))

    res_a = abs(complex(data.J(sa)) - a)
    res_b = abs(complex(data.J(sb)) - b)
    if max(res_a, res_b) > tol * (b - a):
        raise ToleranceNotMet(
            f"endpoint residuals {res_a:.3e}, {res_b:.3e} exceed {tol * (b - a):.3e}"
        )
    return data


@lru_cache(maxsize=128)
def equilibrium(a: float, b: float, theta: float) -> EquilibriumData:
    """Cached :func:`solve_coefficients` with the default tolerance."""
    return solve_coefficients(float(a), float(b), float(theta))


def edge_coefficients(data: EquilibriumData) -> tuple[float, float]:
    """Coefficients ``A_a, A_b`` of the inverse square root blow-up of the density."""
    j2a = complex(data.d2J(data.s_a)).real
    j2b = complex(data.d2J(data.s_b)).real
    A_a = 1.0 / (math.sqrt(2.0) * math.pi * abs(data.s_a) * math.sqrt(abs(j2a)))
    A_b = 1.0 / (math.sqrt(2.0) * math.pi * data.s_b * math.sqrt(j2b))
    return A_a, A_b


# ---------------------------------------------------------------------------
# Newton iterations
# ---------------------------------------------------------------------------
def _newton_vec(data, z, s0, maxiter=60):
    """Vectorized Newton for ``J(s) = z``.  Returns ``(s, converged_mask)``."""
    s = np.array(s0, dtype=complex, copy=True)
    z = np.asarray(z, dtype=complex)
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(maxiter):
        act = ~done
        if not act.any():
            break
        sa = s[act]
        F = data.J(sa) - z[act]
        step = F / data.dJ(sa)
        bad = ~np.isfinite(step)
        step[bad] = 0.0
        # rounding in J near a critical point sits a few ulps above eps |z|
        at_noise = np.abs(F) <= 8 * _EPS * np.abs(z[act])
        sa = sa - np.where(at_noise, 0.0, step)
        s[act] = sa
        fin = np.abs(step) <= 8 * _EPS * np.maximum(np.abs(sa), 1e-300)
        fin |= bad | at_noise
        idx = np.flatnonzero(act)
        done[idx[fin]] = True
        s[idx[bad]] = np.nan
    # an iterate stalled at the rounding floor is still a root; the residual decides
    ok = np.isfinite(s)
    res = np.full(s.shape, np.inf)
    res[ok] = np.abs(data.J(s[ok]) - z[ok])
    ok &= res <= 1e-12 * (1.0 + np.abs(z))
    return s, ok


def _newton(data, z, s0, maxiter=60):
    s, ok = _newton_vec(data, np.array([z]), np.array([s0]), maxiter)
    if not ok[0]:
        raise NewtonDivergence(
            f"Newton failed for J(s) = {z}", last_iterate=s[0],
            residual=abs(complex(data.J(s[0])) - z) if np.isfinite(s[0]) else math.inf,
        )
    return complex(s[0])


def _continue(data, path: Callable[[float], complex], s_start: complex,
              lam0=0.0, lam1=1.0, accept=None, h0=0.05):
    """Track the root of ``J(s) = path(lam)`` from ``lam0`` to ``lam1``."""
    lam, s = lam0, s_start
    h = h0
    while lam < lam1:
        nxt = min(lam + h, lam1)
        z_old, z_new = path(lam), path(nxt)
        pred = s + (z_new - z_old) / complex(data.dJ(s))
        try:
            s_new = _newton(data, z_new, pred)
            good = accept is None or accept(s_new)
            good = good and abs(s_new - pred) <= 0.5 * abs(s_new - s) + 1e-12 * (1 + abs(s))
        except NewtonDivergence:
            good = False
        if good:
            lam, s = nxt, s_new
            h = min(2.0 * h, 0.25)
        else:
            h *= 0.5
            if h < 1e-13:
                raise ContinuationStall(f"continuation stalled at lambda={lam}, z={path(lam)}")
    return s


# ---------------------------------------------------------------------------
# outer inverse I1
# ---------------------------------------------------------------------------
def inverse_outer(z: complex, data: EquilibriumData) -> complex:
    """``I1(z)``: the solution of ``J(s) = z`` outside the closed curve ``gamma``.

    Newton is started far away, where ``I1(z) ~ (z - c0 - c1/theta) / c1``, and
    continued along a path to ``z`` that never touches ``[a, b]``.
    """
    z = complex(z)
    a, b = data.a, data.b
    if z.imag == 0.0 and a <= z.real <= b:
        raise DomainError(f"z={z} lies on the support [{a}, {b}]")
    scale = 1e3 * (abs(z) + b)
    if z.imag != 0.0:
        far = z + 1j * math.copysign(scale, z.imag)
    elif z.real > b:
        far = z + scale
    else:
        far = z - scale

    def path(lam):
        # geometric approach: the distance to z shrinks like scale**(1-lam)
        if lam >= 1.0:
            return z
        return z + (far - z) * (1.0 - lam) ** 4

    seed = (far - data.c0 - data.c1 / data.theta) / data.c1
    s0 = _newton(data, far, seed)
    return _continue(data, path, s0, accept=lambda s: not _on_cut(s, 1e-12))


# ---------------------------------------------------------------------------
# upper boundary values I1+ on (a, b)
# ---------------------------------------------------------------------------
class _BoundaryTracker:
    """Anchored continuation for ``I1+(x)``, parametrized by the Chebyshev angle.

    ``x(phi) = mid + half cos(phi)``: ``phi = 0`` is ``b`` and ``phi = pi`` is
    ``a``.  In this variable ``I1+`` is smooth up to both edges, so anchors on
    a uniform-ish grid seed Newton for any query point.
    """

    PHI_EDGE = 2e-3

    def __init__(self, data: EquilibriumData):
        self.data = data
        self.mid = 0.5 * (data.a + data.b)
        self.half = 0.5 * (data.b - data.a)
        self.j2a = complex(data.d2J(data.s_a)).real
        self.j2b = complex(data.d2J(data.s_b)).real
        self._build()

    def x_of_phi(self, phi):
        return self.mid + self.half * np.cos(phi)

    def _edge_seed(self, phi):
        phi = np.asarray(phi, dtype=float)
        db = 2.0 * self.half * np.sin(0.5 * phi) ** 2
        da = 2.0 * self.half * np.cos(0.5 * phi) ** 2
        near_b = phi < 0.5 * np.pi
        s = np.where(
            near_b,
            self.data.s_b + 1j * np.sqrt(2.0 * db / self.j2b),
            self.data.s_a + 1j * np.sqrt(2.0 * da / abs(self.j2a)),
        )
        return s

    def _build(self):
        data = self.data
        p0, p1 = self.PHI_EDGE, math.pi - self.PHI_EDGE
        s = _newton(data, self.x_of_phi(p0), complex(self._edge_seed(p0)))
        phis, ss = [p0], [s]
        phi, h = p0, 0.02
        while phi < p1:
            nxt = min(phi + h, p1)
            x_old, x_new = self.x_of_phi(phi), self.x_of_phi(nxt)
            pred = s + (x_new - x_old) / complex(data.dJ(s))
            try:
                s_new = _newton(data, x_new, pred)
                good = s_new.imag > 0 and abs(s_new - pred) <= 0.5 * abs(s_new - s) + 1e-13
            except NewtonDivergence:
                good = False
            if good:
                phi, s = nxt, s_new
                phis.append(phi)
                ss.append(s)
                h = min(1.5 * h, 0.04)
            else:
                h *= 0.5
                if h < 1e-12:
                    raise ContinuationStall(f"boundary continuation stalled at phi={phi}")
        self.phis = np.array(phis)
        self.ss = np.array(ss)
        self.xs = self.x_of_phi(self.phis)

    def solve_phi(self, phi) -> np.ndarray:
        """``I1+(x(phi))`` for an array of angles in ``[0, pi]``."""
        data = self.data
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        out = np.empty(phi.shape, dtype=complex)
        at_b = phi <= 0.0
        at_a = phi >= math.pi
        out[at_b] = data.s_b
        out[at_a] = data.s_a
        inner = ~(at_b | at_a)
        if not inner.any():
            return out
        ph = phi[inner]
        x = self.x_of_phi(ph)
        edge = (ph < self.PHI_EDGE) | (ph > math.pi - self.PHI_EDGE)
        seed = np.empty(ph.shape, dtype=complex)
        seed[edge] = self._edge_seed(ph[edge])
        k = np.clip(np.searchsorted(self.phis, ph[~edge]), 1, len(self.phis) - 1)
        left_closer = (ph[~edge] - self.phis[k - 1]) < (self.phis[k] - ph[~edge])
        k = np.where(left_closer, k - 1, k)
        sk = self.ss[k]
        seed[~edge] = sk + (x[~edge] - self.xs[k]) / data.dJ(sk)

        s, ok = _newton_vec(data, x, seed)
        ok &= s.imag > 0
        # extremely close to an edge Newton cannot improve on the local expansion
        stuck = ~ok & edge
        if stuck.any():
            res = np.abs(data.J(seed[stuck]) - x[stuck])
            accept = res <= 1e-12 * data.b
            idx = np.flatnonzero(stuck)
            s[idx[accept]] = seed[stuck][accept]
            ok[idx[accept]] = True
        for i in np.flatnonzero(~ok):
            s[i] = self._slow(ph[i])
        out[inner] = s
        return out

    def _slow(self, phi: float) -> complex:
        # continuation from the nearest anchor, with step control
        k = int(np.argmin(np.abs(self.phis - phi)))
        p_start = float(self.phis[k])
        data = self.data

        def path(lam):
            return self.x_of_phi(p_start + lam * (phi - p_start)) + 0j

        return _continue(data, path, complex(self.ss[k]), accept=lambda s: s.imag > 0, h0=0.1)


@lru_cache(maxsize=64)
def _tracker(data: EquilibriumData) -> _BoundaryTracker:
    return _BoundaryTracker(data)


def phi_of_x(x, data: EquilibriumData):
    x = np.asarray(x, dtype=float)
    return 2.0 * np.arctan2(np.sqrt(np.maximum(data.b - x, 0.0)), np.sqrt(np.maximum(x - data.a, 0.0)))


def _check_open(x, data):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > data.a)) or np.any(~(x < data.b)):
        raise DomainError(f"points must lie in the open interval ({data.a}, {data.b})")
    return x


def boundary_values(x, data: EquilibriumData) -> np.ndarray:
    """Vectorized ``I1+(x)`` for ``x`` in ``(a, b)``."""
    x = _check_open(x, data)
    return _tracker(data).solve_phi(phi_of_x(x, data)).reshape(x.shape)


def inverse_boundary_upper(x: float, data: EquilibriumData) -> BoundaryPoint:
    """``I1+(x)`` with ``Im > 0`` and its derivative ``1 / J'(I1+(x))``."""
    s = complex(boundary_values(np.array([x]), data)[0])
    return BoundaryPoint(float(x), s, 1.0 / complex(data.dJ(s)))


def _scalar(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def density(x, data: EquilibriumData):
    """``rho(x) = -(1/pi) Im(I1+'(x) / I1+(x))``; accepts scalars or arrays."""
    s = boundary_values(x, data)
    rho = -np.imag(1.0 / (s * data.dJ(s))) / math.pi
    return _scalar(rho, x)


def density_from_poles(x, data: EquilibriumData):
    """Density from the pole form ``-sum_j d_j/(pi x) Im(1/(I1+(x) - s_j))``."""
    xa = _check_open(x, data)
    s = boundary_values(xa, data)
    acc = data.d_a * np.imag(1.0 / (s - data.s_a)) + data.d_b * np.imag(1.0 / (s - data.s_b))
    return _scalar(-acc / (math.pi * xa), x)


def cdf(t, data: EquilibriumData):
    """``mu([a, t]) = (pi - arg I1+(t)) / pi``; exact 0 and 1 at the endpoints."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < data.a) or np.any(t_arr > data.b):
        raise DomainError(f"t must lie in [{data.a}, {data.b}]")
    out = np.empty(t_arr.shape)
    out[t_arr == data.a] = 0.0
    out[t_arr == data.b] = 1.0
    inner = (t_arr > data.a) & (t_arr < data.b)
    if inner.any():
        s = _tracker(data).solve_phi(phi_of_x(t_arr[inner], data))
        out[inner] = (math.pi - np.angle(s)) / math.pi
    out = out.reshape(np.shape(t))
    return _scalar(out, t)


def log_potential(t, data: EquilibriumData):
    """``int log|t - x| rho(x) dx = log(c1 |I1+(t)|)`` for ``t`` in ``(a, b)``."""
    s = boundary_values(t, data)
    return _scalar(np.log(data.c1 * np.abs(s)), t)


# ---------------------------------------------------------------------------
# integration against the equilibrium measure
# ---------------------------------------------------------------------------
def _measure_weight(phi, data: EquilibriumData) -> np.ndarray:
    """``rho(x(phi)) * |dx/dphi|``, smooth on ``[0, pi]`` including the edges."""
    tr = _tracker(data)
    phi = np.asarray(phi, dtype=float)
    sin_phi = np.sin(phi)
    db = 2.0 * tr.half * np.sin(0.5 * phi) ** 2
    da = 2.0 * tr.half * np.cos(0.5 * phi) ** 2
    A_a, A_b = edge_coefficients(data)
    g = np.empty(phi.shape)
    lim_b = db < 1e-12 * (data.b - data.a)
    lim_a = da < 1e-12 * (data.b - data.a)
    g[lim_b] = A_b * math.sqrt(data.b - data.a)
    g[lim_a] = A_a * math.sqrt(data.b - data.a)
    inner = ~(lim_a | lim_b)
    if inner.any():
        s = tr.solve_phi(phi[inner])
        rho = -np.imag(1.0 / (s * data.dJ(s))) / math.pi
        g[inner] = rho * tr.half * sin_phi[inner]
    return g


def _apply(f, x):
    try:
        vals = np.asarray(f(x), dtype=complex)
        if vals.shape != x.shape:
            raise ValueError
    except Exception:
        vals = np.array([complex(f(float(xi))) for xi in x])
    if not np.all(np.isfinite(vals)):
        raise NonFiniteSample("integrand returned a non-finite value")
    return vals


def integrate_against_density(f, data: EquilibriumData, nodes: int = 256):
    """``int f(x) rho(x) dx`` by the midpoint rule in ``x = mid + half cos(phi)``.

    The substitution absorbs the inverse square root edge behaviour, leaving a
    smooth periodic integrand, so convergence is geometric for analytic ``f``.
    """
    phi, w = chebyshev_angles(nodes)
    x = 0.5 * (data.a + data.b) + 0.5 * (data.b - data.a) * np.cos(phi)
    g = _measure_weight(phi, data)
    val = w * np.sum(_apply(f, x) * g)
    return val.real if val.imag == 0 else val


def _split_log_integrals(x: float, data: EquilibriumData, nodes: int):
    """``(int log|x-y| rho(y) dy, int log|x^th - y^th| rho(y) dy)`` split at ``y = x``."""
    u, dl, dr, w = tanh_sinh(nodes)
    tr = _tracker(data)
    half = tr.half
    phx = float(phi_of_x(x, data))
    th = data.theta
    out1 = out2 = 0.0
    for lo, hi in ((0.0, phx), (phx, math.pi)):
        L = 0.5 * (hi - lo)
        if lo == 0.0:
            phi = lo + L * dl
            delta = L * dr  # phx - phi
        else:
            phi = lo + L * dl
            delta = -L * dl  # phx - phi
        g = _measure_weight(phi, data)
        # x - y = -2 half sin((phx + phi)/2) sin((phx - phi)/2)
        diff = -2.0 * half * np.sin(0.5 * (phx + phi)) * np.sin(0.5 * delta)
        y = x - diff
        log_d = np.log(np.abs(diff))
        r = diff / y
        ratio = y ** (th - 1.0) * np.expm1(th * np.log1p(r)) / r
        out1 += L * np.sum(w * log_d * g)
        out2 += L * np.sum(w * (log_d + np.log(np.abs(ratio))) * g)
    return out1, out2


def log_potential_quadrature(x: float, data: EquilibriumData, nodes: int = 400) -> float:
    """Direct quadrature of ``int log|x - y| rho(y) dy`` (independent of ``I1+(x)``)."""
    return _split_log_integrals(float(_check_open(x, data)), data, nodes)[0]


def el_residual(x: float, data: EquilibriumData, nodes: int = 400) -> float:
    """Euler-Lagrange residual ``int log|x-y| dmu + int log|x^th-y^th| dmu + ell``."""
    x = float(_check_open(x, data))
    i1, i2 = _split_log_integrals(x, data, nodes)
    res = i1 + i2 + data.ell
    if not math.isfinite(res):
        raise NonFiniteSample(f"non-finite Euler-Lagrange residual at x={x}")
    return res
