"""Arbitrary-precision evaluation of Muttalib-Borodin determinants.

``D_n(w) = det( int_a^b x^(k + j theta) w(x) dx )_{j,k=0}^{n-1}``.

Moments are computed panel by panel between consecutive singularities with
tanh-sinh quadrature in multiple precision (gmpy2); the determinant is taken by
Gaussian elimination with partial pivoting at the same precision.  Every
determinant is recomputed at ``verify_factor`` times the working precision.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
import mpmath
from gmpy2 import mpc, mpfr

from .ensemble import ORACLE, EnsembleSpec, validate_spec
from .errors import PrecisionLoss, QuadratureStall, SingularMatrix, SpecMismatch

MAX_LEVEL = 12


@dataclass(frozen=True)
class PrecisionPolicy:
    base_bits: int = 256
    per_n_bits: int = 24
    verify_factor: int = 2

    def bits(self, n: int) -> int:
        return max(self.base_bits, self.per_n_bits * n)

    @classmethod
    def from_env(cls, **kw) -> "PrecisionPolicy":
        env = os.environ.get("MB_PRECISION_BITS")
        if env:
            kw.setdefault("base_bits", int(env))
        return cls(**kw)


@dataclass(frozen=True)
class DeterminantRecord:
    n: int
    log_abs: mpmath.mpf
    phase: float
    precision_bits: int
    err_estimate: float

    @property
    def log_det(self) -> complex:
        return complex(float(self.log_abs), self.phase)


def _to_mp(x):
    if isinstance(x, type(mpc())):
        return mpmath.mpc(_to_mp(x.real), _to_mp(x.imag))
    m, e = x.as_mantissa_exp()
    return mpmath.mpf((int(m), int(e)))


# ---------------------------------------------------------------------------
# weight evaluation in multiple precision
# ---------------------------------------------------------------------------
class _Panel:
    """One panel ``[lo, hi]`` between consecutive singular points."""

    def __init__(self, spec: EnsembleSpec, index: int, complex_weight: bool):
        pts = [spec.a] + spec.locations + [spec.b]
        self.lo, self.hi = pts[index], pts[index + 1]
        self.spec = spec
        self.index = index
        self.complex_weight = complex_weight
        # (exponent, location, where): where is "lo", "hi" or None
        factors = [(spec.alpha_left, spec.a, "lo" if index == 0 else None, +1)]
        for j, s in enumerate(spec.singularities, start=1):
            where = "lo" if j == index else ("hi" if j == index + 1 else None)
            factors.append((s.alpha, s.t, where, 0))
        factors.append((spec.alpha_right, spec.b, "hi" if index + 1 == len(pts) - 1 else None, -1))
        self.factors = [f for f in factors if f[0] != 0]
        # worst endpoint exponent decides how far the tanh-sinh tails must reach
        ends = [f[0].real for f in self.factors if f[2] is not None]
        self.alpha_min = min([0.0] + ends)

    def constant(self):
        """Log of the jump factors, constant on the panel, at the current precision."""
        ph = mpc(0)
        for j, s in enumerate(self.spec.singularities, start=1):
            ph += (1 if j > self.index else -1) * mpc(s.beta)
        return ph * mpc(0, 1) * gmpy2.const_pi()

    def weight(self, x, d_lo, d_hi, jump):
        """``w(x)`` at a node, given exact distances to the panel ends."""
        spec = self.spec
        logw = 0
        if spec.w_smooth:
            acc = mpfr(0)
            for c in reversed(spec.w_smooth):
                acc = acc * x + c
            logw = acc
        for alpha, loc, where, _ in self.factors:
            if where == "lo":
                d = d_lo
            elif where == "hi":
                d = d_hi
            else:
                d = abs(x - loc)
            ld = gmpy2.log(d)
            if alpha.imag == 0:
                logw = logw + ld * alpha.real
            else:
                logw = logw + ld * mpc(alpha)
        if self.complex_weight:
            return gmpy2.exp(mpc(logw) + jump)
        return gmpy2.exp(logw) * jump


class _Exponents:
    """Distinct exponents ``k + j theta`` needed for an ``N x N`` moment matrix."""

    def __init__(self, pairs: Iterable[tuple[int, int]], theta: float):
        th = Fraction(theta)
        self.theta = theta
        self.keys: dict = {}
        self.rep: list = []
        for j, k in pairs:
            key = k + j * th
            if key not in self.keys:
                self.keys[key] = len(self.rep)
                self.rep.append((j, k))
        self.jmax = max(j for j, _ in self.rep)
        self.kmax = max(k for _, k in self.rep)

    def index(self, j, k):
        return self.keys[k + j * Fraction(self.theta)]


def _tmax(prec: int, alpha_min: float) -> float:
    # tails of size exp(-2 v (1 + alpha_min)) must drop below 2^-(prec+16)
    v = (prec + 16) * math.log(2.0) / (2.0 * (1.0 + alpha_min))
    return math.asinh(2.0 * v / math.pi) + 0.5


def _panel_moments(panel: _Panel, ex: _Exponents, theta: float, prec: int) -> list:
    """Tanh-sinh moments of one panel, refined level by level."""
    lo, hi = mpfr(panel.lo), mpfr(panel.hi)
    L = (hi - lo) / 2
    th = mpfr(theta)
    theta_int = float(theta).is_integer()
    half_pi = gmpy2.const_pi() / 2
    tmax = _tmax(prec, panel.alpha_min)
    jump = panel.constant()
    if not panel.complex_weight:
        jump = gmpy2.exp(jump.real)
    nexp = len(ex.rep)

    def accumulate(acc, x, d_lo, d_hi, wgt):
        f = panel.weight(x, d_lo, d_hi, jump) * wgt
        xk = [mpfr(1)]
        for _ in range(ex.kmax):
            xk.append(xk[-1] * x)
        if theta == 1.0:
            y = x
        elif theta_int:
            y = x ** int(theta)
        else:
            y = gmpy2.exp(th * gmpy2.log(x))
        yj = [f]
        for _ in range(ex.jmax):
            yj.append(yj[-1] * y)
        for i, (j, k) in enumerate(ex.rep):
            acc[i] += yj[j] * xk[k]

    def level_sum(level):
        h = mpfr(2) ** (-level)
        acc = [mpc(0) if panel.complex_weight else mpfr(0) for _ in range(nexp)]
        kmax = int(tmax * 2**level)
        step = 1 if level == 0 else 2
        for kk in range(0 if level == 0 else 1, kmax + 1, step):
            t = kk * h
            ch = gmpy2.cosh(t)
            v = half_pi * gmpy2.sinh(t)
            e2v = gmpy2.exp(2 * v)
            dr = 2 / (e2v + 1)
            dl = 2 - dr
            wgt = h * half_pi * ch * dl * dr * L
            if wgt == 0:
                continue
            # node near hi, and its mirror near lo
            accumulate(acc, hi - L * dr, L * dl, L * dr, wgt)
            if kk != 0:
                accumulate(acc, lo + L * dr, L * dr, L * dl, wgt)
        return acc, h

    tol = mpfr(2) ** (-(prec // 2))
    total, _ = level_sum(0)
    for level in range(1, MAX_LEVEL + 1):
        new, h = level_sum(level)
        prev = total
        total = [p / 2 + q for p, q in zip(prev, new)]
        scale = max(abs(v) for v in total)
        if all(abs(t - p) <= tol * max(abs(t), scale * tol) for t, p in zip(total, prev)):
            return total
    raise QuadratureStall(
        f"tanh-sinh did not converge on panel [{panel.lo}, {panel.hi}] by level {MAX_LEVEL}"
    )


def _moments(spec: EnsembleSpec, pairs: Sequence[tuple[int, int]], prec: int):
    """Moments for ``pairs`` of (j, k) at ``prec`` bits; returns (exponents, values)."""
    ex = _Exponents(pairs, spec.theta)
    complex_weight = not spec.is_positive()
    with gmpy2.context(gmpy2.get_context(), precision=prec + 32):
        total = None
        for i in range(spec.m + 1):
            vals = _panel_moments(_Panel(spec, i, complex_weight), ex, spec.theta, prec + 32)
            total = vals if total is None else [p + q for p, q in zip(total, vals)]
    return ex, total


_TABLE_CACHE: dict = {}


def moment_matrix(spec: EnsembleSpec, N: int, prec: int):
    """``N x N`` matrix of gmpy2 moments ``M[j][k]`` at ``prec`` bits (cached)."""
    key = (spec, prec)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit[0] >= N:
        n0, ex, vals = hit
    else:
        pairs = [(j, k) for j in range(N) for k in range(N)]
        ex, vals = _moments(spec, pairs, prec)
        _TABLE_CACHE[key] = (N, ex, vals)
        if len(_TABLE_CACHE) > 64:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
    return [[vals[ex.index(j, k)] for k in range(N)] for j in range(N)]


def clear_cache():
    _TABLE_CACHE.clear()


def moment(j: int, k: int, spec: EnsembleSpec, policy: PrecisionPolicy = PrecisionPolicy()):
    """``int_a^b x^(k + j theta) w(x) dx`` as an mpmath number."""
    validate_spec(spec, ORACLE)
    prec = policy.bits(max(j, k) + 1)
    _, vals = _moments(spec, [(j, k)], prec)
    with mpmath.workprec(prec):
        return _to_mp(vals[0])


# ---------------------------------------------------------------------------
# determinants
# ---------------------------------------------------------------------------
def _log_det_gm(M, n: int, prec: int):
    """``(log|det|, arg det)`` of the leading ``n x n`` block by pivoted elimination."""
    with gmpy2.context(gmpy2.get_context(), precision=prec + 32):
        A = [list(row[:n]) for row in M[:n]]
        scale = max(abs(v) for row in A for v in row)
        tiny = scale * mpfr(2) ** (-(prec // 2))
        log_abs = mpfr(0)
        phase = mpfr(0)
        pi = gmpy2.const_pi()
        for c in range(n):
            p = max(range(c, n), key=lambda r: abs(A[r][c]))
            piv = A[p][c]
            if abs(piv) <= tiny:
                raise SingularMatrix(
                    f"pivot {float(abs(piv)):.3e} below 2^-{prec // 2} relative at column {c} (n={n})",
                    n=n, pivot_index=c,
                )
            if p != c:
                A[c], A[p] = A[p], A[c]
                phase += pi
            log_abs += gmpy2.log(abs(piv))
            if isinstance(piv, type(mpc())):
                phase += gmpy2.phase(piv)
            elif piv < 0:
                phase += pi
            inv = 1 / piv
            rowc = A[c]
            for r in range(c + 1, n):
                fac = A[r][c] * inv
                if fac == 0:
                    continue
                rowr = A[r]
                for q in range(c + 1, n):
                    rowr[q] -= fac * rowc[q]
        # reduce the phase to (-pi, pi]
        twopi = 2 * pi
        phase = phase - twopi * gmpy2.floor((phase + pi) / twopi)
        if phase <= -pi:
            phase += twopi
        return log_abs, float(phase)


def _unwrap(phase: float, ref: float | None) -> float:
    if ref is None:
        return phase
    return phase + 2 * math.pi * round((ref - phase) / (2 * math.pi))


def log_det_sweep(spec: EnsembleSpec, nmin: int, nmax: int,
                  policy: PrecisionPolicy = PrecisionPolicy(),
                  verify: bool = True, rtol: float = 1e-10) -> list[DeterminantRecord]:
    """Records for ``n = nmin..nmax`` from one moment table at ``policy.bits(nmax)``.

    The phase is unwrapped across consecutive ``n``.  With ``verify`` every
    determinant is recomputed at ``verify_factor`` times the precision; a
    relative disagreement above ``rtol`` in ``log|D_n|`` raises PrecisionLoss.
    """
    validate_spec(spec, ORACLE)
    if nmin < 1 or nmax < nmin:
        raise ValueError(f"need 1 <= nmin <= nmax, got {nmin}, {nmax}")
    prec = policy.bits(nmax)
    M = moment_matrix(spec, nmax, prec)
    Mv = moment_matrix(spec, nmax, policy.verify_factor * prec) if verify else None
    out = []
    ref = None
    for n in range(1, nmax + 1):
        la, ph = _log_det_gm(M, n, prec)
        err = 0.0
        if verify:
            lav, phv = _log_det_gm(Mv, n, policy.verify_factor * prec)
            err = float(abs(la - lav))
            dph = abs((ph - phv + math.pi) % (2 * math.pi) - math.pi)
            err = max(err, dph)
            if err > rtol * max(1.0, float(abs(lav))):
                raise PrecisionLoss(
                    f"n={n}: log|D_n| changed by {err:.3e} when precision doubled"
                )
        ph = _unwrap(ph, ref)
        ref = ph
        if n >= nmin:
            with mpmath.workprec(prec):
                out.append(DeterminantRecord(n, _to_mp(la), ph, prec, err))
    return out


def log_det(n: int, spec: EnsembleSpec, policy: PrecisionPolicy = PrecisionPolicy(),
            verify: bool = True) -> DeterminantRecord:
    """``log D_n(w)`` for a single ``n``."""
    return log_det_sweep(spec, n, n, policy, verify)[-1]


def kappa_sq(n: int, spec: EnsembleSpec, policy: PrecisionPolicy = PrecisionPolicy(),
             verify: bool = True):
    """``kappa_n^2 = D_n / D_{n+1}`` with ``D_0 = 1``, as an mpmath number."""
    if n < 0:
        raise ValueError("n must be >= 0")
    recs = log_det_sweep(spec, max(n, 1), n + 1, policy, verify)
    hi = recs[-1]
    with mpmath.workprec(hi.precision_bits):
        lo = mpmath.mpc(0) if n == 0 else mpmath.mpc(recs[0].log_abs, recs[0].phase)
        val = mpmath.exp(lo - mpmath.mpc(hi.log_abs, hi.phase))
        return val.real if spec.is_positive() else val


def mgf_ratio(spec_fh: EnsembleSpec, base_spec: EnsembleSpec, n: int,
              policy: PrecisionPolicy = PrecisionPolicy(), verify: bool = True):
    """``E[prod |p_n(t_k)|^alpha_k exp(2 pi i beta_k N_n(t_k))]`` as a determinant ratio.

    Equal to ``D_n(w) / D_n(w_base) * prod_k exp(i pi n beta_k)``.
    """
    same = (
        spec_fh.a == base_spec.a and spec_fh.b == base_spec.b
        and spec_fh.theta == base_spec.theta and spec_fh.w_smooth == base_spec.w_smooth
        and spec_fh.alpha_left == base_spec.alpha_left
        and spec_fh.alpha_right == base_spec.alpha_right
    )
    base_trivial = all(s.alpha == 0 and s.beta == 0 for s in base_spec.singularities)
    if not (same and base_trivial):
        raise SpecMismatch("base spec must equal the FH spec with all interior alpha, beta = 0")
    r1 = log_det(n, spec_fh, policy, verify)
    r0 = log_det(n, base_spec, policy, verify)
    with mpmath.workprec(max(r1.precision_bits, r0.precision_bits)):
        lg = mpmath.mpc(r1.log_abs - r0.log_abs, r1.phase - r0.phase)
        for s in spec_fh.singularities:
            lg += 1j * mpmath.pi * n * mpmath.mpc(s.beta)
        return mpmath.exp(lg)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------
CSV_FIELDS = ["n", "log_abs", "phase", "precision_bits", "err_estimate"]


def write_records_csv(records: Sequence[DeterminantRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([
                r.n,
                mpmath.nstr(r.log_abs, 40, strip_zeros=False),
                repr(float(r.phase)),
                r.precision_bits,
                f"{r.err_estimate:.6e}",
            ])


def read_records_csv(path) -> list[DeterminantRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            prec = int(row["precision_bits"])
            with mpmath.workprec(prec):
                out.append(DeterminantRecord(
                    int(row["n"]), mpmath.mpf(row["log_abs"]), float(row["phase"]),
                    prec, float(row["err_estimate"]),
                ))
    return out
