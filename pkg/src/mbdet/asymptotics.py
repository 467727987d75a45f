"""Large-n constants for log D_n(w) and predicted point-process statistics."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import equilibrium as eq
from .ensemble import EQUILIBRIUM, EnsembleSpec, horner, validate_spec
from .equilibrium import EquilibriumData


@dataclass(frozen=True)
class AsymptoticConstants:
    C1: complex
    C2: complex
    C3: complex
    H0: complex
    beta_max: float

    def to_dict(self, ell: float | None = None) -> dict:
        def enc(z):
            z = complex(z)
            return z.real if z.imag == 0 else [z.real, z.imag]

        out = {"C1": enc(self.C1), "C2": enc(self.C2), "C3": enc(self.C3),
               "H0": enc(self.H0), "beta_max": self.beta_max}
        if ell is not None:
            out["ell"] = ell
        return out


def equilibrium_for(spec: EnsembleSpec) -> EquilibriumData:
    return eq.equilibrium(spec.a, spec.b, spec.theta)


def _log_h0(spec: EnsembleSpec, data: EquilibriumData, nodes: int) -> complex:
    """``log H(0)``: the W, root-type and jump-type contributions."""
    total = 0j
    if any(c != 0 for c in spec.w_smooth):
        total += eq.integrate_against_density(lambda x: horner(spec.w_smooth, x), data, nodes)
    # log-potential extended continuously to the edges
    total += spec.alpha_left * math.log(data.c1 * abs(data.s_a))
    total += spec.alpha_right * math.log(data.c1 * data.s_b)
    if spec.singularities:
        ts = np.array(spec.locations)
        pot = np.atleast_1d(eq.log_potential(ts, data))
        F = np.atleast_1d(eq.cdf(ts, data))
        for s, v, f in zip(spec.singularities, pot, F):
            total += s.alpha * v
            # pi i beta (1 - 2 mu([t, b])) = pi i beta (2 F(t) - 1)
            total += math.pi * 1j * s.beta * (2.0 * f - 1.0)
    return total


def constants(spec: EnsembleSpec, data: EquilibriumData | None = None,
              nodes: int = 256) -> AsymptoticConstants:
    """C1, C2, C3 of ``log D_n = C1 n^2 + C2 n + C3 log n + C4 + o(1)`` and H(0)."""
    validate_spec(spec, EQUILIBRIUM)
    if data is None:
        data = equilibrium_for(spec)
    th = data.theta
    log_h0 = _log_h0(spec, data, nodes)
    C1 = -data.ell / 2.0
    C2 = ((1.0 - th) / 2.0 * math.log(data.c0) - 0.5 * math.log(th)
          + math.log(2.0 * math.pi) + log_h0)
    C3 = -0.25 + (spec.alpha_left**2 + spec.alpha_right**2) / 2.0
    for s in spec.singularities:
        C3 += s.alpha**2 / 4.0 - s.beta**2
    beta_max = max((abs(s.beta.real) for s in spec.singularities), default=0.0)
    return AsymptoticConstants(complex(C1), complex(C2), complex(C3), cmath.exp(log_h0), beta_max)


def kappa_inv_sq_prediction(n: int, spec: EnsembleSpec, data: EquilibriumData,
                            consts: AsymptoticConstants):
    """Leading-order ``kappa_n^{-2} = 2 pi e^{-n ell} H(0) c0 / (sqrt(|s_a s_b|) theta)``.

    ``|s_a s_b| = c0 / (c1 theta)``.
    """
    th = data.theta
    val = (2.0 * math.pi * math.exp(-n * data.ell) * consts.H0 * data.c0
           / (math.sqrt(data.c0 / (data.c1 * th)) * th))
    val = complex(val)
    return val.real if abs(val.imag) <= 1e-14 * abs(val) else val


def predict_counting_stats(t: float, n: int, data: EquilibriumData) -> tuple[float, float]:
    """Leading-order mean and variance of the counting function ``N_n(t)``."""
    return n * eq.cdf(t, data), math.log(n) / (2.0 * math.pi**2)


def predict_logabs_stats(t: float, n: int, data: EquilibriumData) -> tuple[float, float]:
    """Leading-order mean and variance of ``log|p_n(t)|``."""
    return n * eq.log_potential(t, data), math.log(n) / 2.0


def classical_location(k, n: int, data: EquilibriumData, tol: float = 1e-12):
    """Quantile ``kappa_k`` with ``mu([a, kappa_k]) = k / n``; vectorized over ``k``."""
    k_arr = np.atleast_1d(np.asarray(k))
    if np.any(k_arr < 1) or np.any(k_arr > n):
        raise ValueError(f"need 1 <= k <= n={n}")
    target = k_arr / n
    lo = np.full(target.shape, data.a)
    hi = np.full(target.shape, data.b)
    full = target >= 1.0
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        F = np.atleast_1d(eq.cdf(mid, data))
        below = F < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out[full] = data.b
    return float(out[0]) if np.ndim(k) == 0 else out
