"""Metropolis sampling of the Muttalib-Borodin point process and fluctuation diagnostics.

The target density on ``(a, b)^n`` is proportional to

    prod_{j<k} (x_k - x_j)(x_k^theta - x_j^theta) * prod_j w(x_j)

with the base weight ``w(x) = exp(W(x)) (x - a)^alpha_left (b - x)^alpha_right``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from . import asymptotics as asy
from . import equilibrium as eq
from .ensemble import EnsembleSpec, validate_spec
from .errors import CoincidesWithPoint, InsufficientESS, ValidationError

BLOCK = 256  # sweeps per pre-generated random block
TUNE_BLOCK = 64  # sweeps between proposal-scale updates during burn-in
TARGET_ACC = (0.3, 0.5)


@dataclass(frozen=True)
class ChainConfig:
    n: int
    steps: int
    burn_in: int
    thin: int = 1
    proposal_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.burn_in < self.steps:
            raise ValidationError(f"need 0 <= burn_in < steps, got {self.burn_in}, {self.steps}")
        if self.thin < 1:
            raise ValidationError(f"thin must be >= 1, got {self.thin}")
        if not self.proposal_sigma > 0:
            raise ValidationError("proposal_sigma must be positive")


@dataclass
class SampleBatch:
    configurations: np.ndarray  # (k, n), rows sorted
    acceptance_rate: float
    ess_estimate: float
    tau_int: float = float("nan")
    sigma: float = float("nan")
    seed: int = 0
    trace: np.ndarray = field(default=None, repr=False)  # N_n(midpoint) per kept sweep

    @property
    def n(self) -> int:
        return self.configurations.shape[1]

    def meta(self) -> dict:
        return {"acceptance_rate": self.acceptance_rate, "ess_estimate": self.ess_estimate,
                "tau_int": self.tau_int, "sigma": self.sigma, "seed": self.seed,
                "stored": int(self.configurations.shape[0])}


def _base_check(spec: EnsembleSpec):
    if spec.singularities:
        raise ValidationError("sampler needs the base weight; remove interior FH singularities")
    if spec.alpha_left.imag != 0 or spec.alpha_right.imag != 0:
        raise ValidationError("sampler needs real edge exponents")
    validate_spec(spec)


def log_density(config, spec: EnsembleSpec) -> float:
    """Unnormalized log of the joint density; ``-inf`` for coincident points."""
    _base_check(spec)
    x = np.sort(np.asarray(config, dtype=float))
    if np.any(x <= spec.a) or np.any(x >= spec.b):
        raise ValidationError("all points must lie strictly inside (a, b)")
    if np.any(np.diff(x) == 0):
        return -math.inf
    y = x**spec.theta
    iu = np.triu_indices(x.size, 1)
    pair = np.log(np.abs(x[iu[1]] - x[iu[0]])) + np.log(np.abs(y[iu[1]] - y[iu[0]]))
    one = (np.polynomial.polynomial.polyval(x, spec.w_smooth) if spec.w_smooth else 0.0) \
        + spec.alpha_left.real * np.log(x - spec.a) + spec.alpha_right.real * np.log(spec.b - x)
    return float(pair.sum() + np.sum(one))


@nb.njit(cache=True)
def _potential(x, wc, al, ar, a, b):
    v = 0.0
    for c in wc[::-1]:
        v = v * x + c
    if al != 0.0:
        v += al * math.log(x - a)
    if ar != 0.0:
        v += ar * math.log(b - x)
    return v


@nb.njit(cache=True)
def _sweeps(x, y, theta, a, b, wc, al, ar, sigma, normals, uniforms, tmid, counts,
            store, thin, offset, stored):
    """Systematic-scan Metropolis; returns (accepted, stored)."""
    n = x.size
    nsw = normals.size // n
    acc = 0
    idx = 0
    for s in range(nsw):
        for i in range(n):
            xi = x[i]
            xn = xi + sigma * normals[idx]
            while xn <= a or xn >= b:
                if xn < a:
                    xn = 2.0 * a - xn
                elif xn > b:
                    xn = 2.0 * b - xn
                else:
                    break
            if xn <= a or xn >= b:
                idx += 1
                continue
            yn = xn**theta
            yi = y[i]
            d = _potential(xn, wc, al, ar, a, b) - _potential(xi, wc, al, ar, a, b)
            prod = 1.0
            for j in range(n):
                if j == i:
                    continue
                prod *= (abs(xn - x[j]) * abs(yn - y[j])) / (abs(xi - x[j]) * abs(yi - y[j]))
                if (j & 15) == 15:
                    d += math.log(prod)
                    prod = 1.0
            d += math.log(prod) if prod > 0.0 else -math.inf
            if math.log(uniforms[idx]) < d:
                x[i] = xn
                y[i] = yn
                acc += 1
            idx += 1
        if counts.size > 0:
            c = 0
            for j in range(n):
                if x[j] <= tmid:
                    c += 1
            counts[s] = c
            if (offset + s) % thin == thin - 1 and stored < store.shape[0]:
                store[stored, :] = np.sort(x)
                stored += 1
    return acc, stored


def integrated_autocorr(trace: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with the self-consistent window ``M >= c tau``."""
    z = np.asarray(trace, dtype=float)
    z = z - z.mean()
    N = z.size
    if N < 4 or not np.any(z):
        return 1.0
    f = np.fft.rfft(z, 2 * N)
    ac = np.fft.irfft(f * np.conj(f))[:N]
    ac /= ac[0]
    tau = 1.0
    for M in range(1, N):
        tau = 1.0 + 2.0 * ac[1:M + 1].sum()
        if M >= c * tau:
            break
    return max(tau, 1.0)


def initial_configuration(n: int, spec: EnsembleSpec) -> np.ndarray:
    """Classical quantiles ``(k - 1/2) / n`` of the equilibrium measure."""
    data = eq.equilibrium(spec.a, spec.b, spec.theta)
    # quantile (2k - 1) / (2n) is the classical location of rank 2k - 1 among 2n
    x = asy.classical_location(2 * np.arange(1, n + 1) - 1, 2 * n, data)
    return np.clip(np.atleast_1d(x), np.nextafter(spec.a, spec.b), np.nextafter(spec.b, spec.a))


def sample(spec: EnsembleSpec, cfg: ChainConfig) -> SampleBatch:
    """Run one chain; ``steps`` counts full sweeps over all ``n`` particles.

    The proposal scale is tuned during burn-in toward an acceptance rate in
    ``[0.3, 0.5]`` and frozen afterwards.  Every ``thin``-th post-burn-in
    configuration is stored.  Identical ``cfg`` gives bit-identical output.
    """
    _base_check(spec)
    n = cfg.n
    rng = np.random.default_rng(cfg.seed)
    x = initial_configuration(n, spec)
    y = x**spec.theta
    wc = np.asarray(spec.w_smooth if spec.w_smooth else (0.0,), dtype=float)
    al, ar = spec.alpha_left.real, spec.alpha_right.real
    tmid = 0.5 * (spec.a + spec.b)
    sigma = min(cfg.proposal_sigma, spec.b - spec.a)
    kept = cfg.steps - cfg.burn_in
    store = np.empty((kept // cfg.thin, n))
    trace = np.empty(kept, dtype=np.int32)
    empty = np.empty(0, dtype=np.int32)
    stored = 0
    acc_total = 0

    done = 0
    while done < cfg.burn_in:
        nb_ = min(TUNE_BLOCK, cfg.burn_in - done)
        normals = rng.standard_normal(nb_ * n)
        uniforms = rng.random(nb_ * n)
        acc, _ = _sweeps(x, y, spec.theta, spec.a, spec.b, wc, al, ar, sigma,
                         normals, uniforms, tmid, empty, store, 1, 0, store.shape[0])
        rate = acc / (nb_ * n)
        if not TARGET_ACC[0] <= rate <= TARGET_ACC[1]:
            sigma *= math.exp(2.0 * (rate - 0.4))
            sigma = min(max(sigma, 1e-8 * (spec.b - spec.a)), spec.b - spec.a)
        done += nb_

    done = 0
    while done < kept:
        nb_ = min(BLOCK, kept - done)
        normals = rng.standard_normal(nb_ * n)
        uniforms = rng.random(nb_ * n)
        acc, stored = _sweeps(x, y, spec.theta, spec.a, spec.b, wc, al, ar, sigma,
                              normals, uniforms, tmid, trace[done:done + nb_], store,
                              cfg.thin, done, stored)
        acc_total += acc
        done += nb_

    tau = integrated_autocorr(trace) if n > 1 else 1.0
    if n == 1 or not np.any(trace != trace[0]):
        tau = 1.0
    ess = min(kept / tau, float(stored))
    return SampleBatch(store[:stored], acc_total / (kept * n), ess, tau, sigma, cfg.seed, trace)


def sample_chains(spec: EnsembleSpec, cfg: ChainConfig, chains: int) -> list[SampleBatch]:
    """Independent chains seeded from ``SeedSequence(cfg.seed)``."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(chains, dtype=np.uint64)
    out = []
    for s in seeds:
        c = ChainConfig(cfg.n, cfg.steps, cfg.burn_in, cfg.thin, cfg.proposal_sigma, int(s))
        out.append(sample(spec, c))
    return out


# ---------------------------------------------------------------------------
# statistics of a configuration
# ---------------------------------------------------------------------------
def counting_function(config, t):
    """``#{x_j <= t}`` for a sorted configuration; vectorized over ``t``."""
    return np.searchsorted(np.asarray(config), t, side="right")


def log_abs_charpoly(config, t: float) -> float:
    x = np.asarray(config, dtype=float)
    d = np.abs(t - x)
    if np.any(d == 0):
        raise CoincidesWithPoint(f"t={t} coincides with a sample point")
    return float(np.sum(np.log(d)))


def clt_statistics(configs: np.ndarray, t_list: Sequence[float], data) -> dict:
    """Normalized fluctuations ``M_n(t)``, ``N_n(t)`` and ``Z_n(t)`` per configuration."""
    configs = np.atleast_2d(configs)
    n = configs.shape[1]
    s = math.sqrt(math.log(n))
    out = {}
    for t in t_list:
        F = eq.cdf(t, data)
        lp = eq.log_potential(t, data)
        N = np.array([counting_function(c, t) for c in configs], dtype=float)
        L = np.sum(np.log(np.abs(t - configs)), axis=1)
        out[f"M({t:g})"] = math.sqrt(2.0) * (L - n * lp) / s
        out[f"N({t:g})"] = math.sqrt(2.0) * math.pi * (N - n * F) / s
        k = int(math.floor(n * F + 0.5))
        if 1 <= k <= n:
            kap = asy.classical_location(k, n, data)
            out[f"Z({t:g})"] = (math.sqrt(2.0) * math.pi * n * eq.density(kap, data) / s
                                * (configs[:, k - 1] - kap))
    return out


def clt_diagnostics(stats: dict, mean_tol=0.2, var_tol=0.3, corr_tol=0.2,
                    check: Sequence[str] | None = None) -> dict:
    """Moments and cross-correlations of standardized statistics with pass flags."""
    names = list(stats)
    check = names if check is None else list(check)
    rows = {}
    for k in names:
        v = np.asarray(stats[k], dtype=float)
        mu, var = v.mean(), v.var(ddof=1)
        z = (v - mu) / math.sqrt(var) if var > 0 else v * 0
        rows[k] = {"mean": mu, "variance": var, "skewness": float(np.mean(z**3)),
                   "excess_kurtosis": float(np.mean(z**4) - 3.0),
                   "mean_ok": bool(abs(mu) <= mean_tol), "variance_ok": bool(abs(var - 1) <= var_tol)}
    M = np.array([stats[k] for k in check], dtype=float)
    corr = np.corrcoef(M) if len(check) > 1 else np.ones((1, 1))
    off = corr[~np.eye(len(check), dtype=bool)]
    max_corr = float(np.max(np.abs(off))) if off.size else 0.0
    ok = all(rows[k]["mean_ok"] and rows[k]["variance_ok"] for k in check) and max_corr <= corr_tol
    return {"stats": rows, "checked": check, "correlation": corr.tolist(),
            "max_abs_cross_corr": max_corr, "pass": bool(ok),
            "thresholds": {"mean": mean_tol, "variance": var_tol, "cross_corr": corr_tol}}


def clt_report(batches: Sequence[SampleBatch], t_list: Sequence[float], data,
               min_ess: float = 1e4, **tol) -> dict:
    """CLT diagnostics for ``M_n(t_j)``, ``N_n(t_j)`` pooled over independent batches.

    The pass flag covers the M and N statistics; ``Z_n`` is reported only.
    """
    ess = float(sum(b.ess_estimate for b in batches))
    if ess < min_ess:
        raise InsufficientESS(f"effective sample size {ess:.0f} < {min_ess:.0f}")
    configs = np.concatenate([b.configurations for b in batches])
    stats = clt_statistics(configs, t_list, data)
    check = [k for k in stats if k[0] in "MN"]
    rep = clt_diagnostics(stats, check=check, **tol)
    n = configs.shape[1]
    rep.update({"n": n, "ess": ess, "samples": int(configs.shape[0]), "t": list(t_list)})
    # raw counting-function moments against the leading-order predictions
    raw = {}
    for t in t_list:
        N = np.array([counting_function(c, t) for c in configs], dtype=float)
        m_pred, v_pred = asy.predict_counting_stats(t, n, data)
        raw[f"{t:g}"] = {"mean": N.mean(), "variance": N.var(ddof=1),
                         "mean_pred": float(m_pred), "variance_pred": v_pred,
                         "variance_ratio": N.var(ddof=1) / v_pred}
    rep["counting"] = raw
    return rep


def rigidity_statistics(configs: np.ndarray, delta: float, data, grid: int = 512):
    """Per configuration: ``sup |N_n(x) - n F(x)|`` on the grid and the max rescaled gap."""
    configs = np.atleast_2d(configs)
    n = configs.shape[1]
    xs = np.linspace(data.a + delta, data.b - delta, grid)
    F = np.asarray(eq.cdf(xs, data))
    sup = np.array([np.max(np.abs(counting_function(c, xs) - n * F)) for c in configs])
    ks = np.arange(int(math.ceil(delta * n)), int(math.floor((1 - delta) * n)) + 1)
    ks = ks[(ks >= 1) & (ks <= n)]
    if ks.size:
        kap = np.atleast_1d(asy.classical_location(ks, n, data))
        rho = np.atleast_1d(eq.density(kap, data))
        gap = np.max(rho * np.abs(configs[:, ks - 1] - kap), axis=1)
    else:
        gap = np.zeros(configs.shape[0])
    return sup, gap


def rigidity_report(batches: Sequence[SampleBatch], delta: float, epsilon: float, data,
                    grid: int = 512) -> dict:
    """Empirical violation frequencies of the two rigidity upper bounds."""
    if not 0 < delta < (data.b - data.a) / 2:
        raise ValidationError(f"delta must lie in (0, (b - a)/2), got {delta}")
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    configs = np.concatenate([b.configurations for b in batches])
    n = configs.shape[1]
    sup, gap = rigidity_statistics(configs, delta, data, grid)
    bound = math.sqrt(1.0 + epsilon) / math.pi * math.log(n) if n > 1 else math.inf
    gap_bound = bound / n
    v_sup = float(np.mean(sup > bound))
    v_gap = float(np.mean(gap > gap_bound))
    return {
        "n": n, "delta": delta, "epsilon": epsilon, "samples": int(configs.shape[0]),
        "sup_bound": bound, "gap_bound": gap_bound,
        "sup_violation_freq": v_sup, "gap_violation_freq": v_gap,
        "violation_freq": float(np.mean((sup > bound) | (gap > gap_bound))),
        "sup_quantiles": dict(zip(("q05", "q50", "q95", "max"),
                                  np.quantile(sup, [0.05, 0.5, 0.95, 1.0]).tolist())),
        "gap_quantiles": dict(zip(("q05", "q50", "q95", "max"),
                                  np.quantile(gap, [0.05, 0.5, 0.95, 1.0]).tolist())),
    }


# ---------------------------------------------------------------------------
# samples.csv: chain, index, x_0 .. x_{n-1}; per-chain metadata in a sidecar JSON
# ---------------------------------------------------------------------------
def write_samples(batches: Sequence[SampleBatch], path) -> Path:
    path = Path(path)
    n = batches[0].n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "index"] + [f"x{j}" for j in range(n)])
        for c, b in enumerate(batches):
            for i, row in enumerate(b.configurations):
                w.writerow([c, i] + ["%.17g" % v for v in row])
    meta = path.with_name(path.name + ".meta.json")
    meta.write_text(json.dumps([b.meta() for b in batches], indent=1, sort_keys=True))
    return meta


def read_samples(path) -> list[SampleBatch]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"samples file not found: {path}")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = path.with_name(path.name + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else None
    out = []
    chains = np.unique(raw[:, 0]).astype(int)
    for c in chains:
        cfgs = raw[raw[:, 0] == c][:, 2:]
        m = meta[c] if meta else {}
        ess = m.get("ess_estimate")
        if ess is None:
            tr = np.array([counting_function(r, 0.5 * (cfgs[0, 0] + cfgs[0, -1])) for r in cfgs])
            ess = cfgs.shape[0] / integrated_autocorr(tr)
        out.append(SampleBatch(cfgs, m.get("acceptance_rate", float("nan")), float(ess),
                               m.get("tau_int", float("nan")), m.get("sigma", float("nan")),
                               m.get("seed", 0)))
    return out
