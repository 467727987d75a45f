import cmath
import math

import gmpy2
import mpmath
import numpy as np
import pytest

from mbdet import oracle
from mbdet.ensemble import EnsembleSpec, FHSingularity
from mbdet.errors import (
    NumericalError,
    QuadratureStall,
    SingularMatrix,
    SpecMismatch,
)

import oracles

P = oracle.PrecisionPolicy()


def logdet(n, spec, policy=P):
    r = oracle.log_det(n, spec, policy)
    return complex(float(r.log_abs), r.phase)


# -- moments ----------------------------------------------------------------
def test_moment_examples():
    assert oracle.moment(0, 0, EnsembleSpec(1, 4)) == pytest.approx(3, rel=1e-30)
    assert oracle.moment(1, 1, EnsembleSpec(1, 2, theta=2)) == pytest.approx(mpmath.mpf(15) / 4, rel=1e-30)
    assert oracle.moment(0, 0, EnsembleSpec(1, 2, alpha_left=-0.5)) == pytest.approx(2, rel=1e-30)


def test_moment_strong_edge_singularity():
    # int_1^2 (x-1)^-0.9 (2-x)^-0.8 dx = B(0.1, 0.2)
    spec = EnsembleSpec(1, 2, alpha_left=-0.9, alpha_right=-0.8)
    with mpmath.workprec(300):
        ref = mpmath.beta(1 + mpmath.mpf(-0.9), 1 + mpmath.mpf(-0.8))
        assert abs(oracle.moment(0, 0, spec) / ref - 1) < 1e-25


def test_moment_complex_exponent_against_closed_form():
    # int_1^3 |x-2|^alpha w dx with the jump, split into two beta integrals
    al, be = complex(0.3, 0.4), complex(0.1, 0.05)
    spec = EnsembleSpec(1, 3, singularities=[FHSingularity(2, al, be)])
    with mpmath.workprec(300):
        one = 1 / (1 + mpmath.mpc(al))
        ibe = mpmath.mpc(0, 1) * mpmath.pi * mpmath.mpc(be)
        ref = one * (mpmath.exp(ibe) + mpmath.exp(-ibe))
        assert abs(oracle.moment(0, 0, spec) - ref) < 1e-30


def test_moment_irrational_theta():
    th = math.sqrt(2)
    spec = EnsembleSpec(1, 3, theta=th)
    with mpmath.workprec(300):
        e = 2 + 2 * mpmath.mpf(th)
        ref = (mpmath.mpf(3) ** (e + 1) - 1) / (e + 1)
        assert abs(oracle.moment(2, 2, spec) / ref - 1) < 1e-40


def test_quadrature_stall(monkeypatch):
    monkeypatch.setattr(oracle, "MAX_LEVEL", 0)
    with pytest.raises(QuadratureStall):
        oracle.moment(0, 0, EnsembleSpec(1, 2))


# -- determinants -----------------------------------------------------------
def test_log_det_hand_values():
    assert logdet(1, EnsembleSpec(1, 4)).real == pytest.approx(math.log(3), abs=1e-15)
    r = oracle.log_det(2, EnsembleSpec(1, 2))
    assert abs(mpmath.exp(r.log_abs) * 12 - 1) < 1e-30
    r = oracle.log_det(2, EnsembleSpec(1, 2, theta=2))
    assert abs(mpmath.exp(r.log_abs) * 4 - 1) < 1e-30


def test_kappa_sq_examples():
    assert oracle.kappa_sq(0, EnsembleSpec(1, 4)) == pytest.approx(1 / 3, rel=1e-30)
    assert oracle.kappa_sq(1, EnsembleSpec(1, 2)) == pytest.approx(12, rel=1e-30)


def test_kappa_sq_positive():
    spec = EnsembleSpec(1, 4, theta=2, singularities=[FHSingularity(2.0, 0.5, 0.1j)])
    for n in range(0, 6):
        k = oracle.kappa_sq(n, spec)
        assert isinstance(k, mpmath.mpf) and k > 0


def test_kappa_sq_legendre():
    # monic Legendre norms rescaled to [1, 4]
    for n in (3, 9):
        k = oracle.kappa_sq(n, EnsembleSpec(1, 4))
        assert float(1 / k) == pytest.approx(oracles.legendre_kappa_inv_sq(n, 1, 4), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("spec", [
    EnsembleSpec(1, 2),
    EnsembleSpec(1, 3, theta=2.0, w_smooth=(0.2, -0.1)),
    EnsembleSpec(1, 4, theta=0.5, singularities=[FHSingularity(2.5, 1, 0.1j)]),
    EnsembleSpec(1, 4, theta=1.5, singularities=[FHSingularity(2.0, 2, complex(0.2, 0.1))]),
], ids=["unit", "W", "fh-imag", "fh-complex"])
def test_brute_force_equivalence(n, spec):
    # integer root exponents keep the integrand polynomial-like on each panel
    def w(x):
        v = np.exp(np.polynomial.polynomial.polyval(x, spec.w_smooth)) if spec.w_smooth else np.ones_like(x)
        v = v.astype(complex)
        for s in spec.singularities:
            v = v * np.abs(x - s.t) ** s.alpha.real
            v = v * np.where(x < s.t, np.exp(1j * np.pi * s.beta), np.exp(-1j * np.pi * s.beta))
        return v
    ref = oracles.tensor_log_det_fast(n, spec.theta, w, spec.a, spec.b, spec.locations, m=60)
    got = logdet(n, spec)
    # compare log D_n modulo 2 pi i
    diff = got - ref
    diff = complex(diff.real, (diff.imag + math.pi) % (2 * math.pi) - math.pi)
    assert abs(diff) < 1e-8


def test_brute_force_loop_version_agrees():
    w = lambda x: np.ones_like(x, dtype=complex)  # noqa: E731
    a = oracles.tensor_log_det(2, 2.0, w, 1, 2, m=8)
    b = oracles.tensor_log_det_fast(2, 2.0, w, 1, 2, m=8)
    assert abs(a - b) < 1e-13
    assert abs(a - math.log(0.25)) < 1e-12


def test_positive_weight_phase_zero():
    spec = EnsembleSpec(1, 4, theta=2, singularities=[FHSingularity(3.0, 0.5, 0.2j)])
    for r in oracle.log_det_sweep(spec, 1, 8):
        assert abs(r.phase) < 1e-20


def test_conjugate_symmetry():
    spec = EnsembleSpec(1, 4, theta=1.5, singularities=[FHSingularity(2.2, complex(0.5, 0.3), complex(0.2, 0.1))])
    for n in (1, 4, 7):
        a = logdet(n, spec)
        b = logdet(n, spec.conjugate())
        assert abs(a - b.conjugate()) < 1e-12


def test_phase_continuity_in_sweep():
    spec = EnsembleSpec(1, 4, singularities=[FHSingularity(2.0, 0, 0.2)])
    recs = oracle.log_det_sweep(spec, 1, 20)
    ph = np.array([r.phase for r in recs])
    assert np.all(np.abs(np.diff(ph)) < math.pi)
    # the phase grows linearly in n with slope pi beta (2 F(t) - 1), up to
    # corrections decaying like n^-(1 - 4 beta)
    F = (2 / math.pi) * math.asin(math.sqrt(1 / 3))
    slope = (ph[-1] - ph[9]) / 10
    assert slope == pytest.approx(math.pi * 0.2 * (2 * F - 1), abs=0.03)


def test_sweep_matches_single_calls():
    spec = EnsembleSpec(1, 4, theta=2)
    recs = oracle.log_det_sweep(spec, 3, 6)
    for r in recs:
        single = oracle.log_det(r.n, spec)
        assert abs(float(r.log_abs - single.log_abs)) < 1e-30 * max(1, abs(float(r.log_abs)))


def test_hankel_structure_theta1():
    M = oracle.moment_matrix(EnsembleSpec(1, 4), 6, 256)
    for j in range(5):
        for k in range(1, 6):
            assert M[j + 1][k - 1] == M[j][k]


def test_singular_matrix_reports_pivot():
    with gmpy2.context(gmpy2.get_context(), precision=128):
        one = gmpy2.mpfr(1)
        M = [[one, 2 * one], [2 * one, 4 * one]]
    with pytest.raises(SingularMatrix) as ei:
        oracle._log_det_gm(M, 2, 128)
    assert ei.value.n == 2 and ei.value.pivot_index == 1


def test_precision_loss_detected():
    with pytest.raises(NumericalError):
        oracle.log_det_sweep(EnsembleSpec(1, 4), 12, 12, oracle.PrecisionPolicy(24, 1, 4))


def test_precision_policy(monkeypatch):
    p = oracle.PrecisionPolicy()
    assert p.bits(5) == 256 and p.bits(20) == 480
    monkeypatch.setenv("MB_PRECISION_BITS", "400")
    assert oracle.PrecisionPolicy.from_env().base_bits == 400
    monkeypatch.delenv("MB_PRECISION_BITS")
    assert oracle.PrecisionPolicy.from_env().base_bits == 256


def test_doubled_precision_recheck():
    spec = EnsembleSpec(1, 4, theta=0.5, singularities=[FHSingularity(2.5, 1, 0.1j)])
    for r in oracle.log_det_sweep(spec, 1, 24):
        assert r.err_estimate <= 1e-10 * max(1.0, abs(float(r.log_abs)))


def test_csv_roundtrip(tmp_path):
    spec = EnsembleSpec(1, 4, singularities=[FHSingularity(2.0, 0, 0.2)])
    recs = oracle.log_det_sweep(spec, 1, 5)
    p = tmp_path / "d.csv"
    oracle.write_records_csv(recs, p)
    back = oracle.read_records_csv(p)
    for r, b in zip(recs, back):
        assert r.n == b.n and r.phase == b.phase and r.precision_bits == b.precision_bits
        assert abs(float(r.log_abs - b.log_abs)) < 1e-35
    p2 = tmp_path / "d2.csv"
    oracle.write_records_csv(back, p2)
    assert p.read_bytes() == p2.read_bytes()


# -- generating function ----------------------------------------------------
def test_mgf_trivial():
    base = EnsembleSpec(1, 4)
    fh = EnsembleSpec(1, 4, singularities=[FHSingularity(2.0)])
    assert abs(oracle.mgf_ratio(fh, base, 4) - 1) < 1e-30


def test_mgf_spec_mismatch():
    fh = EnsembleSpec(1, 4, singularities=[FHSingularity(2.0, 0, 0.1j)])
    with pytest.raises(SpecMismatch):
        oracle.mgf_ratio(fh, EnsembleSpec(1, 4, theta=2), 2)
    with pytest.raises(SpecMismatch):
        oracle.mgf_ratio(fh, fh, 2)


def test_mgf_single_particle():
    beta = 0.1j
    fh = EnsembleSpec(1, 2, singularities=[FHSingularity(1.5, 0, beta)])
    got = complex(oracle.mgf_ratio(fh, fh.base().__class__(1, 2), 1))
    # one uniform particle on [1, 2]: P(x <= 1.5) = 1/2
    ref = 0.5 * cmath.exp(2j * math.pi * beta) + 0.5
    assert abs(got - ref) < 1e-12


def test_mgf_single_particle_off_center():
    beta = complex(0.15, 0.05)
    fh = EnsembleSpec(1, 2, singularities=[FHSingularity(1.3, 0, beta)])
    got = complex(oracle.mgf_ratio(fh, EnsembleSpec(1, 2), 1))
    ref = 0.3 * cmath.exp(2j * math.pi * beta) + 0.7
    assert abs(got - ref) < 1e-12


@pytest.mark.parametrize("theta", [1.0, 2.0])
def test_mgf_two_particles_bruteforce(theta):
    fh = EnsembleSpec(1, 2, theta=theta, singularities=[FHSingularity(1.5, 0, 0.1j)])
    got = complex(oracle.mgf_ratio(fh, EnsembleSpec(1, 2, theta=theta), 2))
    ref = oracles.mgf_bruteforce_n2(1.5, 0.1j, 1, 2, theta)
    assert abs(got - ref) < 1e-10


def test_mgf_root_exponent_two_particles():
    # alpha = 2 gives E[p_2(t)^2] which the 2D grid integrates exactly
    t = 1.4
    fh = EnsembleSpec(1, 2, singularities=[FHSingularity(t, 2, 0)])
    got = complex(oracle.mgf_ratio(fh, EnsembleSpec(1, 2), 2))
    x, w = oracles.panel_rule(1, 2, [t], 40)
    X, Y = np.meshgrid(x, x, indexing="ij")
    dens = np.outer(w, w) * (Y - X) ** 2
    ref = np.sum(dens * ((t - X) * (t - Y)) ** 2) / np.sum(dens)
    assert abs(got - ref) < 1e-12
