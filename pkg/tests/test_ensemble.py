import cmath
import json
import math

import pytest

from mbdet.ensemble import (
    EQUILIBRIUM,
    ORACLE,
    EnsembleSpec,
    FHSingularity,
    Side,
    smooth_part,
    validate_spec,
    weight_eval,
)
from mbdet.errors import (
    DomainError,
    ExponentOutOfRange,
    NonpositiveInterval,
    NonpositiveTheta,
    OrderingViolation,
    SideRequired,
    ValidationError,
)


def one_jump(beta, alpha=0.0, t=2.0):
    return EnsembleSpec(1, 4, singularities=[FHSingularity(t, alpha, beta)])


def test_validate_plain_interval():
    spec = EnsembleSpec(1, 4, theta=1)
    assert validate_spec(spec) is spec


def test_beta_window_depends_on_mode():
    spec = one_jump(0.3)
    with pytest.raises(ExponentOutOfRange):
        validate_spec(spec, EQUILIBRIUM)
    assert validate_spec(spec, ORACLE) is spec


@pytest.mark.parametrize("kw, err", [
    (dict(a=0, b=4), NonpositiveInterval),
    (dict(a=3, b=2), NonpositiveInterval),
    (dict(a=1, b=4, theta=0), NonpositiveTheta),
    (dict(a=1, b=4, alpha_left=-1), ExponentOutOfRange),
    (dict(a=1, b=4, alpha_right=complex(-1.2, 0.5)), ExponentOutOfRange),
    (dict(a=1, b=4, singularities=[FHSingularity(3), FHSingularity(2)]), OrderingViolation),
    (dict(a=1, b=4, singularities=[FHSingularity(4)]), OrderingViolation),
    (dict(a=1, b=4, singularities=[FHSingularity(1)]), OrderingViolation),
])
def test_validation_errors(kw, err):
    with pytest.raises(err):
        validate_spec(EnsembleSpec(**kw))


def test_oracle_window_upper_end_inclusive():
    validate_spec(one_jump(0.5), ORACLE)
    with pytest.raises(ExponentOutOfRange):
        validate_spec(one_jump(-0.5), ORACLE)


def test_unit_weight():
    spec = EnsembleSpec(1, 4)
    for x in (1.0, 2.2, 4.0):
        assert weight_eval(spec, x).value == 1.0


def test_root_singularity_value():
    assert weight_eval(one_jump(0, alpha=1), 3.0).value == pytest.approx(1.0, abs=1e-15)


def test_imaginary_jump_left_branch():
    v = weight_eval(one_jump(0.1j), 1.5).value
    assert v.imag == 0
    assert v.real == pytest.approx(math.exp(-0.1 * math.pi), rel=1e-15)
    assert v.real == pytest.approx(0.730403, abs=1e-6)


def test_jump_relation_at_t():
    beta = complex(0.2, 0.07)
    spec = one_jump(beta, alpha=0.4)
    with pytest.raises(SideRequired):
        weight_eval(spec, 2.0)
    # |x - t|^alpha vanishes at t, so compare with alpha = 0 to see the phase
    spec0 = one_jump(beta)
    left = weight_eval(spec0, 2.0, Side.LEFT).value
    right = weight_eval(spec0, 2.0, Side.RIGHT).value
    assert right / left == pytest.approx(cmath.exp(-2j * math.pi * beta), rel=1e-15)


def test_edge_divergence_flags_overflow():
    spec = EnsembleSpec(1, 2, alpha_left=-0.5)
    wv = weight_eval(spec, 1.0)
    assert wv.overflow and math.isinf(wv.value.real)
    assert not weight_eval(spec, 1.5).overflow


def test_outside_domain():
    with pytest.raises(DomainError):
        weight_eval(EnsembleSpec(1, 4), 0.5)
    with pytest.raises(DomainError):
        smooth_part(EnsembleSpec(1, 4), 5.0)


@pytest.mark.parametrize("coeffs, x, val", [((), 1.7, 0.0), ((0, 1), 2.5, 2.5), ((0, 0, 1), 2.0, 4.0)])
def test_smooth_part(coeffs, x, val):
    assert smooth_part(EnsembleSpec(1, 4, w_smooth=coeffs), x) == val


def test_weight_includes_exp_w():
    spec = EnsembleSpec(1, 4, w_smooth=(0.5, -0.25))
    assert weight_eval(spec, 2.0).value == pytest.approx(1.0)


def test_json_roundtrip(tmp_path):
    spec = EnsembleSpec(1, 4, theta=2, w_smooth=(0.1, 0.2), alpha_left=0.5,
                        singularities=[FHSingularity(2.5, complex(1, 0.5), 0.1j)])
    again = EnsembleSpec.from_json(spec.to_json())
    assert again == spec
    p = tmp_path / "s.json"
    p.write_text(spec.to_json())
    assert EnsembleSpec.load(p) == spec
    assert again.digest() == spec.digest()
    d = json.loads(spec.to_json())
    assert d["singularities"][0]["alpha"] == [1.0, 0.5]


def test_load_missing_names_path(tmp_path):
    with pytest.raises(ValidationError, match="nope.json"):
        EnsembleSpec.load(tmp_path / "nope.json")


def test_malformed_json():
    with pytest.raises(ValidationError):
        EnsembleSpec.from_json("{")
    with pytest.raises(ValidationError):
        EnsembleSpec.from_dict({"b": 3})


def test_positivity_and_conjugate():
    spec = one_jump(complex(0.1, 0.2), alpha=complex(0.3, 0.4))
    assert not spec.is_positive()
    c = spec.conjugate()
    assert c.singularities[0].beta == complex(-0.1, 0.2)
    assert c.singularities[0].alpha == complex(0.3, -0.4)
    for x in (1.5, 3.0):
        assert weight_eval(c, x).value == pytest.approx(weight_eval(spec, x).value.conjugate(), rel=1e-15)
    assert one_jump(0.2j, alpha=0.7).is_positive()
    assert spec.base().m == 0
