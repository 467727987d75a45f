"""Ensemble description and evaluation of the Fisher-Hartwig weight.

The weight on ``[a, b]`` is

    w(x) = exp(W(x)) (x - a)^alpha_left (b - x)^alpha_right
           * prod_j |x - t_j|^alpha_j * omega_j(x),

with ``omega_j(x) = exp(+i pi beta_j)`` for ``x < t_j`` and
``exp(-i pi beta_j)`` for ``x > t_j``.  ``W`` is a real polynomial.
"""
from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import (
    DomainError,
    ExponentOutOfRange,
    NonpositiveInterval,
    NonpositiveTheta,
    OrderingViolation,
    SideRequired,
    ValidationError,
)

EQUILIBRIUM = "equilibrium"
ORACLE = "oracle"


class Side(Enum):
    LEFT = "left-limit"
    RIGHT = "right-limit"
    INTERIOR = "interior"


def _as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class FHSingularity:
    t: float
    alpha: complex = 0j
    beta: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "alpha", _as_complex(self.alpha))
        object.__setattr__(self, "beta", _as_complex(self.beta))


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of a Muttalib-Borodin weight with FH singularities.

    ``w_smooth`` holds the coefficients ``[c0, c1, ...]`` of ``W`` in
    increasing degree.  An empty tuple means ``W == 0``.
    """

    a: float
    b: float
    theta: float = 1.0
    w_smooth: tuple = ()
    alpha_left: complex = 0j
    alpha_right: complex = 0j
    singularities: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "w_smooth", tuple(float(c) for c in self.w_smooth))
        object.__setattr__(self, "alpha_left", _as_complex(self.alpha_left))
        object.__setattr__(self, "alpha_right", _as_complex(self.alpha_right))
        sings = tuple(
            s if isinstance(s, FHSingularity) else FHSingularity(**s)
            for s in self.singularities
        )
        object.__setattr__(self, "singularities", sings)

    # -- derived views ----------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.singularities)

    @property
    def locations(self) -> list[float]:
        return [s.t for s in self.singularities]

    def base(self) -> "EnsembleSpec":
        """Copy with every interior singularity removed (the base weight)."""
        return replace(self, singularities=())

    def is_positive(self) -> bool:
        """True when the weight is real and positive on (a, b) minus the t_j."""
        exps = [self.alpha_left, self.alpha_right] + [s.alpha for s in self.singularities]
        return all(e.imag == 0 for e in exps) and all(
            s.beta.real == 0 for s in self.singularities
        )

    def conjugate(self) -> "EnsembleSpec":
        """Spec of the complex-conjugate weight: ``alpha -> conj(alpha)``, ``beta -> -conj(beta)``.

        The jump factor is ``exp(+i pi beta)`` left of ``t``, so conjugating it
        gives ``exp(-i pi conj(beta))``, the factor with parameter ``-conj(beta)``.
        """
        return replace(
            self,
            alpha_left=self.alpha_left.conjugate(),
            alpha_right=self.alpha_right.conjugate(),
            singularities=tuple(
                FHSingularity(s.t, s.alpha.conjugate(), -s.beta.conjugate())
                for s in self.singularities
            ),
        )

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        c = lambda z: [z.real, z.imag]  # noqa: E731
        return {
            "a": self.a,
            "b": self.b,
            "theta": self.theta,
            "W": list(self.w_smooth),
            "alpha_left": c(self.alpha_left),
            "alpha_right": c(self.alpha_right),
            "singularities": [
                {"t": s.t, "alpha": c(s.alpha), "beta": c(s.beta)}
                for s in self.singularities
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        try:
            return cls(
                a=d["a"],
                b=d["b"],
                theta=d.get("theta", 1.0),
                w_smooth=tuple(d.get("W", ())),
                alpha_left=d.get("alpha_left", 0),
                alpha_right=d.get("alpha_right", 0),
                singularities=tuple(
                    FHSingularity(s["t"], s.get("alpha", 0), s.get("beta", 0))
                    for s in d.get("singularities", ())
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed ensemble spec: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"spec is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"spec file not found: {path}")
        return cls.from_json(path.read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass(frozen=True)
class WeightValue:
    value: complex
    side: Side
    overflow: bool = False


def validate_spec(spec: EnsembleSpec, mode: str = EQUILIBRIUM) -> EnsembleSpec:
    """Check the parameter constraints and return ``spec`` unchanged.

    ``mode="equilibrium"`` enforces ``Re beta in (-1/4, 1/4)`` as needed by the
    asymptotic theory; ``mode="oracle"`` only asks for ``Re beta in (-1/2, 1/2]``.
    """
    if mode not in (EQUILIBRIUM, ORACLE):
        raise ValueError(f"unknown validation mode {mode!r}")
    if not (math.isfinite(spec.a) and math.isfinite(spec.b)) or spec.a <= 0 or spec.b <= spec.a:
        raise NonpositiveInterval(f"need 0 < a < b, got a={spec.a}, b={spec.b}")
    if not math.isfinite(spec.theta) or spec.theta <= 0:
        raise NonpositiveTheta(f"theta must be positive, got {spec.theta}")
    prev = spec.a
    for j, s in enumerate(spec.singularities, start=1):
        if not s.t > prev:
            raise OrderingViolation(
                f"t_{j}={s.t} must exceed {prev} (locations strictly increasing in (a, b))"
            )
        prev = s.t
    if spec.singularities and not prev < spec.b:
        raise OrderingViolation(f"t_{spec.m}={prev} must be < b={spec.b}")

    named = [("alpha_left", spec.alpha_left), ("alpha_right", spec.alpha_right)]
    named += [(f"alpha_{j}", s.alpha) for j, s in enumerate(spec.singularities, 1)]
    for name, al in named:
        if not al.real > -1:
            raise ExponentOutOfRange(f"Re {name} = {al.real} must be > -1")
    for j, s in enumerate(spec.singularities, 1):
        r = s.beta.real
        if mode == EQUILIBRIUM:
            ok = -0.25 < r < 0.25
            window = "(-1/4, 1/4)"
        else:
            ok = -0.5 < r <= 0.5
            window = "(-1/2, 1/2]"
        if not ok:
            raise ExponentOutOfRange(f"Re beta_{j} = {r} outside {window} ({mode} mode)")
    return spec


def smooth_part(spec: EnsembleSpec, x: float) -> float:
    """Evaluate W at ``x`` by Horner's rule."""
    if not spec.a <= x <= spec.b:
        raise DomainError(f"x={x} outside [{spec.a}, {spec.b}]")
    return horner(spec.w_smooth, x)


def horner(coeffs: Sequence[float], x):
    acc = 0.0 * x
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _cpow(base: float, expo: complex) -> complex:
    # principal power of a non-negative real base
    if expo == 0:
        return 1.0 + 0j
    if base == 0.0:
        if expo.real > 0:
            return 0j
        return complex(math.inf, 0.0)
    return cmath.exp(expo * math.log(base))


def weight_eval(spec: EnsembleSpec, x: float, side: Side = Side.INTERIOR) -> WeightValue:
    """Evaluate the weight at ``x``.

    At a jump location ``x == t_j`` the one-sided limit must be selected with
    ``side``.  Endpoint divergences (``Re alpha < 0`` at ``x = a`` or ``b``)
    return an infinite value with ``overflow=True`` instead of raising.
    """
    a, b = spec.a, spec.b
    if not a <= x <= b:
        raise DomainError(f"x={x} outside [{a}, {b}]")
    side = Side(side)
    at_jump = any(x == s.t for s in spec.singularities)
    if at_jump and side is Side.INTERIOR:
        raise SideRequired(f"x={x} is a jump location; choose left-limit or right-limit")

    val = cmath.exp(horner(spec.w_smooth, x))
    val *= _cpow(x - a, spec.alpha_left)
    val *= _cpow(b - x, spec.alpha_right)
    for s in spec.singularities:
        val *= _cpow(abs(x - s.t), s.alpha)
        if x < s.t or (x == s.t and side is Side.LEFT):
            val *= cmath.exp(1j * math.pi * s.beta)
        else:
            val *= cmath.exp(-1j * math.pi * s.beta)
    overflow = not (math.isfinite(val.real) and math.isfinite(val.imag))
    if overflow:
        val = complex(math.inf, 0.0)
    return WeightValue(val, side if at_jump else Side.INTERIOR, overflow)
