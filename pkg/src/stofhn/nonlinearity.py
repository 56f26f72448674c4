"""Scalar constitutive laws: the monotone diffusion flux, the cubic ionic
current, and the regularized (resolvent-based) surrogate of the cubic used by
the implicit stepper.

All functions accept scalars or numpy arrays and are stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError

_RESOLVENT_ATOL = 1e-13
_RESOLVENT_MAX_ITERS = 200

DIFFUSION_VARIANTS = ("linear", "cubic_monotone", "saturating")


@dataclass(frozen=True)
class DiffusionLaw:
    """Monotone increasing flux law with gamma(0) = 0 and slope >= c > 0.

    Variants: ``linear`` c*r, ``cubic_monotone`` c*r + b*r^3 (b >= 0),
    ``saturating`` c*r + arctan(r).
    """

    variant: str = "linear"
    c: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.variant not in DIFFUSION_VARIANTS:
            raise ConfigurationError(
                f"unknown diffusion variant {self.variant!r}; choose from {DIFFUSION_VARIANTS}"
            )
        if self.c <= 0.0:
            raise ConfigurationError(f"diffusion slope c must be positive, got {self.c}")
        if self.variant == "cubic_monotone" and self.b < 0.0:
            raise ConfigurationError(f"cubic coefficient b must be >= 0, got {self.b}")

    @property
    def monotonicity_constant(self) -> float:
        return self.c


def gamma_eval(law: DiffusionLaw, r):
    if not np.isscalar(r):
        r = np.asarray(r, dtype=float)
    if law.variant == "linear":
        return law.c * r
    if law.variant == "cubic_monotone":
        return law.c * r + law.b * r**3
    return law.c * r + np.arctan(r)


def gamma_prime(law: DiffusionLaw, r):
    if not np.isscalar(r):
        r = np.asarray(r, dtype=float)
    if law.variant == "linear":
        return law.c if np.isscalar(r) else np.full_like(r, law.c)
    if law.variant == "cubic_monotone":
        return law.c + 3.0 * law.b * r**2
    return law.c + 1.0 / (1.0 + r**2)


@dataclass(frozen=True)
class IonicCubic:
    """Cubic reaction term scale * v (v - a) (v - 1) with threshold 0 < a < 1.

    ``scale = 0`` switches the reaction off entirely (the degenerate case used
    by reductions and oracles).
    """

    a: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ConfigurationError(f"threshold a must lie in (0, 1), got {self.a}")
        if self.scale < 0.0:
            raise ConfigurationError(f"scale must be >= 0, got {self.scale}")

    @property
    def gprime_min(self) -> float:
        """Global minimum of the derivative (negative for 0 < a < 1)."""
        if self.scale == 0.0:
            return 0.0
        return self.scale * (self.a - (1.0 + self.a) ** 2 / 3.0)

    @property
    def resolvent_cap(self) -> float:
        """Largest regularization for which r + eps*G(r) keeps slope >= 1/2."""
        drop = max(0.0, -self.gprime_min)
        return math.inf if drop == 0.0 else 1.0 / (2.0 * drop)


def ionic_eval(cubic: IonicCubic, v):
    if not np.isscalar(v):
        v = np.asarray(v, dtype=float)
    return cubic.scale * v * (v - cubic.a) * (v - 1.0)


def ionic_prime(cubic: IonicCubic, v):
    if not np.isscalar(v):
        v = np.asarray(v, dtype=float)
    return cubic.scale * (3.0 * v**2 - 2.0 * (1.0 + cubic.a) * v + cubic.a)


@dataclass(frozen=True)
class YosidaParam:
    """Regularization width for the resolvent construction, validated against
    the admissible cap of the cubic it will be applied to."""

    epsilon: float
    admissible_max: float = math.inf

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.epsilon > self.admissible_max:
            raise ConfigurationError(
                f"epsilon {self.epsilon} exceeds the admissible maximum "
                f"{self.admissible_max} for this cubic"
            )

    @classmethod
    def for_cubic(cls, cubic: IonicCubic, epsilon: float) -> "YosidaParam":
        return cls(epsilon=epsilon, admissible_max=cubic.resolvent_cap)


def _check_epsilon(cubic: IonicCubic, epsilon: float) -> None:
    YosidaParam.for_cubic(cubic, epsilon)


def _resolvent_array(cubic: IonicCubic, epsilon: float, z: np.ndarray) -> np.ndarray:
    if cubic.scale == 0.0:
        return z.astype(float, copy=True)
    d = epsilon * ionic_eval(cubic, z)
    # Slope of w + eps*G(w) is >= 1/2 under the cap, which makes these
    # brackets rigorous: phi(lo) <= z <= phi(hi).
    lo = z - 2.0 * np.maximum(d, 0.0)
    hi = z - 2.0 * np.minimum(d, 0.0)
    w = np.clip(z - d, lo, hi)
    for _ in range(_RESOLVENT_MAX_ITERS):
        res = w + epsilon * ionic_eval(cubic, w) - z
        if np.max(np.abs(res)) <= _RESOLVENT_ATOL:
            return w
        lo = np.where(res < 0.0, w, lo)
        hi = np.where(res > 0.0, w, hi)
        cand = w - res / (1.0 + epsilon * ionic_prime(cubic, w))
        outside = ~np.isfinite(cand) | (cand < lo) | (cand > hi)
        w = np.where(outside, 0.5 * (lo + hi), cand)
    raise NumericError(
        "resolvent iteration failed to reach tolerance",
        residual=float(np.max(np.abs(w + epsilon * ionic_eval(cubic, w) - z))),
    )


def resolvent_G(cubic: IonicCubic, epsilon: float, z):
    """Unique w with w + epsilon*G(w) = z (monotone scalar equation).

    Safeguarded Newton with bisection fallback; residual driven below 1e-13.
    """
    _check_epsilon(cubic, epsilon)
    if np.isscalar(z):
        return float(_resolvent_array(cubic, epsilon, np.asarray([z], dtype=float))[0])
    return _resolvent_array(cubic, epsilon, np.asarray(z, dtype=float))


def yosida_G(cubic: IonicCubic, epsilon: float, z):
    """Lipschitz surrogate (z - resolvent(z)) / epsilon of the cubic."""
    _check_epsilon(cubic, epsilon)
    if np.isscalar(z):
        w = _resolvent_array(cubic, epsilon, np.asarray([z], dtype=float))[0]
        return float((z - w) / epsilon)
    z = np.asarray(z, dtype=float)
    return (z - _resolvent_array(cubic, epsilon, z)) / epsilon


def yosida_value_and_slope(cubic: IonicCubic, epsilon: float, z: np.ndarray):
    """Value and derivative of the regularized cubic, for Newton solvers.

    The derivative follows from implicit differentiation of the resolvent:
    d/dz = G'(w) / (1 + eps G'(w)) with w the resolvent point.
    """
    _check_epsilon(cubic, epsilon)
    z = np.asarray(z, dtype=float)
    if cubic.scale == 0.0:
        return np.zeros_like(z), np.zeros_like(z)
    w = _resolvent_array(cubic, epsilon, z)
    gp = ionic_prime(cubic, w)
    return (z - w) / epsilon, gp / (1.0 + epsilon * gp)
