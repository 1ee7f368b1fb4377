"""Two-type stochastic Lotka-Volterra model: parameters and closed-form fields.

Population sizes ``z`` follow

    dZ^i = sqrt(gamma_i Z^i) dB^i + Z^i (r_i - c_ii Z^i - c_ij Z^j) dt

and the Kolmogorov coordinates ``x^i = 2 sqrt(z^i / gamma_i)`` turn this into
``dX = dB - grad V(X) dt`` as soon as ``c12 gamma2 == c21 gamma1``.

All field evaluators take arrays whose last axis holds the coordinates and
broadcast over the leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Mapping

import numpy as np

from .errors import (
    BalanceViolation,
    DomainError,
    NegativeInput,
    PositivityViolation,
    SignMismatch,
    StrongCooperation,
    ValidationError,
)

COEFFICIENTS = ("gamma1", "gamma2", "r1", "r2", "c11", "c12", "c21", "c22")
BALANCE_RTOL = 1e-12


class Regime(str, Enum):
    COMPETITION = "COMPETITION"
    COOPERATIVE = "COOPERATIVE"
    INDEPENDENT = "INDEPENDENT"


@dataclass(frozen=True)
class LVParams:
    """Validated ecological coefficients.

    Build through :func:`validate_params`; the constructor does not check
    anything.  ``c12`` and ``c21`` are stored normalized so that both products
    ``c12*gamma2`` and ``c21*gamma1`` equal ``16*alpha``.
    """

    gamma1: float
    gamma2: float
    r1: float
    r2: float
    c11: float
    c12: float
    c21: float
    c22: float
    alpha: float
    regime: Regime

    @property
    def gamma(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2])

    @property
    def r(self) -> np.ndarray:
        return np.array([self.r1, self.r2])

    @property
    def c(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [self.c21, self.c22]])

    @property
    def determinant(self) -> float:
        return self.c11 * self.c22 - self.c12 * self.c21

    def coefficients(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in COEFFICIENTS}

    def swapped(self) -> "LVParams":
        """Same model with the two types exchanged."""
        return validate_params(
            gamma1=self.gamma2, gamma2=self.gamma1, r1=self.r2, r2=self.r1,
            c11=self.c22, c12=self.c21, c21=self.c12, c22=self.c11,
        )

    def is_exchange_symmetric(self) -> bool:
        return (self.gamma1 == self.gamma2 and self.r1 == self.r2
                and self.c11 == self.c22 and self.c12 == self.c21)


def validate_params(raw: Mapping[str, float] | None = None, **kwargs: float) -> LVParams:
    """Check the eight raw coefficients and return an :class:`LVParams`.

    Accepts a mapping, keyword arguments, or both (keywords win).
    """
    values = dict(raw or {})
    values.update(kwargs)
    missing = [k for k in COEFFICIENTS if k not in values]
    if missing:
        raise ValidationError(f"missing coefficients: {', '.join(missing)}")
    unknown = sorted(set(values) - set(COEFFICIENTS))
    if unknown:
        raise ValidationError(f"unknown coefficients: {', '.join(unknown)}")
    try:
        v = {k: float(values[k]) for k in COEFFICIENTS}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"coefficients must be real numbers: {exc}") from None
    bad = [k for k, x in v.items() if not math.isfinite(x)]
    if bad:
        raise ValidationError(f"non-finite coefficients: {', '.join(bad)}")

    for name in ("gamma1", "gamma2", "r1", "r2", "c11", "c22"):
        if v[name] <= 0.0:
            raise PositivityViolation(f"{name} must be strictly positive, got {v[name]!r}")

    c12, c21 = v["c12"], v["c21"]
    if c12 * c21 < 0.0:
        raise SignMismatch(
            f"c12={c12!r} and c21={c21!r} have opposite signs; "
            "the balance condition c12*gamma2 == c21*gamma1 cannot hold"
        )
    p12 = c12 * v["gamma2"]
    p21 = c21 * v["gamma1"]
    if abs(p12 - p21) > BALANCE_RTOL * max(abs(p12), 1.0):
        raise BalanceViolation(
            f"balance condition violated: c12*gamma2={p12!r} != c21*gamma1={p21!r}"
        )
    alpha = 0.5 * (p12 + p21) / 16.0

    if alpha == 0.0:
        regime = Regime.INDEPENDENT
        c12 = c21 = 0.0
    else:
        c12 = 16.0 * alpha / v["gamma2"]
        c21 = 16.0 * alpha / v["gamma1"]
        if alpha > 0.0:
            regime = Regime.COMPETITION
        else:
            det = v["c11"] * v["c22"] - c12 * c21
            if det <= 0.0:
                raise StrongCooperation(
                    "weak cooperation condition violated: "
                    f"c11*c22 - c12*c21 = {det!r} <= 0 with alpha < 0"
                )
            regime = Regime.COOPERATIVE

    return LVParams(
        gamma1=v["gamma1"], gamma2=v["gamma2"], r1=v["r1"], r2=v["r2"],
        c11=v["c11"], c12=c12, c21=c21, c22=v["c22"], alpha=alpha, regime=regime,
    )


# -- change of variables ----------------------------------------------------

def z_to_x(z, p: LVParams) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise NegativeInput("population sizes must be non-negative")
    return 2.0 * np.sqrt(z / p.gamma)


def x_to_z(x, p: LVParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise NegativeInput("Kolmogorov coordinates must be non-negative")
    return p.gamma * x * x / 4.0


# -- potential and derived fields ----------------------------------------------

def _interior(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError(f"expected points with 2 coordinates, got shape {x.shape}")
    if not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise DomainError("point must lie in the open quadrant")
    return x[..., 0], x[..., 1]


def potential_Q(x, p: LVParams) -> np.ndarray:
    """Quartic part of ``2V``: ``2V = log x1 + log x2 + Q``."""
    x1, x2 = _interior(x)
    return (p.c11 * p.gamma1 * x1**4 / 16 - p.r1 * x1**2 / 2
            + p.c22 * p.gamma2 * x2**4 / 16 - p.r2 * x2**2 / 2
            + 2 * p.alpha * x1**2 * x2**2)


def potential_V(x, p: LVParams) -> np.ndarray:
    x1, x2 = _interior(x)
    return 0.5 * (np.log(x1) + np.log(x2) + potential_Q(x, p))


def grad_V(x, p: LVParams) -> np.ndarray:
    x1, x2 = _interior(x)
    a = p.alpha
    g1 = 0.5 / x1 + p.c11 * p.gamma1 * x1**3 / 8 - p.r1 * x1 / 2 + 2 * a * x1 * x2**2
    g2 = 0.5 / x2 + p.c22 * p.gamma2 * x2**3 / 8 - p.r2 * x2 / 2 + 2 * a * x2 * x1**2
    return np.stack([g1, g2], axis=-1)


def laplacian_V(x, p: LVParams) -> np.ndarray:
    x1, x2 = _interior(x)
    return (-0.5 / x1**2 + 3 * p.c11 * p.gamma1 * x1**2 / 8 - p.r1 / 2
            - 0.5 / x2**2 + 3 * p.c22 * p.gamma2 * x2**2 / 8 - p.r2 / 2
            + 2 * p.alpha * (x1**2 + x2**2))


def schrodinger_G(x, p: LVParams) -> np.ndarray:
    """``|grad V|^2 - Laplacian V``, the potential of the transformed operator."""
    g = grad_V(x, p)
    return np.sum(g * g, axis=-1) - laplacian_V(x, p)


def mu_density(x, p: LVParams) -> np.ndarray:
    return np.exp(-2.0 * potential_V(x, p))


def quartic_q(u, v, p: LVParams):
    """Quartic form ``q(u, v)``; ``-q(x1^2, x2^2)`` is the leading drift of ``|X|^2``."""
    return p.c11 * p.gamma1 * u * u + p.c22 * p.gamma2 * v * v + 32 * p.alpha * u * v


# -- drifts -------------------------------------------------------------------

def drift_slvp(z, p: LVParams) -> np.ndarray:
    """Drift of the population process ``Z``."""
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]
    return np.stack([z1 * (p.r1 - p.c11 * z1 - p.c12 * z2),
                     z2 * (p.r2 - p.c21 * z1 - p.c22 * z2)], axis=-1)


def diffusion_slvp(z, p: LVParams) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.sqrt(p.gamma * np.clip(z, 0.0, None))


def drift_slvkp(x, p: LVParams) -> np.ndarray:
    """Drift of ``X``, written out coefficient by coefficient."""
    x1, x2 = _interior(x)
    b1 = (p.r1 * x1 / 2 - p.c11 * p.gamma1 * x1**3 / 8
          - p.c12 * p.gamma2 * x1 * x2**2 / 8 - 0.5 / x1)
    b2 = (p.r2 * x2 / 2 - p.c22 * p.gamma2 * x2**3 / 8
          - p.c21 * p.gamma1 * x2 * x1**2 / 8 - 0.5 / x2)
    return np.stack([b1, b2], axis=-1)


def drift_U(x, p: LVParams) -> np.ndarray:
    """Drift of the comparison process ``U`` (no ``-1/(2x)`` term)."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    b1 = p.r1 * x1 / 2 - p.c11 * p.gamma1 * x1**3 / 8 - p.c12 * p.gamma2 * x1 * x2**2 / 8
    b2 = p.r2 * x2 / 2 - p.c22 * p.gamma2 * x2**3 / 8 - p.c21 * p.gamma1 * x2 * x1**2 / 8
    return np.stack([b1, b2], axis=-1)


def _axis_coeffs(p: LVParams, axis: int) -> tuple[float, float, float]:
    if axis == 1:
        return p.gamma1, p.r1, p.c11
    if axis == 2:
        return p.gamma2, p.r2, p.c22
    raise ValueError(f"axis must be 1 or 2, got {axis!r}")


def drift_H(u, p: LVParams, axis: int):
    """Drift of the single-type process ``H^axis`` (the dynamics on an axis)."""
    g, r, c = _axis_coeffs(p, axis)
    u = np.asarray(u, dtype=float)
    if not np.all(u > 0):
        raise DomainError("H drift is defined on the open half-line")
    return r * u / 2 - c * g * u**3 / 8 - 0.5 / u


def axis_potential(u, p: LVParams, axis: int):
    """Potential whose negative gradient is the ``H^axis`` drift.

    Uses the cubic self-interaction ``c*gamma*u^3/8`` of the ``H`` drift.
    """
    g, r, c = _axis_coeffs(p, axis)
    u = np.asarray(u, dtype=float)
    if not np.all(u > 0):
        raise DomainError("axis potential is defined on the open half-line")
    return 0.5 * (np.log(u) + c * g * u**4 / 16 - r * u**2 / 2)


def axis_G(u, p: LVParams, axis: int):
    g, r, c = _axis_coeffs(p, axis)
    u = np.asarray(u, dtype=float)
    if not np.all(u > 0):
        raise DomainError("axis potential is defined on the open half-line")
    d1 = 0.5 / u + c * g * u**3 / 8 - r * u / 2
    d2 = -0.5 / u**2 + 3 * c * g * u**2 / 8 - r / 2
    return d1 * d1 - d2


# -- model bundles --------------------------------------------------------------
#
# Everything downstream (spectral assembly, path simulation) talks to these
# through ``dim``, ``V``, ``G`` and, for the Lotka-Volterra bundles,
# ``lv_coefficients``.  Point arrays carry coordinates on the last axis.

@dataclass(frozen=True)
class KolmogorovModel:
    params: LVParams
    dim: ClassVar[int] = 2
    name: ClassVar[str] = "slvkp"

    def V(self, x):
        return potential_V(x, self.params)

    def grad_V(self, x):
        return grad_V(x, self.params)

    def laplacian_V(self, x):
        return laplacian_V(x, self.params)

    def G(self, x):
        return schrodinger_G(x, self.params)

    def Q(self, x):
        return potential_Q(x, self.params)

    def mu_density(self, x):
        return mu_density(x, self.params)

    def drift_slvkp(self, x):
        return drift_slvkp(x, self.params)

    def drift_slvp(self, z):
        return drift_slvp(z, self.params)

    def drift_H(self, u, axis: int):
        return drift_H(u, self.params, axis)

    def drift_U(self, x):
        return drift_U(x, self.params)

    def axis_model(self, axis: int) -> "AxisModel":
        return AxisModel(self.params, axis)

    def lv_coefficients(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(gamma, r, C)`` of the population dynamics."""
        return self.params.gamma, self.params.r, self.params.c

    def describe(self) -> dict:
        return {"model": self.name, "params": self.params.coefficients(),
                "regime": self.params.regime.value}


@dataclass(frozen=True)
class AxisModel:
    """The single-type process ``H^axis`` living on one half-axis."""

    params: LVParams
    axis: int
    dim: ClassVar[int] = 1
    name: ClassVar[str] = "axis"

    def __post_init__(self):
        _axis_coeffs(self.params, self.axis)

    def V(self, x):
        return axis_potential(np.asarray(x, dtype=float)[..., 0], self.params, self.axis)

    def G(self, x):
        return axis_G(np.asarray(x, dtype=float)[..., 0], self.params, self.axis)

    def drift(self, x):
        u = np.asarray(x, dtype=float)[..., 0]
        return drift_H(u, self.params, self.axis)[..., None]

    def lv_coefficients(self):
        g, r, c = _axis_coeffs(self.params, self.axis)
        return np.array([g]), np.array([r]), np.array([[c]])

    def describe(self) -> dict:
        return {"model": self.name, "axis": self.axis,
                "params": self.params.coefficients()}


@dataclass(frozen=True)
class DirichletHarness:
    """Brownian motion killed on leaving the box ``(0, length)^dim``; ``V == 0``.

    Used as an analytic regression target: the killing rates are
    ``(k_1^2 + ... + k_dim^2) * pi^2 / (2 length^2)``.
    """

    dim: int = 1
    length: float = math.pi
    name: ClassVar[str] = "dirichlet"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError("harness dimension must be 1 or 2")
        if not self.length > 0:
            raise ValidationError("harness length must be positive")

    def V(self, x):
        return np.zeros(np.shape(x)[:-1])

    def G(self, x):
        return np.zeros(np.shape(x)[:-1])

    def eigenvalue(self, *modes: int) -> float:
        return 0.5 * (math.pi / self.length) ** 2 * sum(k * k for k in modes)

    def describe(self) -> dict:
        return {"model": self.name, "dim": self.dim, "length": self.length}


def load_model(params: Mapping[str, float]) -> KolmogorovModel:
    return KolmogorovModel(validate_params(params))
