"""Lorentzian dispersion model, group index and pulling factor.

Frequencies are carried as detunings (Hz) from a reference frequency,
normally the resonance of the medium.  Absolute optical frequencies
(~4e14 Hz) only enter through products such as ``f_0 * dn/df``, which
keeps ``n - 1 ~ 1e-6`` well away from cancellation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidGeometryError,
    PoleError,
    ThresholdError,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
SQRT3 = math.sqrt(3.0)

ArrayLike = Union[float, np.ndarray, Sequence[float]]


def _finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    return arr


@dataclass(frozen=True)
class ResonanceLine:
    """One Lorentzian line: strength ``epsilon``, half-width ``gamma`` (Hz)
    and centre ``f_m`` (Hz, absolute)."""

    epsilon: float
    gamma: float
    f_m: float

    def __post_init__(self):
        for name in ("epsilon", "gamma", "f_m"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if self.gamma <= 0:
            raise InvalidArgumentError(f"gamma must be > 0, got {self.gamma}")
        if self.f_m <= 0:
            raise InvalidArgumentError(f"f_m must be > 0, got {self.f_m}")

    def replace(self, **changes) -> "ResonanceLine":
        values = {"epsilon": self.epsilon, "gamma": self.gamma, "f_m": self.f_m}
        values.update(changes)
        return ResonanceLine(**values)


@dataclass(frozen=True)
class MediumModel:
    """Sum of Lorentzian lines.

    Detunings passed to the evaluation functions are offsets from
    ``reference`` (absolute Hz).  It defaults to the first line's ``f_m``,
    so for a single-line medium the detuning is measured from the line
    centre exactly as in the one-line model.
    """

    lines: tuple
    reference: Optional[float] = None
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lines = tuple(self.lines)
        if not lines:
            raise InvalidArgumentError("medium needs at least one resonance line")
        if not all(isinstance(line, ResonanceLine) for line in lines):
            raise InvalidArgumentError("lines must be ResonanceLine instances")
        object.__setattr__(self, "lines", lines)
        if self.reference is None:
            object.__setattr__(self, "reference", lines[0].f_m)
        elif not (math.isfinite(self.reference) and self.reference > 0):
            raise InvalidArgumentError("reference frequency must be finite and > 0")
        # line detuning = detuning + (reference - f_m)
        offsets = np.array([self.reference - line.f_m for line in lines])
        object.__setattr__(self, "_offsets", offsets)

    @classmethod
    def single(cls, epsilon: float, gamma: float, f_m: float) -> "MediumModel":
        return cls((ResonanceLine(epsilon, gamma, f_m),))

    @property
    def is_single_line(self) -> bool:
        return len(self.lines) == 1

    @property
    def dominant(self) -> ResonanceLine:
        """Line with the largest ``|epsilon| / gamma`` (steepest dispersion)."""
        return max(self.lines, key=lambda line: abs(line.epsilon) / line.gamma)

    @property
    def is_empty(self) -> bool:
        return all(line.epsilon == 0 for line in self.lines)

    def line_detuning(self, index: int, detuning):
        return detuning + self._offsets[index]


@dataclass(frozen=True)
class CavityGeometry:
    """Ring-cavity path lengths (m) and the reference resonant frequency.

    ``f_0`` may be left as ``None``; it is then taken from the medium's
    reference frequency when a medium is supplied.
    """

    p_e: float
    p_d: float
    f_0: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.p_e) and math.isfinite(self.p_d)):
            raise InvalidGeometryError("path lengths must be finite")
        if self.p_e < 0:
            raise InvalidGeometryError(f"p_e must be >= 0, got {self.p_e}")
        if self.p_d <= 0:
            raise InvalidGeometryError(f"p_d must be > 0, got {self.p_d}")
        if self.f_0 is not None and not (math.isfinite(self.f_0) and self.f_0 > 0):
            raise InvalidGeometryError(f"f_0 must be finite and > 0, got {self.f_0}")

    @classmethod
    def from_total(cls, p_tot: float, p_d: float, f_0: Optional[float] = None):
        if not p_tot >= p_d:
            raise InvalidGeometryError(
                f"total path {p_tot} m shorter than dispersive path {p_d} m"
            )
        return cls(p_e=p_tot - p_d, p_d=p_d, f_0=f_0)

    @property
    def p_tot(self) -> float:
        """Geometric round-trip path ``p_e + p_d`` (the ``n = 1`` optical path)."""
        return self.p_e + self.p_d

    def optical_path(self, n) -> float:
        return self.p_e + self.p_d * n

    def reference_frequency(self, medium: Optional[MediumModel] = None) -> float:
        if self.f_0 is not None:
            return self.f_0
        if medium is None:
            raise InvalidGeometryError("f_0 unset and no medium to take it from")
        return medium.reference

    def coupling(self, medium: Optional[MediumModel] = None) -> float:
        """``K = f_0 p_d / p_tot`` in Hz: shift of the lasing detuning per unit ``n - 1``."""
        if self.p_tot == 0:
            raise InvalidGeometryError("p_tot is zero")
        return self.reference_frequency(medium) * self.p_d / self.p_tot

    def mode_number(self, medium: Optional[MediumModel] = None) -> int:
        """Longitudinal mode index ``m`` of the empty cavity at ``f_0``."""
        return round(self.reference_frequency(medium) * self.p_tot / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class PullingFigure:
    pf: float
    n: float
    n_g: float
    detuning: float


@dataclass(frozen=True)
class PFExtrema:
    """Analytic extrema of the pulling factor for one gain/transmission line.

    ``pf_max`` is ``None`` when the line is above threshold; the curve then
    folds and ``bifurcating`` is set instead.
    """

    pf_max: Optional[float]
    pf_min: float
    detuning_at_max: float
    detuning_at_min: float
    epsilon_ratio: float
    bifurcating: bool

    def as_dict(self) -> dict:
        return {
            "pf_max": self.pf_max,
            "pf_min": self.pf_min,
            "detuning_at_max_hz": self.detuning_at_max,
            "detuning_at_min_hz": self.detuning_at_min,
            "epsilon_ratio": self.epsilon_ratio,
            "bifurcating": self.bifurcating,
        }


def index_excess(medium: MediumModel, detuning: ArrayLike):
    """``n - 1`` evaluated directly, without forming ``n``."""
    x = _finite("detuning", detuning)
    dn = np.zeros_like(x)
    for i, line in enumerate(medium.lines):
        if line.epsilon == 0:
            continue
        d = medium.line_detuning(i, x)
        g = line.gamma
        dn = dn + line.epsilon * g * d / (d * d + g * g)
    return float(dn) if dn.ndim == 0 else dn


def index_of_refraction(medium: MediumModel, detuning: ArrayLike):
    """Refractive index ``1 + sum eps*gamma*d/(d**2 + gamma**2)``.

    ``detuning`` may be a scalar or an array; the result has the same shape.
    """
    return 1.0 + index_excess(medium, detuning)


def index_derivative(medium: MediumModel, detuning: ArrayLike):
    """Closed-form ``dn/df`` in 1/Hz."""
    x = _finite("detuning", detuning)
    out = np.zeros_like(x)
    for i, line in enumerate(medium.lines):
        d = medium.line_detuning(i, x)
        g2 = line.gamma * line.gamma
        s = d * d + g2
        out = out + line.epsilon * line.gamma * (g2 - d * d) / (s * s)
    return float(out) if out.ndim == 0 else out


def group_index(cavity: CavityGeometry, medium: MediumModel, detuning: ArrayLike):
    """Generalised group index ``n + (n p_d / p_tot) f_0 dn/df``.

    Can be negative where the dispersion is strongly negative.
    """
    if cavity.p_tot == 0:
        raise InvalidGeometryError("p_tot is zero")
    n = index_of_refraction(medium, detuning)
    dndf = index_derivative(medium, detuning)
    f0 = cavity.reference_frequency(medium)
    return n + (n * cavity.p_d / cavity.p_tot) * f0 * dndf


def pulling_factor(
    cavity: CavityGeometry,
    medium: MediumModel,
    detuning: float,
    pole_floor: float = 1e-12,
) -> PullingFigure:
    """Pulling factor ``n / n_g`` at one detuning.

    Negative values are returned as-is: they mark the nonphysical middle
    branch of a bifurcating cavity.
    """
    detuning = float(_finite("detuning", detuning))
    n = index_of_refraction(medium, detuning)
    ng = group_index(cavity, medium, detuning)
    if abs(ng) < pole_floor:
        raise PoleError(
            f"group index {ng:.3e} below floor at detuning {detuning:.6e} Hz "
            "(bifurcation point)",
            detuning=detuning,
            group_index=ng,
        )
    return PullingFigure(pf=n / ng, n=n, n_g=ng, detuning=detuning)


def _as_line(line_or_medium) -> ResonanceLine:
    if isinstance(line_or_medium, ResonanceLine):
        return line_or_medium
    if isinstance(line_or_medium, MediumModel):
        if not line_or_medium.is_single_line:
            raise InvalidArgumentError(
                "analytic extrema and threshold are defined for single-line media only"
            )
        return line_or_medium.lines[0]
    raise InvalidArgumentError(f"expected ResonanceLine or MediumModel, got {line_or_medium!r}")


def epsilon_threshold(cavity: CavityGeometry, line) -> float:
    """Resonance strength at which the maximum pulling factor diverges:
    ``(8 gamma / f_m) (p_tot / p_d)``."""
    line = _as_line(line)
    if cavity.p_d == 0 or line.f_m == 0:
        raise InvalidGeometryError("p_d and f_m must be non-zero")
    return 8.0 * line.gamma / line.f_m * (cavity.p_tot / cavity.p_d)


def pf_extrema(cavity: CavityGeometry, line) -> PFExtrema:
    """Analytic PF extrema of a single line.

    Maximum ``1/(1 - eps/eps_th)`` at ``+-sqrt(3) gamma``, minimum
    ``1/(1 + 8 eps/eps_th)`` on resonance.
    """
    line = _as_line(line)
    if line.epsilon < 0:
        raise InvalidArgumentError("pf_extrema assumes a gain/transmission line (epsilon >= 0)")
    ratio = line.epsilon / epsilon_threshold(cavity, line)
    if ratio == 1.0:
        raise ThresholdError("epsilon equals the bifurcation threshold: pf_max diverges")
    bifurcating = ratio > 1.0
    return PFExtrema(
        pf_max=None if bifurcating else 1.0 / (1.0 - ratio),
        pf_min=1.0 / (1.0 + 8.0 * ratio),
        detuning_at_max=SQRT3 * line.gamma,
        detuning_at_min=0.0,
        epsilon_ratio=ratio,
        bifurcating=bifurcating,
    )
