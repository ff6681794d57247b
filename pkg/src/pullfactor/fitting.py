"""Model fits to measured lasing-frequency curves.

Two models are provided: the single-line dispersive cavity (four free
parameters, fitted by Levenberg-Marquardt through the resonance solver)
and a plain degree-5 polynomial for curves the line model cannot
describe, such as the U-shaped low-PF regime.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from .dispersion import (
    CavityGeometry,
    MediumModel,
    ResonanceLine,
    epsilon_threshold,
    pf_extrema,
)
from .errors import (
    ConditioningError,
    ConvergenceError,
    FlatDataError,
    InvalidArgumentError,
    PullFactorError,
    UndefinedDerivativeError,
)
from .solver import ResonanceEquation, _cubic_branch, branch_solution

GAMMA_BOUNDS = (1e3, 1e9)  # Hz
EPSILON_MAX_RATIO = 1e3  # upper bound on eps / eps_th
MIN_POINTS = {"lorentzian": 8, "polynomial5": 7}
# a fold is a double root, located only to ~sqrt(machine eps); G' there is ~1e-8
JUMP_SLOPE_TOL = 1e-6
POLISH_STEPS = 5


@dataclass(frozen=True)
class MeasurementSeries:
    """Measured ``(delta_f_e, delta_f_d)`` pairs in Hz, sorted by ``delta_f_e``.

    Repeated abscissae are allowed; a repeated point acts like a doubled
    weight.
    """

    delta_f_e: np.ndarray
    delta_f_d: np.ndarray
    weight: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.delta_f_e, dtype=float).ravel()
        d = np.asarray(self.delta_f_d, dtype=float).ravel()
        w = np.ones_like(e) if self.weight is None else np.asarray(self.weight, dtype=float).ravel()
        if not (e.shape == d.shape == w.shape):
            raise InvalidArgumentError("delta_f_e, delta_f_d and weight must have equal length")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(d)) and np.all(np.isfinite(w))):
            raise InvalidArgumentError("measurement values must be finite")
        if np.any(w < 0):
            raise InvalidArgumentError("weights must be >= 0")
        order = np.argsort(e, kind="stable")
        object.__setattr__(self, "delta_f_e", e[order])
        object.__setattr__(self, "delta_f_d", d[order])
        object.__setattr__(self, "weight", w[order])
        extra = {k: [v[i] for i in order] for k, v in dict(self.extra).items()}
        object.__setattr__(self, "extra", extra)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return self.delta_f_e.size

    def with_delta_f_d(self, delta_f_d) -> "MeasurementSeries":
        return MeasurementSeries(self.delta_f_e, delta_f_d, self.weight, self.metadata)


@dataclass(frozen=True)
class LorentzianParams:
    """``center_offset`` places the line on the ``delta_f_e`` axis;
    ``baseline_offset`` shifts the lasing detuning."""

    epsilon: float
    gamma: float
    center_offset: float = 0.0
    baseline_offset: float = 0.0

    def as_array(self):
        return np.array([self.epsilon, self.gamma, self.center_offset, self.baseline_offset])

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "gamma_hz": self.gamma,
            "center_offset_hz": self.center_offset,
            "baseline_offset_hz": self.baseline_offset,
        }


@dataclass
class FitReport:
    model_kind: str
    parameters: dict
    rss: float
    residuals: np.ndarray
    derived: dict = field(default_factory=dict)
    converged: bool = True
    iterations: int = 0
    warnings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    params: Optional[LorentzianParams] = None
    polynomial: Optional[Polynomial] = None
    cavity: Optional[CavityGeometry] = None
    f_m: Optional[float] = None
    direction: str = "up"

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "parameters": self.parameters,
            "rss_hz2": self.rss,
            "residuals_hz": [float(r) for r in self.residuals],
            "derived": self.derived,
            "converged": self.converged,
            "iterations": self.iterations,
            "warnings": list(self.warnings),
            "metadata": self.metadata,
        }


def _reference(cavity: CavityGeometry, f_m: Optional[float]) -> float:
    if f_m is not None:
        return float(f_m)
    if cavity.f_0 is not None:
        return cavity.f_0
    raise InvalidArgumentError("medium resonance frequency f_m required (or set cavity.f_0)")


def _coupling(cavity: CavityGeometry, f_m: float) -> float:
    f0 = cavity.f_0 if cavity.f_0 is not None else f_m
    return f0 * cavity.p_d / cavity.p_tot


def _equation(params: LorentzianParams, cavity: CavityGeometry, f_m: float) -> ResonanceEquation:
    return ResonanceEquation(cavity, MediumModel.single(params.epsilon, params.gamma, f_m))


def predict(
    params: LorentzianParams,
    cavity: CavityGeometry,
    delta_f_e,
    direction: str = "up",
    f_m: Optional[float] = None,
):
    """Lasing detuning of the single-line model at each ``delta_f_e``.

    In the bifurcating regime the branch is the one an ``direction``-sweep
    would be on.
    """
    f_m = _reference(cavity, f_m)
    eq = _equation(params, cavity, f_m)
    u = np.asarray(delta_f_e, dtype=float)
    x = branch_solution(eq, u - params.center_offset, direction)
    out = params.center_offset + x + params.baseline_offset
    return float(out) if out.ndim == 0 else out


def _model(theta, coupling, u, up):
    eps, gamma, centre, baseline = theta
    if eps == 0:
        return u + baseline
    xi = _cubic_branch((u - centre) / gamma, coupling * eps / gamma, up)
    return centre + gamma * xi + baseline


def _model_jacobian(p, coupling, u, up):
    """Exact derivatives of the model by implicit differentiation of G."""
    eps, gamma, centre, baseline = p
    x = _model(p, coupling, u, up) - centre - baseline
    s = x * x + gamma * gamma
    k = coupling * eps
    gx = 1.0 + k * gamma * (gamma * gamma - x * x) / (s * s)
    jac = np.empty((u.size, 4))
    jac[:, 0] = -coupling * gamma * x / s / gx
    jac[:, 1] = -k * x * (x * x - gamma * gamma) / (s * s) / gx
    jac[:, 2] = 1.0 - 1.0 / gx
    jac[:, 3] = 1.0
    return jac


def _check_data(data: MeasurementSeries, kind: str):
    need = MIN_POINTS[kind]
    if len(data) < need:
        raise InvalidArgumentError(f"{kind} fit needs at least {need} points, got {len(data)}")
    if np.ptp(data.delta_f_d) == 0:
        raise FlatDataError("all delta_f_d values are equal")


def initial_guess(data: MeasurementSeries, cavity: CavityGeometry, f_m: Optional[float] = None):
    """Data-driven starting point for the line fit.

    The deviation ``delta_f_d - delta_f_e`` of a single line is an odd
    dispersive shape with extremes at lasing detunings ``+-gamma`` about the
    centre and peak-to-peak ``K eps``.
    """
    f_m = _reference(cavity, f_m)
    coupling = _coupling(cavity, f_m)
    e, d = data.delta_f_e, data.delta_f_d
    dev = d - e
    baseline = float(np.median(dev))
    dev = dev - baseline
    i_max, i_min = int(np.argmax(dev)), int(np.argmin(dev))
    span = float(np.ptp(e))
    gamma = abs(d[i_min] - d[i_max]) / 2.0
    if not gamma > 0:
        gamma = span / 4.0 if span > 0 else 1e6
    gamma = float(np.clip(gamma, *GAMMA_BOUNDS))
    centre = 0.5 * (e[i_max] + e[i_min])
    eps = max(float(dev[i_max] - dev[i_min]), 0.0) / coupling
    eps_cap = EPSILON_MAX_RATIO * 8.0 * gamma / f_m * cavity.p_tot / cavity.p_d
    return LorentzianParams(min(eps, eps_cap), gamma, float(centre), baseline)


def _jacobian(resid, theta, r, diff_step):
    # forward differences of the model, i.e. minus those of the residual
    jac = np.empty((r.size, theta.size))
    for j in range(theta.size):
        h = diff_step * max(abs(theta[j]), 1.0)
        t = theta.copy()
        t[j] += h
        jac[:, j] = (r - resid(t)) / h
    return jac


def fit_lorentzian(
    data: MeasurementSeries,
    cavity: CavityGeometry,
    init: Optional[LorentzianParams] = None,
    direction: Optional[str] = None,
    f_m: Optional[float] = None,
    max_iter: int = 500,
    ftol: float = 1e-10,
    xtol: float = 1e-8,
    diff_step: float = 1e-6,
) -> FitReport:
    """Weighted least-squares fit of the single-line cavity model.

    Levenberg-Marquardt with a forward-difference Jacobian.  Parameters are
    clamped to ``gamma in [1e3, 1e9] Hz`` and ``0 <= eps <= 1e3 eps_th``.
    Raises :class:`ConvergenceError` (carrying the best report so far) when
    ``max_iter`` is exhausted.
    """
    _check_data(data, "lorentzian")
    f_m = _reference(cavity, f_m)
    if direction is None:
        direction = data.metadata.get("sweep_direction", "up")
    if direction not in ("up", "down"):
        raise InvalidArgumentError(f"direction must be 'up' or 'down', got {direction!r}")
    up = direction == "up"
    coupling = _coupling(cavity, f_m)
    eth_per_gamma = 8.0 / f_m * cavity.p_tot / cavity.p_d
    if init is None:
        init = initial_guess(data, cavity, f_m)

    u, y = data.delta_f_e, data.delta_f_d
    sw = np.sqrt(data.weight)
    p0 = init.as_array()
    g0 = max(p0[1], GAMMA_BOUNDS[0])
    scale = np.array([eth_per_gamma * g0, g0, g0, g0])
    origin = np.array([0.0, 0.0, p0[2], p0[3]])
    warnings: list = []

    def to_params(theta):
        return origin + theta * scale

    def clamp(theta):
        p = to_params(theta)
        q = p.copy()
        q[1] = min(max(q[1], GAMMA_BOUNDS[0]), GAMMA_BOUNDS[1])
        q[0] = min(max(q[0], 0.0), EPSILON_MAX_RATIO * eth_per_gamma * q[1])
        if np.any(q != p):
            if "parameter clamped to bounds" not in warnings:
                warnings.append("parameter clamped to bounds")
            return (q - origin) / scale
        return theta

    def resid(theta):
        return sw * (y - _model(to_params(theta), coupling, u, up))

    theta = clamp((p0 - origin) / scale)
    r = resid(theta)
    rss = float(r @ r)
    lam = 1e-3
    converged = rss == 0.0
    it = 0
    while not converged and it < max_iter:
        it += 1
        jac = _jacobian(resid, theta, r, diff_step)
        a = jac.T @ jac
        grad = jac.T @ r
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        improved = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = clamp(theta + step)
            rt = resid(trial)
            rss_t = float(rt @ rt)
            if np.isfinite(rss_t) and rss_t < rss:
                real_step = trial - theta
                rel = (rss - rss_t) / rss
                theta, r, rss = trial, rt, rss_t
                lam = max(lam / 10.0, 1e-12)
                improved = True
                if rel < ftol or np.linalg.norm(real_step) < xtol * max(np.linalg.norm(theta), 1.0) or rss == 0.0:
                    converged = True
                break
            lam *= 10.0
        if not improved:
            # no downhill step at any damping: stationary to working precision
            converged = True

    # Gauss-Newton steps with the exact Jacobian, past the stopping rule, pin
    # the result to the stationary point itself.  Equivalent problems (a
    # duplicated point versus a doubled weight, a shifted axis) then agree to
    # rounding instead of to the stopping tolerance.
    for _ in range(POLISH_STEPS if converged and rss > 0 else 0):
        jac = sw[:, None] * _model_jacobian(to_params(theta), coupling, u, up) * scale
        step = np.linalg.lstsq(jac, r, rcond=None)[0]
        trial = clamp(theta + step)
        rt = resid(trial)
        rss_t = float(rt @ rt)
        # at the minimum rss is flat to rounding, so judge by the step instead
        if not (np.isfinite(rss_t) and rss_t <= rss * (1.0 + 1e-12)):
            break
        theta, r, rss = trial, rt, rss_t
        if np.linalg.norm(step) < 1e-15 * max(np.linalg.norm(theta), 1.0):
            break

    params = LorentzianParams.from_array(to_params(theta))
    residuals = (y - _model(params.as_array(), coupling, u, up))
    report = _lorentzian_report(params, cavity, f_m, direction, residuals, data)
    report.converged = converged
    report.iterations = it
    report.warnings = warnings
    if not converged:
        report.warnings.append(f"no convergence after {max_iter} iterations")
        raise ConvergenceError(f"Levenberg-Marquardt did not converge in {max_iter} iterations", report)
    return report


def _lorentzian_report(params, cavity, f_m, direction, residuals, data) -> FitReport:
    line = ResonanceLine(params.epsilon, params.gamma, f_m)
    eth = epsilon_threshold(cavity, line)
    derived = {"epsilon_threshold": eth, "epsilon_ratio": params.epsilon / eth}
    try:
        derived.update(pf_extrema(cavity, line).as_dict())
    except PullFactorError as exc:  # exactly at threshold
        derived.update({"pf_max": None, "pf_min": 1.0 / 9.0, "bifurcating": True, "note": str(exc)})
    w = data.weight
    return FitReport(
        model_kind="lorentzian",
        parameters=params.as_dict(),
        rss=float(np.sum(w * residuals**2)),
        residuals=np.asarray(residuals, dtype=float),
        derived=derived,
        metadata={
            "free_parameters": "epsilon, gamma, center_offset, baseline_offset (reconstructed set)",
            "sweep_direction": direction,
            "f_m_hz": f_m,
        },
        params=params,
        cavity=cavity,
        f_m=f_m,
        direction=direction,
    )


def fit_polynomial5(data: MeasurementSeries) -> FitReport:
    """Weighted least-squares quintic, solved by QR on abscissae mapped to [-1, 1]."""
    _check_data(data, "polynomial5")
    x, y, w = data.delta_f_e, data.delta_f_d, data.weight
    lo, hi = float(x[0]), float(x[-1])
    if hi == lo:
        raise ConditioningError("all delta_f_e values coincide")
    t = (2.0 * x - (lo + hi)) / (hi - lo)
    sw = np.sqrt(w)
    design = np.vander(t, 6, increasing=True) * sw[:, None]
    q, r = np.linalg.qr(design)
    rd = np.abs(np.diag(r))
    if rd.min() <= 1e-12 * rd.max():
        raise ConditioningError("degree-5 design matrix is rank deficient (too few distinct abscissae)")
    coef = np.linalg.solve(r, q.T @ (sw * y))
    poly = Polynomial(coef, domain=[lo, hi], window=[-1.0, 1.0])
    residuals = y - poly(x)
    deriv = poly.deriv()
    crossings = [
        float(z.real) for z in deriv.roots()
        if abs(z.imag) <= 1e-9 * max(1.0, abs(z.real)) and lo <= z.real <= hi
    ]
    pf_data = deriv(x)
    return FitReport(
        model_kind="polynomial5",
        parameters={
            "coefficients_scaled": [float(c) for c in coef],
            "coefficients_raw_hz": [float(c) for c in poly.convert().coef],
            "domain_hz": [lo, hi],
        },
        rss=float(np.sum(w * residuals**2)),
        residuals=residuals,
        derived={
            "pf_min_on_data": float(pf_data.min()),
            "pf_max_on_data": float(pf_data.max()),
            "pf_zero_crossings_hz": sorted(crossings),
        },
        polynomial=poly,
    )


def local_pf(report: FitReport, delta_f_e: float) -> float:
    """Slope ``d(delta_f_d)/d(delta_f_e)`` of the fitted curve."""
    if not report.converged:
        raise InvalidArgumentError("report did not converge")
    if report.model_kind == "polynomial5":
        return float(report.polynomial.deriv()(delta_f_e))
    p = report.params
    eq = _equation(p, report.cavity, report.f_m)
    x = float(branch_solution(eq, float(delta_f_e) - p.center_offset, report.direction))
    slope = float(eq.slope(x))
    if abs(slope) < JUMP_SLOPE_TOL:
        raise UndefinedDerivativeError(f"local PF undefined at delta_f_e={delta_f_e:.6e} Hz (fold)")
    return 1.0 / slope


def pf_curve(report: FitReport, delta_f_e) -> np.ndarray:
    return np.array([local_pf(report, u) for u in np.asarray(delta_f_e, dtype=float)])


def fit_report_from_params(params, cavity, data, direction="up", f_m=None) -> FitReport:
    """Report for given (not fitted) parameters; handy for forward checks."""
    f_m = _reference(cavity, f_m)
    res = data.delta_f_d - predict(params, cavity, data.delta_f_e, direction, f_m)
    return _lorentzian_report(params, cavity, f_m, direction, res, data)


__all__ = [
    "MeasurementSeries",
    "LorentzianParams",
    "FitReport",
    "predict",
    "initial_guess",
    "fit_lorentzian",
    "fit_polynomial5",
    "local_pf",
    "pf_curve",
    "fit_report_from_params",
]

