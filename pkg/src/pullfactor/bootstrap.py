"""Smoothed residual bootstrap for fitted pulling-factor quantities.

Each replicate resamples the fit residuals with replacement, jitters them
with Gaussian kernel noise, rebuilds a synthetic curve on top of the fitted
one and refits it.  Intervals are plain percentile intervals over the
replicates that converged.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dispersion import CavityGeometry
from .errors import InvalidArgumentError, PullFactorError, UnstableBootstrapError
from .fitting import FitReport, MeasurementSeries, fit_lorentzian, predict

QUANTITIES = ("pf_max", "pf_min", "epsilon", "gamma")
METHOD = (
    "residual bootstrap with Gaussian kernel smoothing (Silverman bandwidth), "
    "variance-shrunk; percentile intervals"
)


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    confidence: float = 0.90
    kernel_bandwidth: Union[str, float] = "auto"
    seed: int = 0
    shrink: bool = True
    max_failure_fraction: float = 0.20
    workers: int = 1

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 50:
            raise InvalidArgumentError("replicates must be an integer >= 50")
        if not 0.5 < self.confidence < 0.999:
            raise InvalidArgumentError("confidence must lie in (0.5, 0.999)")
        if self.kernel_bandwidth != "auto":
            bw = float(self.kernel_bandwidth)
            if not (math.isfinite(bw) and bw >= 0):
                raise InvalidArgumentError("kernel_bandwidth must be 'auto' or a finite value >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")

    def as_dict(self):
        return {
            "replicates": self.replicates,
            "confidence": self.confidence,
            "kernel_bandwidth": self.kernel_bandwidth,
            "seed": self.seed,
            "shrink": self.shrink,
            "max_failure_fraction": self.max_failure_fraction,
        }


@dataclass(frozen=True)
class Interval:
    lower: float
    point: float
    upper: float

    def as_dict(self):
        return {"lower": self.lower, "point": self.point, "upper": self.upper}


@dataclass
class BootstrapReport:
    """Percentile intervals; ``point`` is the replicate median and
    ``estimates`` holds the values of the base fit."""

    intervals: dict
    estimates: dict
    samples: dict
    replicates: int
    success_count: int
    bifurcation_fraction: float
    confidence: float
    bandwidth: float
    config: dict = field(default_factory=dict)
    method: str = METHOD

    def intervals_at(self, confidence: float) -> dict:
        return _intervals(self.samples, confidence)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "confidence": self.confidence,
            "intervals": {k: v.as_dict() for k, v in self.intervals.items()},
            "estimates": self.estimates,
            "replicates": self.replicates,
            "replicate_success_count": self.success_count,
            "bifurcation_fraction": self.bifurcation_fraction,
            "kernel_bandwidth_hz": self.bandwidth,
            "config": self.config,
            "pf_max_lower_bound": pf_max_lower_bound(self).as_dict() if self.success_count else None,
        }


@dataclass(frozen=True)
class LowerBound:
    value: float
    confidence: float
    upper_unbounded: bool
    bifurcating_only: bool

    def as_dict(self):
        return {
            "value": self.value,
            "confidence": self.confidence,
            "upper_unbounded": self.upper_unbounded,
            "bifurcating_only": self.bifurcating_only,
        }


def _quantile(values, q: float) -> float:
    """Linear-interpolation quantile that tolerates ``+inf`` entries."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return math.nan
    pos = (v.size - 1) * q
    i = int(math.floor(pos))
    frac = pos - i
    if frac == 0 or i + 1 >= v.size:
        return float(v[i])
    lo, hi = v[i], v[i + 1]
    if math.isinf(hi):
        return math.inf
    return float(lo + frac * (hi - lo))


def _intervals(samples: dict, confidence: float) -> dict:
    tail = (1.0 - confidence) / 2.0
    return {
        name: Interval(_quantile(vals, tail), _quantile(vals, 0.5), _quantile(vals, 1.0 - tail))
        for name, vals in samples.items()
    }


def silverman_bandwidth(residuals) -> float:
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        return 0.0
    return 1.06 * float(np.std(r, ddof=1)) * r.size ** (-0.2)


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    # child k depends only on (seed, k), never on execution order
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(index,))))


def _derived_values(report: FitReport):
    d = report.derived
    pf_max = math.inf if d["bifurcating"] else d["pf_max"]
    return pf_max, d["pf_min"], report.params.epsilon, report.params.gamma, bool(d["bifurcating"])


def _run_replicate(args):
    k, data, cavity, base, fitted, resid, mean, bw, sigma, cfg = args
    rng = _replicate_rng(cfg.seed, k)
    n = resid.size
    idx = rng.integers(0, n, size=n)
    noise = rng.standard_normal(n) * bw
    draw = resid[idx] - mean + noise
    if cfg.shrink and sigma > 0:
        draw = draw / math.sqrt(1.0 + (bw / sigma) ** 2)
    synthetic = data.with_delta_f_d(fitted + mean + draw)
    try:
        rep = fit_lorentzian(synthetic, cavity, init=base.params, direction=base.direction, f_m=base.f_m)
    except PullFactorError:
        return None
    return _derived_values(rep)


def smoothed_bootstrap(
    data: MeasurementSeries,
    cavity: CavityGeometry,
    base: FitReport,
    cfg: Optional[BootstrapConfig] = None,
) -> BootstrapReport:
    """Confidence intervals for pf_max, pf_min, epsilon and gamma.

    Replicates are seeded independently (seed, index), so the result does
    not depend on ``cfg.workers``.  Raises :class:`UnstableBootstrapError`
    with the partial report if more than ``max_failure_fraction`` of the
    refits fail.
    """
    cfg = cfg or BootstrapConfig()
    if base.model_kind != "lorentzian":
        raise InvalidArgumentError("bootstrap needs a lorentzian fit report")
    if not base.converged:
        raise InvalidArgumentError("base fit did not converge")
    fitted = predict(base.params, cavity, data.delta_f_e, base.direction, base.f_m)
    resid = data.delta_f_d - fitted
    mean = float(np.mean(resid))
    sigma = float(np.std(resid, ddof=1)) if resid.size > 1 else 0.0
    bw = silverman_bandwidth(resid) if cfg.kernel_bandwidth == "auto" else float(cfg.kernel_bandwidth)

    jobs = [(k, data, cavity, base, fitted, resid, mean, bw, sigma, cfg) for k in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_replicate, jobs, chunksize=16))
    else:
        results = [_run_replicate(job) for job in jobs]

    ok = [r for r in results if r is not None]
    samples = {name: np.array([r[i] for r in ok], dtype=float) for i, name in enumerate(QUANTITIES)}
    bif = float(np.mean([r[4] for r in ok])) if ok else math.nan
    est = _derived_values(base)
    report = BootstrapReport(
        intervals=_intervals(samples, cfg.confidence) if ok else {},
        estimates=dict(zip(QUANTITIES, est[:4])),
        samples=samples,
        replicates=cfg.replicates,
        success_count=len(ok),
        bifurcation_fraction=bif,
        confidence=cfg.confidence,
        bandwidth=bw,
        config=cfg.as_dict(),
    )
    failed = cfg.replicates - len(ok)
    if failed > cfg.max_failure_fraction * cfg.replicates:
        raise UnstableBootstrapError(
            f"{failed} of {cfg.replicates} replicate fits failed", report
        )
    return report


def pf_max_lower_bound(report: BootstrapReport) -> LowerBound:
    """One-sided lower bound on pf_max at the report's confidence.

    Bifurcating replicates count as ``pf_max = inf``.  When more than
    ``1 - confidence`` of them bifurcate the upper bound is unbounded; when
    the percentile itself lands among them the smallest finite replicate
    is reported instead (``inf`` if there is none).
    """
    vals = report.samples["pf_max"]
    conf = report.confidence
    value = _quantile(vals, 1.0 - conf)
    bif_only = False
    if math.isinf(value):
        bif_only = True
        finite = vals[np.isfinite(vals)]
        value = float(finite.min()) if finite.size else math.inf
    return LowerBound(
        value=value,
        confidence=conf,
        upper_unbounded=bool(report.bifurcation_fraction > 1.0 - conf),
        bifurcating_only=bif_only,
    )
