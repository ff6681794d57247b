"""Command-line interface: ``pullfactor {scan,extrema,fit,bootstrap,synth}``.

Exit codes: 0 success, 1 other package error, 2 invalid configuration or
input (including flat or rank-deficient data), 3 no lasing solution,
4 fit did not converge, 5 unstable bootstrap.
All frequencies on the wire are in Hz.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .bootstrap import BootstrapConfig, smoothed_bootstrap
from .dispersion import (
    SPEED_OF_LIGHT,
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
    InvalidGeometryError,
    NoSolutionError,
    PullFactorError,
    ThresholdError,
    UnstableBootstrapError,
)
from .fitting import MeasurementSeries, fit_lorentzian, fit_polynomial5
from .solver import ResonanceEquation, sweep

log = logging.getLogger("pullfactor")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NO_SOLUTION = 3
EXIT_NO_CONVERGENCE = 4
EXIT_UNSTABLE = 5

DEFAULTS = {
    "gamma_hz": 6e6,
    "epsilon": None,
    "epsilon_rel": None,
    "fm_hz": SPEED_OF_LIGHT / 795e-9,
    "f0_hz": None,
    "p_tot_m": 0.80,
    "p_d_m": 0.022,
    "from_hz": None,
    "to_hz": None,
    "points": None,
    "direction": "up",
    "seed": 0,
    "out": "-",
    "radius_hz": None,
    "spacing": "detuning",
    "noise_hz": 0.0,
    "center_hz": 0.0,
    "baseline_hz": 0.0,
    "model": "lorentzian",
    "replicates": 1000,
    "confidence": 0.90,
    "bandwidth_hz": "auto",
    "workers": 1,
}
POINTS_DEFAULT = {"scan": 1001, "synth": 200}
FLOAT_KEYS = {
    "gamma_hz", "epsilon", "epsilon_rel", "fm_hz", "f0_hz", "p_tot_m", "p_d_m",
    "from_hz", "to_hz", "radius_hz", "noise_hz", "center_hz", "baseline_hz", "confidence",
}
INT_KEYS = {"points", "seed", "replicates", "workers"}


class ConfigError(InvalidArgumentError):
    pass


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys may use dashes."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        out[key] = value.strip("\"'")
    return out


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            v = float(value)
            if not math.isfinite(v):
                raise ConfigError(f"{key} must be finite")
            return v
        if key == "bandwidth_hz":
            return "auto" if value == "auto" else float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    if cfg["points"] is None:
        cfg["points"] = POINTS_DEFAULT.get(args.command, 1001)
    if cfg["direction"] not in ("up", "down"):
        raise ConfigError("direction must be 'up' or 'down'")
    if cfg["epsilon"] is not None and cfg["epsilon_rel"] is not None:
        raise ConfigError("give either --epsilon or --epsilon-rel, not both")
    if cfg["from_hz"] is None:
        cfg["from_hz"] = -10.0 * cfg["gamma_hz"]
    if cfg["to_hz"] is None:
        cfg["to_hz"] = 10.0 * cfg["gamma_hz"]
    cfg["command"] = args.command
    if getattr(args, "input", None) is not None:
        cfg["input"] = str(args.input)
    return cfg


def build_geometry(cfg):
    cavity = CavityGeometry.from_total(cfg["p_tot_m"], cfg["p_d_m"], cfg["f0_hz"])
    probe = ResonanceLine(1.0, cfg["gamma_hz"], cfg["fm_hz"])
    eth = epsilon_threshold(cavity, probe)
    if cfg["epsilon"] is not None:
        eps = cfg["epsilon"]
    elif cfg["epsilon_rel"] is not None:
        eps = cfg["epsilon_rel"] * eth
    else:
        eps = 0.5 * eth
    line = ResonanceLine(eps, cfg["gamma_hz"], cfg["fm_hz"])
    return cavity, line, eth


def _mhz(x):
    return f"{x / 1e6:.4g} MHz"


def _sidecar(out):
    return None if out in (None, "-") else str(out) + ".meta.json"


def cmd_scan(cfg) -> int:
    cavity, line, eth = build_geometry(cfg)
    eq = ResonanceEquation(cavity, MediumModel((line,)))
    curve = sweep(eq, cfg["from_hz"], cfg["to_hz"], cfg["points"], cfg["direction"],
                  cfg["radius_hz"], spacing=cfg["spacing"])
    prov = pio.provenance("scan", cfg)
    pio.write_text(cfg["out"], pio.curve_to_csv(curve, prov))
    meta = {
        "provenance": prov,
        "geometry": {"p_e_m": cavity.p_e, "p_d_m": cavity.p_d, "p_tot_m": cavity.p_tot,
                     "f0_hz": cavity.reference_frequency(eq.medium), "coupling_hz": eq.coupling},
        "line": {"epsilon": line.epsilon, "gamma_hz": line.gamma, "f_m_hz": line.f_m},
        "epsilon_threshold": eth,
        "epsilon_ratio": line.epsilon / eth,
        "direction": curve.direction,
        "jumps": [j._asdict() for j in curve.jumps],
        "policy": curve.policy,
    }
    side = _sidecar(cfg["out"])
    if side:
        pio.write_json(side, meta)
    log.info("scan: %d points, %d jump(s), max pf %.4g", len(curve), len(curve.jumps), float(np.max(curve.pf)))
    return EXIT_OK


def cmd_extrema(cfg) -> int:
    cavity, line, eth = build_geometry(cfg)
    ext = pf_extrema(cavity, line)
    record = {
        "pf_max": ext.pf_max,
        "pf_min": ext.pf_min,
        "bifurcating": ext.bifurcating,
        "epsilon": line.epsilon,
        "epsilon_threshold": eth,
        "epsilon_ratio": ext.epsilon_ratio,
        "detuning_at_max_hz": ext.detuning_at_max,
        "detuning_at_min_hz": ext.detuning_at_min,
        "provenance": pio.provenance("extrema", cfg),
    }
    pio.write_json(cfg["out"], record)
    log.info("extrema: pf_max=%s pf_min=%.4g at +-%s", ext.pf_max, ext.pf_min, _mhz(ext.detuning_at_max))
    return EXIT_OK


def _load(cfg) -> MeasurementSeries:
    data = pio.read_measurements(cfg["input"])
    data.metadata["sweep_direction"] = cfg["direction"]
    return data


def _fit(cfg, data):
    cavity, _, _ = build_geometry(cfg)
    if cfg["model"] == "polynomial5":
        return fit_polynomial5(data), cavity
    if cfg["model"] != "lorentzian":
        raise ConfigError(f"unknown model {cfg['model']!r}")
    return fit_lorentzian(data, cavity, direction=cfg["direction"], f_m=cfg["fm_hz"]), cavity


def cmd_fit(cfg) -> int:
    data = _load(cfg)
    prov = pio.provenance("fit", cfg)
    try:
        report, _ = _fit(cfg, data)
    except ConvergenceError as exc:
        out = exc.report.to_dict() if exc.report is not None else {}
        out["warning"] = str(exc)
        out["provenance"] = prov
        pio.write_json(cfg["out"], out)
        raise
    out = report.to_dict()
    out["provenance"] = prov
    pio.write_json(cfg["out"], out)
    log.info("fit: %s rss=%.4g Hz^2", report.model_kind, report.rss)
    return EXIT_OK


def cmd_bootstrap(cfg) -> int:
    data = _load(cfg)
    if cfg["model"] != "lorentzian":
        raise ConfigError("bootstrap supports the lorentzian model only")
    base, cavity = _fit(cfg, data)
    bcfg = BootstrapConfig(
        replicates=cfg["replicates"],
        confidence=cfg["confidence"],
        kernel_bandwidth=cfg["bandwidth_hz"],
        seed=cfg["seed"],
        workers=cfg["workers"],
    )
    prov = pio.provenance("bootstrap", cfg)
    try:
        report = smoothed_bootstrap(data, cavity, base, bcfg)
    except UnstableBootstrapError as exc:
        out = exc.report.to_dict() if exc.report is not None else {}
        out["error"] = str(exc)
        out["base_fit"] = base.to_dict()
        out["provenance"] = prov
        pio.write_json(cfg["out"], out)
        raise
    out = report.to_dict()
    out["base_fit"] = base.to_dict()
    out["provenance"] = prov
    pio.write_json(cfg["out"], out)
    iv = report.intervals["pf_max"]
    log.info("bootstrap: pf_max %.4g..%.4g (%d/%d replicates)", iv.lower, iv.upper,
             report.success_count, report.replicates)
    return EXIT_OK


def synthesize(cfg):
    """Forward model plus seeded Gaussian noise; returns (series, noiseless)."""
    cavity, line, _ = build_geometry(cfg)
    eq = ResonanceEquation(cavity, MediumModel((line,)))
    c, b = cfg["center_hz"], cfg["baseline_hz"]
    curve = sweep(eq, cfg["from_hz"] - c, cfg["to_hz"] - c, cfg["points"], cfg["direction"], cfg["radius_hz"])
    clean = c + curve.delta_f_d + b
    rng = np.random.default_rng(cfg["seed"])
    noisy = clean + rng.normal(0.0, cfg["noise_hz"], clean.size) if cfg["noise_hz"] > 0 else clean.copy()
    series = MeasurementSeries(c + curve.delta_f_e, noisy, metadata={"sweep_direction": cfg["direction"]})
    return series, clean


def cmd_synth(cfg) -> int:
    if cfg["noise_hz"] < 0:
        raise ConfigError("noise_hz must be >= 0")
    series, _ = synthesize(cfg)
    pio.write_measurements(cfg["out"], series, pio.provenance("synth", cfg))
    log.info("synth: %d points, noise %s", len(series), _mhz(cfg["noise_hz"]))
    return EXIT_OK


COMMANDS = {
    "scan": cmd_scan,
    "extrema": cmd_extrema,
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("model and geometry")
    g.add_argument("--gamma-hz", type=float, help="resonance half-width (default 6e6)")
    eps = g.add_mutually_exclusive_group()
    eps.add_argument("--epsilon", type=float, help="absolute resonance strength")
    eps.add_argument("--epsilon-rel", type=float, help="resonance strength in units of eps_th (default 0.5)")
    g.add_argument("--fm-hz", type=float, help="medium resonance frequency (default c/795nm)")
    g.add_argument("--f0-hz", type=float, help="cavity reference frequency (default: f_m)")
    g.add_argument("--p-tot-m", type=float, help="round-trip path (default 0.80)")
    g.add_argument("--p-d-m", type=float, help="dispersive path (default 0.022)")
    s = shared.add_argument_group("scan")
    s.add_argument("--from-hz", type=float, help="sweep start (default -10 gamma)")
    s.add_argument("--to-hz", type=float, help="sweep stop (default +10 gamma)")
    s.add_argument("--points", type=int)
    s.add_argument("--direction", choices=("up", "down"))
    s.add_argument("--radius-hz", type=float, help="continuation radius (default 3 gamma)")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out", help="output path ('-' for stdout)")
    shared.add_argument("--config", help="key = value config file; flags override it")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pullfactor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_scan = sub.add_parser("scan", parents=[shared], help="sweep the empty-cavity detuning")
    p_scan.add_argument("--spacing", choices=("detuning", "lasing"),
                        help="uniform in empty-cavity (default) or lasing detuning")
    sub.add_parser("extrema", parents=[shared], help="analytic PF extrema and threshold")
    p_fit = sub.add_parser("fit", parents=[shared], help="fit a measurement CSV")
    p_boot = sub.add_parser("bootstrap", parents=[shared], help="smoothed-bootstrap intervals")
    for p in (p_fit, p_boot):
        p.add_argument("input", help="CSV with delta_f_e_hz,delta_f_d_hz[,weight]")
        p.add_argument("--model", choices=("lorentzian", "polynomial5"))
    p_boot.add_argument("--replicates", type=int)
    p_boot.add_argument("--confidence", type=float)
    p_boot.add_argument("--bandwidth-hz", help="kernel bandwidth or 'auto'")
    p_boot.add_argument("--workers", type=int)
    p_syn = sub.add_parser("synth", parents=[shared], help="generate synthetic measurements")
    p_syn.add_argument("--noise-hz", type=float, help="Gaussian noise sigma on delta_f_d")
    p_syn.add_argument("--center-hz", type=float)
    p_syn.add_argument("--baseline-hz", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except NoSolutionError as exc:
        log.error("%s", exc)
        return EXIT_NO_SOLUTION
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_NO_CONVERGENCE
    except UnstableBootstrapError as exc:
        log.error("%s", exc)
        return EXIT_UNSTABLE
    except (InvalidArgumentError, InvalidGeometryError, ThresholdError, FlatDataError, ConditioningError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except PullFactorError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
