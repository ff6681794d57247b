"""Lasing-resonance solver: roots, folds and branch-following sweeps.

The dispersive round-trip condition, differenced against the empty cavity
and linearised in ``n - 1``, reads

    G(x) = x + K (n(x) - 1) = u,

where ``x`` is the lasing detuning, ``u`` the empty-cavity detuning and
``K = f_0 p_d / p_tot``.  The local pulling factor is ``1 / G'(x)``.
Above threshold ``G`` is not monotone and one ``u`` can admit three
lasing frequencies; sweeps then follow a branch and jump at the folds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .dispersion import (
    CavityGeometry,
    MediumModel,
    PullingFigure,
    index_derivative,
    index_excess,
    pulling_factor,
)
from .errors import InvalidArgumentError, NoSolutionError

GRID_POINTS = 2048
ROOT_TOL = 1e-6  # residual bound, in units of the dominant gamma
FOLD_TOL = 1e-9  # |G'| band treated as a degenerate (touching) fold
DEFAULT_RADIUS = 3.0  # continuation radius, in units of the dominant gamma


@dataclass(frozen=True)
class ResonanceEquation:
    """``G(x) = x + K (n(x) - 1)`` for a given cavity and medium."""

    cavity: CavityGeometry
    medium: MediumModel

    @cached_property
    def coupling(self) -> float:
        return self.cavity.coupling(self.medium)

    @property
    def gamma(self) -> float:
        return self.medium.dominant.gamma

    @property
    def line_centres(self) -> np.ndarray:
        return np.array([-o for o in self.medium._offsets])

    @cached_property
    def _terms(self):
        return [
            (float(c), line.gamma, self.coupling * line.epsilon * line.gamma)
            for c, line in zip(self.line_centres, self.medium.lines)
            if line.epsilon != 0
        ]

    def residual(self, x):
        """``G(x)`` (Hz)."""
        out = x
        for c, g, k in self._terms:
            d = x - c
            out = out + k * d / (d * d + g * g)
        return out

    def slope(self, x):
        """``G'(x)``, the inverse of the local pulling factor."""
        out = 1.0 if np.ndim(x) == 0 else np.ones(np.shape(x))
        for c, g, k in self._terms:
            d2 = (x - c) ** 2
            s = d2 + g * g
            out = out + k * (g * g - d2) / (s * s)
        return out

    @cached_property
    def max_shift(self) -> float:
        """Upper bound on ``|G(x) - x|``: each line contributes at most ``eps/2``."""
        return self.coupling * sum(abs(line.epsilon) for line in self.medium.lines) / 2.0

    @cached_property
    def critical_points(self) -> np.ndarray:
        """All zeros of ``G'``, sorted.  Includes touching (degenerate) zeros."""
        if self.medium.is_empty:
            return np.empty(0)
        if self.medium.is_single_line:
            return _single_line_critical(self)[0]
        return _numeric_critical(self)

    @cached_property
    def folds(self) -> np.ndarray:
        """Zeros of ``G'`` where the slope actually changes sign."""
        crit = self.critical_points
        if crit.size == 0:
            return crit
        if self.medium.is_single_line:
            return _single_line_critical(self)[1]
        g = self.gamma
        left = self.slope(crit - 1e-7 * g)
        right = self.slope(crit + 1e-7 * g)
        return crit[np.sign(left) != np.sign(right)]


def _single_line_critical(eq: ResonanceEquation):
    """Closed-form zeros of ``G'`` for one line, as (critical, folds).

    With ``v = ((x - c)/gamma)**2`` and ``a = K eps / gamma``,
    ``G' = Q(v) / (1 + v)**2`` where ``Q(v) = v**2 + (2 - a) v + 1 + a``.
    """
    line = eq.medium.lines[0]
    c = float(eq.line_centres[0])
    g = line.gamma
    a = eq.coupling * line.epsilon / g
    v_min = (a - 2.0) / 2.0
    slope_min = None
    if v_min >= 0:
        slope_min = (v_min * v_min + (2.0 - a) * v_min + 1.0 + a) / (1.0 + v_min) ** 2
        if abs(slope_min) < FOLD_TOL:
            x = g * math.sqrt(v_min)
            return np.array([c - x, c + x]), np.empty(0)
    disc = a * a - 8.0 * a
    if disc < 0:
        return np.empty(0), np.empty(0)
    sq = math.sqrt(disc)
    pts = []
    for v in ((a - 2.0 - sq) / 2.0, (a - 2.0 + sq) / 2.0):
        if v >= 0:
            x = g * math.sqrt(v)
            pts.extend([c - x, c + x])
    pts = np.unique(np.array(pts, dtype=float))
    return pts, pts


def _numeric_critical(eq: ResonanceEquation) -> np.ndarray:
    # |K n'| <= sum K|eps_i| gamma_i / (d_i^2 + gamma_i^2), so G' > 0 once every
    # line is farther than sqrt(2 S) away.
    s = sum(eq.coupling * abs(line.epsilon) * line.gamma for line in eq.medium.lines)
    reach = math.sqrt(2.0 * s)
    grids = []
    for centre, line in zip(eq.line_centres, eq.medium.lines):
        half = reach + 5.0 * line.gamma
        grids.append(np.linspace(centre - half, centre + half, 20001))
    grid = np.unique(np.concatenate(grids))
    d = eq.slope(grid)
    out = list(grid[d == 0.0])
    idx = np.nonzero(d[:-1] * d[1:] < 0)[0]
    if idx.size:
        out.extend(_bisect(eq.slope, grid[idx], grid[idx + 1], np.zeros(idx.size), 1e-12 * eq.gamma))
    return np.unique(np.array(out, dtype=float))


def _bisect(f, a, b, target, xtol, ftol=None, maxiter=200):
    """Vectorised bisection of ``f(x) = target`` on brackets ``[a, b]``.

    Stops per bracket once it is narrower than ``xtol`` or, if ``ftol`` is
    given, once the midpoint residual is below ``ftol``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    fa = f(a) - target
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        if np.all(b - a <= xtol):
            break
        fm = f(m) - target
        if ftol is not None:
            hit = np.abs(fm) < ftol
            if np.any(hit):
                a = np.where(hit, m, a)
                b = np.where(hit, m, b)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def _bisect_scalar(f, a, b, target, xtol, ftol):
    """Plain-float bisection for the handful of brackets a root solve produces."""
    fa = f(a) - target
    m = 0.5 * (a + b)
    for _ in range(200):
        m = 0.5 * (a + b)
        if b - a <= xtol:
            break
        fm = f(m) - target
        if abs(fm) < ftol:
            break
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return m


def _polish(eq: ResonanceEquation, x, u, lo, hi):
    """One safeguarded Newton step: kept only if it stays in the bracket
    and lowers the residual."""
    r = eq.residual(x) - u
    d = eq.slope(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = x - r / d
    ok = np.isfinite(xn) & (xn >= lo) & (xn <= hi)
    xn = np.where(ok, xn, x)
    rn = eq.residual(xn) - u
    return np.where(np.abs(rn) < np.abs(r), xn, x)


def solve_all_roots(
    eq: ResonanceEquation,
    delta_f_e: float,
    window: Optional[float] = None,
    centre: Optional[float] = None,
) -> List[float]:
    """All lasing detunings ``x`` with ``G(x) = delta_f_e``, ascending.

    By default the search interval is ``delta_f_e +- (max_shift + gamma)``,
    which provably holds every root.  Passing ``window`` (full width, Hz)
    restricts the search to ``centre +- window/2``; ``centre`` defaults to
    the dominant line.

    The interval is sampled on a uniform grid with the critical points of
    ``G`` inserted, so each cell is monotone and sign changes find every
    simple root.  Brackets are bisected and then Newton-polished.
    """
    u = float(delta_f_e)
    if not math.isfinite(u):
        raise InvalidArgumentError("delta_f_e must be finite")
    if eq.medium.is_empty:
        if window is not None:
            c = _default_centre(eq) if centre is None else centre
            if abs(u - c) > window / 2:
                raise NoSolutionError(f"no lasing solution within window around {c:.6e} Hz")
        return [u]
    g = eq.gamma
    tol = ROOT_TOL * g
    if window is None:
        half = eq.max_shift + g
        lo, hi = u - half, u + half
    else:
        if not window > 0:
            raise InvalidArgumentError("window must be > 0")
        c = _default_centre(eq) if centre is None else float(centre)
        lo, hi = c - window / 2.0, c + window / 2.0

    crit = eq.critical_points
    crit = crit[(crit > lo) & (crit < hi)]
    grid = np.unique(np.concatenate([np.linspace(lo, hi, GRID_POINTS), crit]))
    h = eq.residual(grid) - u

    roots = list(grid[h == 0.0])
    # touching roots sit on critical points without a sign change
    if crit.size:
        hc = eq.residual(crit) - u
        roots.extend(crit[np.abs(hc) < tol])
    idx = np.nonzero(h[:-1] * h[1:] < 0)[0]
    if idx.size:
        a, b = grid[idx], grid[idx + 1]
        x = np.array([
            _bisect_scalar(eq.residual, float(lo_), float(hi_), u, tol, tol)
            for lo_, hi_ in zip(a, b)
        ])
        x = _polish(eq, x, u, a, b)
        roots.extend(x)
    if not roots:
        raise NoSolutionError(
            f"no lasing solution for delta_f_e={u:.6e} Hz in [{lo:.6e}, {hi:.6e}] Hz"
        )
    roots = np.sort(np.array(roots, dtype=float))
    keep = np.concatenate([[True], np.diff(roots) > tol])
    return [float(r) for r in roots[keep]]


def _default_centre(eq: ResonanceEquation) -> float:
    i = eq.medium.lines.index(eq.medium.dominant)
    return float(eq.line_centres[i])


class FoldPoint(NamedTuple):
    delta_f_d: float
    delta_f_e: float
    degenerate: bool = False


def fold_points(eq: ResonanceEquation) -> List[FoldPoint]:
    """Turning points of the response curve (``G'(x) = 0``) of a single line.

    Above threshold there are two fold magnitudes, each appearing at
    ``+-`` about the line centre.  Exactly at threshold the pair coalesces
    at ``+-sqrt(3) gamma``; those touching points are returned flagged
    ``degenerate``.  Below threshold the list is empty.
    """
    if not eq.medium.is_single_line:
        raise InvalidArgumentError("fold_points needs a single-line medium")
    crit = eq.critical_points
    true_folds = set(eq.folds.tolist())
    return [
        FoldPoint(float(x), float(eq.residual(x)), float(x) not in true_folds)
        for x in crit
    ]


class Jump(NamedTuple):
    delta_f_e: float
    from_branch: int
    to_branch: int
    from_delta_f_d: float
    to_delta_f_d: float


@dataclass(frozen=True)
class ResponseCurve:
    delta_f_e: np.ndarray
    delta_f_d: np.ndarray
    pf: np.ndarray
    branch_id: np.ndarray
    jumps: tuple
    direction: str
    policy: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.delta_f_e)

    def rows(self):
        for e, d, p, b in zip(self.delta_f_e, self.delta_f_d, self.pf, self.branch_id):
            yield float(e), float(d), float(p), int(b)


def _check_direction(direction):
    if direction not in ("up", "down"):
        raise InvalidArgumentError(f"direction must be 'up' or 'down', got {direction!r}")


def follow_branch(
    eq: ResonanceEquation,
    targets: Sequence[float],
    direction: str = "up",
    radius: Optional[float] = None,
) -> ResponseCurve:
    """Track the lasing detuning along monotone empty-cavity detunings.

    At each step the stable root (``G' > 0``) nearest the previous lasing
    detuning is kept if it lies within ``radius`` and on the same side of
    every fold.  Otherwise the branch is gone and the laser jumps to the
    nearest stable root in the sweep direction.
    """
    _check_direction(direction)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1 or targets.size < 1:
        raise InvalidArgumentError("targets must be a non-empty 1-D sequence")
    steps = np.diff(targets)
    if direction == "up" and np.any(steps <= 0) or direction == "down" and np.any(steps >= 0):
        raise InvalidArgumentError(f"targets must be strictly monotone for a {direction}-sweep")
    g = eq.gamma
    radius = DEFAULT_RADIUS * g if radius is None else float(radius)
    folds = eq.folds
    sign = 1.0 if direction == "up" else -1.0

    xs = np.empty(targets.size)
    branch = np.empty(targets.size, dtype=int)
    jumps = []
    current = 0
    prev = None
    for k, u in enumerate(targets):
        roots = np.array(solve_all_roots(eq, u))
        stable = roots[eq.slope(roots) > -FOLD_TOL]
        if stable.size == 0:
            stable = roots
        if prev is None:
            x = stable[0] if direction == "up" else stable[-1]
        else:
            near = stable[np.argmin(np.abs(stable - prev))]
            lo, hi = min(prev, near), max(prev, near)
            crosses = np.any((folds > lo) & (folds < hi))
            if abs(near - prev) <= radius and not crosses:
                x = near
            else:
                ahead = stable[sign * (stable - prev) > 0]
                x = ahead[np.argmin(np.abs(ahead - prev))] if ahead.size else near
                jumps.append(Jump(float(u), current, current + 1, float(prev), float(x)))
                current += 1
        xs[k] = x
        branch[k] = current
        prev = x

    with np.errstate(divide="ignore"):
        pf = 1.0 / eq.slope(xs)
    return ResponseCurve(
        delta_f_e=targets.copy(),
        delta_f_d=xs,
        pf=np.asarray(pf, dtype=float),
        branch_id=branch,
        jumps=tuple(jumps),
        direction=direction,
        policy={
            "branch_selection": "nearest stable root; jump to nearest stable root in sweep direction",
            "continuation_radius_hz": radius,
            "spacing": "detuning",
        },
    )


def sweep(
    eq: ResonanceEquation,
    start: float,
    stop: float,
    n_points: int,
    direction: Optional[str] = None,
    radius: Optional[float] = None,
    spacing: str = "detuning",
) -> ResponseCurve:
    """Sweep the empty-cavity detuning from ``start`` to ``stop``.

    ``direction`` defaults to the ordering of ``start`` and ``stop``; if it
    is given the sweep is traversed in that direction over the same range.

    ``spacing="detuning"`` samples ``n_points`` uniformly in the
    empty-cavity detuning and follows the branch by continuation.
    ``spacing="lasing"`` samples uniformly in the lasing detuning instead,
    which resolves near-vertical stretches of the curve; the visited
    branches are the same but fewer than ``n_points`` samples survive when
    the sweep jumps.
    """
    if n_points < 2:
        raise InvalidArgumentError("n_points must be >= 2")
    if start == stop:
        raise InvalidArgumentError("start and stop must differ")
    if direction is None:
        direction = "up" if stop > start else "down"
    _check_direction(direction)
    lo, hi = sorted((float(start), float(stop)))
    if spacing == "lasing":
        return _sweep_lasing(eq, lo, hi, int(n_points), direction)
    if spacing != "detuning":
        raise InvalidArgumentError(f"spacing must be 'detuning' or 'lasing', got {spacing!r}")
    targets = np.linspace(lo, hi, int(n_points))
    if direction == "down":
        targets = targets[::-1]
    return follow_branch(eq, targets, direction, radius)


def _sweep_lasing(eq: ResonanceEquation, lo: float, hi: float, n_points: int, direction: str):
    # An up-sweep visits x exactly where G(x) exceeds every G seen at smaller x
    # (the running maximum); a down-sweep mirrors this with the running minimum.
    first = solve_all_roots(eq, lo)
    last = solve_all_roots(eq, hi)
    xs = np.linspace(first[0], last[-1], n_points)
    if direction == "down":
        xs = xs[::-1]
    us = eq.residual(xs)
    if direction == "up":
        keep = (us > np.concatenate([[-np.inf], np.maximum.accumulate(us)[:-1]])) & (us <= hi + ROOT_TOL * eq.gamma)
    else:
        keep = (us < np.concatenate([[np.inf], np.minimum.accumulate(us)[:-1]])) & (us >= lo - ROOT_TOL * eq.gamma)
    idx = np.nonzero(keep)[0]
    branch = np.zeros(idx.size, dtype=int)
    jumps = []
    gaps = np.nonzero(np.diff(idx) > 1)[0]
    for j in gaps:
        k = j + 1
        jumps.append(Jump(float(us[idx[k]]), len(jumps), len(jumps) + 1, float(xs[idx[j]]), float(xs[idx[k]])))
        branch[k:] += 1
    x = xs[idx]
    with np.errstate(divide="ignore"):
        pf = 1.0 / eq.slope(x)
    return ResponseCurve(
        delta_f_e=us[idx],
        delta_f_d=x,
        pf=np.asarray(pf, dtype=float),
        branch_id=branch,
        jumps=tuple(jumps),
        direction=direction,
        policy={
            "branch_selection": "running extremum of G along the lasing detuning (equivalent to sweep continuation)",
            "spacing": "lasing",
        },
    )


def pf_profile(eq: ResonanceEquation, detunings: Sequence[float]) -> List[PullingFigure]:
    """Pulling factor at each lasing detuning."""
    return [pulling_factor(eq.cavity, eq.medium, d) for d in detunings]


def branch_solution(eq: ResonanceEquation, delta_f_e, direction: str = "up") -> np.ndarray:
    """Vectorised lasing detuning on the sweep branch, single line only.

    For one line ``G(x) = u`` is the cubic
    ``xi**3 - v xi**2 + (1 + a) xi - v = 0`` in ``xi = (x - c)/gamma``,
    ``v = (u - c)/gamma``, ``a = K eps/gamma``.  An up-sweep from below
    sits on the smallest real root, a down-sweep on the largest, which is
    what :func:`follow_branch` produces for a single line.
    """
    _check_direction(direction)
    if not eq.medium.is_single_line:
        raise InvalidArgumentError("branch_solution needs a single-line medium")
    line = eq.medium.lines[0]
    c = float(eq.line_centres[0])
    g = line.gamma
    u = np.asarray(delta_f_e, dtype=float)
    if line.epsilon == 0:
        return u.copy()
    a = eq.coupling * line.epsilon / g
    xi = _cubic_branch((u - c) / g, a, direction == "up")
    return c + g * xi


def _cubic_branch(v, a, smallest):
    v = np.asarray(v, dtype=float)
    p = 1.0 + a - v * v / 3.0
    q = -2.0 * v**3 / 27.0 + v * (1.0 + a) / 3.0 - v
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    one = disc > 0
    t = np.empty_like(v)

    if np.any(one):
        qo, po, do = q[one], p[one], disc[one]
        s = -qo / 2.0 - np.copysign(np.sqrt(do), qo)
        w = np.cbrt(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(w != 0, w - po / (3.0 * np.where(w != 0, w, 1.0)), 0.0)
        t[one] = t1
    three = ~one
    if np.any(three):
        qt, pt = q[three], p[three]
        r = np.sqrt(np.maximum(-pt / 3.0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(r > 0, -qt / (2.0 * np.where(r > 0, r, 1.0) ** 3), 0.0)
        phi = np.arccos(np.clip(arg, -1.0, 1.0))
        k = 2.0 if smallest else 0.0
        t[three] = 2.0 * r * np.cos(phi / 3.0 - 2.0 * np.pi * k / 3.0)
    xi = t + v / 3.0

    for _ in range(3):
        s2 = xi * xi + 1.0
        f = xi + a * xi / s2 - v
        df = 1.0 + a * (1.0 - xi * xi) / (s2 * s2)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xi - f / df
        s2n = xn * xn + 1.0
        fn = xn + a * xn / s2n - v
        better = np.isfinite(xn) & (np.abs(fn) < np.abs(f))
        xi = np.where(better, xn, xi)
    return xi
