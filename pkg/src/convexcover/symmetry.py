"""Kövner–Besicovitch symmetry: the overlap ratio g(x) = |K ∩ (x-K)| / |K| and its maximum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (ConvexBody, DegenerateBodyError, UnsupportedVolumeError, exact_moments,
                       exact_volume, has_exact_volume, reflect_intersect,
                       reflect_intersect_volumes)
from .sampler import sample_uniform

DEFAULT_MC_N = 20_000


@dataclass(frozen=True, eq=False)
class SymmetryResult:
    x_star: np.ndarray
    delta: float
    method: str
    stderr: float
    converged: bool
    evaluations: int
    trace: list = field(default_factory=list)


def _resolve_mode(body: ConvexBody, mode: str) -> str:
    if mode == "auto":
        if not has_exact_volume(body):
            return "mc"
        try:
            reflect_intersect_volumes(body, 2 * body.interior_point()[None, :])
        except UnsupportedVolumeError:
            return "mc"
        return "exact"
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    return mode


class _Overlap:
    """Vectorised evaluator of g; MC mode reuses one sample (common random numbers)."""

    def __init__(self, body: ConvexBody, mode: str, n: int, seed: int):
        self.body = body
        self.mode = mode
        self.n = n
        self.calls = 0
        if mode == "exact":
            self.volume = exact_volume(body)
            if self.volume <= 0:
                raise DegenerateBodyError("body has zero volume")
        else:
            self.Y = np.asarray(sample_uniform(body, n, seed).points)

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        self.calls += xs.shape[0]
        if self.mode == "exact":
            return np.clip(reflect_intersect_volumes(self.body, xs) / self.volume, 0.0, 1.0)
        out = np.empty(xs.shape[0])
        for i, x in enumerate(xs):
            out[i] = np.mean(self.body.inside(x - self.Y))
        return out


def _mc_ratio(body: ConvexBody, x: np.ndarray, n: int, seed: int) -> tuple[float, float]:
    Y = np.asarray(sample_uniform(body, n, seed).points)
    p = float(np.mean(body.inside(x - Y)))
    return p, math.sqrt(p * (1 - p) / n)


def overlap_ratio(body: ConvexBody, x, mode: str = "auto", n: int = DEFAULT_MC_N,
                  seed: int = 0) -> tuple[float, float]:
    """``(g(x), stderr)``; the exact path has zero standard error."""
    x = np.asarray(x, dtype=float)
    mode = _resolve_mode(body, mode)
    if mode == "exact":
        vol = exact_volume(body)
        try:
            inter = exact_volume(reflect_intersect(body, x))
        except UnsupportedVolumeError:
            raise UnsupportedVolumeError("exact mode unsupported for this body") from None
        return min(1.0, inter / vol), 0.0
    return _mc_ratio(body, x, n, seed)


def intersection_volume_ratio(body: ConvexBody, x, mode: str = "auto", n: int = DEFAULT_MC_N,
                              seed: int = 0) -> float:
    return overlap_ratio(body, x, mode, n, seed)[0]


def body_centroid(body: ConvexBody, n: int = DEFAULT_MC_N, seed: int = 0) -> np.ndarray:
    try:
        return exact_moments(body)[1]
    except UnsupportedVolumeError:
        return np.asarray(sample_uniform(body, n, seed).points).mean(axis=0)


def _directions(d: int) -> np.ndarray:
    dirs = list(np.eye(d))
    for i in range(d):
        for j in range(i + 1, d):
            for s in (1.0, -1.0):
                v = np.zeros(d)
                v[i], v[j] = 1.0, s
                dirs.append(v / math.sqrt(2))
    dirs = np.array(dirs)
    return np.vstack([dirs, -dirs])


def _better(val, x, best_val, best_x) -> bool:
    # exact ties go to the lexicographically smaller point
    if val != best_val:
        return val > best_val
    return tuple(x) < tuple(best_x)


def delta_kb(body: ConvexBody, budget: int = 8000, seed: int = 0, *, mode: str = "auto",
             n: int = DEFAULT_MC_N, starts: int = 8, step_tol: float = 1e-4) -> SymmetryResult:
    """Maximise g by multistart pattern search on the concave ``h = g**(1/d)``.

    Starts at twice the centroid plus ``starts`` random points ``2y`` with ``y`` uniform
    in the body.  Steps shrink by half when no poll direction improves h; a start
    stops once the step falls below ``step_tol * diam``.
    """
    if body.degenerate:
        raise DegenerateBodyError("body has empty interior")
    d = body.dim
    mode = _resolve_mode(body, mode)
    g = _Overlap(body, mode, n, seed)
    box = body.bounding_box()
    diam = float(np.linalg.norm(box.widths))
    x0 = 2 * body_centroid(body, n, seed)
    extra = np.asarray(sample_uniform(body, max(starts, 1), seed + 7919).points)[:starts] * 2
    initial = np.vstack([x0[None, :], extra]) if starts else x0[None, :]
    dirs = _directions(d)
    per_start = max(1, budget // len(initial))
    trace = []
    best_x, best_v = None, -np.inf
    converged = True

    for si, x in enumerate(initial):
        x = np.array(x)
        v = float(g(x[None, :])[0])
        used = 1
        step = 0.25 * diam
        it = 0
        while step >= step_tol * diam:
            if used + len(dirs) > per_start:
                converged = False
                break
            cands = x + step * dirs
            vals = g(cands)
            used += len(dirs)
            j = int(np.argmax(vals))
            if vals[j] > v + 1e-15:
                x, v = cands[j], float(vals[j])
            else:
                step *= 0.5
            it += 1
            trace.append((si, it, float(v ** (1.0 / d)) if v > 0 else 0.0, float(step)))
        if best_x is None or _better(v, x, best_v, best_x):
            best_x, best_v = x, v

    stderr = 0.0
    if mode == "mc":
        # independent final evaluation removes the selection bias of the search sample
        best_v, stderr = _mc_ratio(body, best_x, n, seed + 104729)
    return SymmetryResult(best_x, float(min(best_v, 1.0)), mode, stderr, converged, g.calls, trace)


def centred_symmetry(body: ConvexBody, mode: str = "auto", n: int = DEFAULT_MC_N,
                     seed: int = 0) -> tuple[float, float]:
    """``|K_c ∩ (-K_c)| / |K|`` for K translated to its centroid, i.e. g(2*centroid)."""
    c = body_centroid(body, n, seed)
    return overlap_ratio(body, 2 * c, mode, n, seed + 1)


def bound_delta_kb(d: int, L: float, const: float = 2.0**15) -> float:
    """Lower bound ``exp(d / (const * L^2)) * 2^-d`` on the maximal overlap ratio."""
    if d < 1 or not L > 0:
        raise ValueError("need d >= 1 and L > 0")
    return math.exp(d / (const * L * L)) * 2.0 ** (-d)


def bound_centred(d: int, L: float, const: float = 2.0**16) -> float:
    """Lower bound on the centred overlap ratio; same form with ``2**16``."""
    return bound_delta_kb(d, L, const)
