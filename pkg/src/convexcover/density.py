"""Grid densities of X, (X+Y)/2 and S_k, the doubling recursion, and pointwise checks.

Grid nodes are cell centres ``origin + i*h``.  The midpoint of two nodes is again
a node whenever the index sum is even, so the doubling map ``f -> 2^d (f*f)(2z)``
lands exactly on the input grid and needs no resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.interpolate import RegularGridInterpolator

from .geometry import (ConvexBody, GeometryError, UnsupportedVolumeError, exact_volume,
                       reflect_intersect_volumes)
from .sampler import mc_volume, sample_sk, sample_uniform
from .symmetry import intersection_volume_ratio

TAU_C = 4.0
MAX_GRID_DIM = 3
MAX_K = 8
PAD_CELLS = 2
SUBDIVISION_DEPTH = 4


class GridError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class GridDensity:
    origin: np.ndarray
    h: float
    values: np.ndarray
    eps_grid: float = 0.0

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def extents(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.h**self.dim)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.h * np.arange(n) for i, n in enumerate(self.extents)]

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def index_of(self, z) -> tuple[int, ...]:
        z = np.asarray(z, dtype=float)
        return tuple(int(round(v)) for v in (z - self.origin) / self.h)

    def __call__(self, points) -> np.ndarray:
        """Multilinear interpolation; zero outside the grid."""
        interp = RegularGridInterpolator(self.axes(), self.values, method="linear",
                                         bounds_error=False, fill_value=0.0)
        return interp(np.atleast_2d(points))

    def mean(self) -> np.ndarray:
        w = self.values.reshape(-1)
        return (self.nodes() * w[:, None]).sum(axis=0) / w.sum()

    def covariance(self) -> np.ndarray:
        X = self.nodes()
        w = self.values.reshape(-1)
        w = w / w.sum()
        mu = (X * w[:, None]).sum(axis=0)
        C = X - mu
        return (C * w[:, None]).T @ C

    def tau(self, C: float = TAU_C) -> float:
        """Discretisation tolerance ``C * h * max |grad f|`` (finite differences)."""
        if min(self.extents) < 2:
            return 0.0
        grads = np.gradient(self.values, self.h)
        if self.dim == 1:
            grads = [grads]
        g = np.sqrt(sum(gi * gi for gi in grads))
        return float(C * self.h * g.max())

    def with_values(self, values: np.ndarray, eps_grid: float | None = None) -> "GridDensity":
        return GridDensity(self.origin, self.h, values,
                           self.eps_grid if eps_grid is None else eps_grid)


def make_grid(body: ConvexBody, h: float, pad: int = PAD_CELLS) -> tuple[np.ndarray, tuple[int, ...]]:
    """Cell-centred grid over the bounding box with ``pad`` empty cells on each side."""
    if body.dim > MAX_GRID_DIM:
        raise GridError(f"grid densities limited to d <= {MAX_GRID_DIM}")
    box = body.bounding_box()
    if np.any(box.widths / h < 8):
        raise GridError("grid too coarse: fewer than 8 cells across the bounding box")
    lower = np.asarray(box.lower) - pad * h
    counts = tuple(int(math.ceil(w / h - 1e-9)) + 2 * pad for w in box.widths)
    if int(np.prod(counts)) > 1 << 22:
        raise GridError("grid too large")
    return lower + 0.5 * h, counts


def _body_volume(body: ConvexBody) -> float:
    try:
        return exact_volume(body)
    except UnsupportedVolumeError:
        return mc_volume(body, 1_000_000, 0)[0]


_CORNERS = {d: np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
            for d in (1, 2, 3)}


def _cell_fractions(body: ConvexBody, lows: np.ndarray, size: float, depth: int) -> np.ndarray:
    """Overlap fraction of each cell by corner classification and recursive subdivision.

    Fully-inside cells (all corners inside) count 1; at sublevels a cell with no
    corner inside counts 0; mixed cells split into 2^d children down to ``depth``,
    where the centre decides.
    """
    d = lows.shape[1]
    offs = _CORNERS[d]
    nc = offs.shape[0]
    frac = np.zeros(lows.shape[0])
    owner = np.arange(lows.shape[0])
    weight = np.ones(lows.shape[0])
    cur, s = lows, size
    for level in range(depth + 1):
        pts = (cur[:, None, :] + offs[None, :, :] * s).reshape(-1, d)
        cnt = body.inside(pts).reshape(-1, nc).sum(axis=1)
        full = cnt == nc
        np.add.at(frac, owner[full], weight[full])
        mixed = ~full if level == 0 else (~full & (cnt > 0))
        if level == depth:
            ctr = body.inside(cur[mixed] + 0.5 * s)
            np.add.at(frac, owner[mixed][ctr], weight[mixed][ctr])
            break
        half = 0.5 * s
        cur = (cur[mixed][:, None, :] + offs[None, :, :] * half).reshape(-1, d)
        owner = np.repeat(owner[mixed], nc)
        weight = np.repeat(weight[mixed] / nc, nc)
        s = half
    return frac


def grid_indicator_density(body: ConvexBody, h: float, *, depth: int = SUBDIVISION_DEPTH,
                           pad: int = PAD_CELLS) -> GridDensity:
    """Uniform density on ``body`` as cell-averaged values ``|cell ∩ K| / (|cell| |K|)``."""
    origin, counts = make_grid(body, h, pad)
    d = body.dim
    vol = _body_volume(body)
    # classify the (n+1)^d cell corners once
    corner_axes = [origin[i] - 0.5 * h + h * np.arange(n + 1) for i, n in enumerate(counts)]
    mesh = np.meshgrid(*corner_axes, indexing="ij")
    cpts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    cin = body.inside(cpts).reshape(tuple(n + 1 for n in counts)).astype(np.int32)
    # per-cell count of inside corners
    total = np.zeros(counts, dtype=np.int32)
    for off in _CORNERS[d].astype(int):
        sl = tuple(slice(o, o + n) for o, n in zip(off, counts))
        total += cin[sl]
    nc = 2**d
    frac = (total == nc).astype(float)
    touched = total > 0
    # cells next to any touched cell may hide a sliver of K
    near = touched.copy()
    for ax in range(d):
        near |= np.roll(touched, 1, axis=ax) | np.roll(touched, -1, axis=ax)
    cand = near & (total < nc)
    idx = np.argwhere(cand)
    if idx.size:
        lows = origin - 0.5 * h + idx * h
        frac[tuple(idx.T)] = _cell_fractions(body, lows, h, depth)
    values = frac / vol
    f = GridDensity(np.asarray(origin), float(h), values)
    return f.with_values(values, abs(f.mass - 1.0))


def _require_unit_volume(body: ConvexBody) -> float:
    vol = _body_volume(body)
    if abs(vol - 1.0) > 1e-6:
        raise GridError(f"body must have volume 1 (got {vol:.6g}); normalise first")
    return vol


def midpoint_values(body: ConvexBody, Z, *, mode: str = "auto", n: int = 20_000,
                    seed: int = 0) -> np.ndarray:
    """Density of (X+Y)/2 at arbitrary points: ``2^d |K ∩ (2z - K)| / |K|^2``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    d = body.dim
    vol = _body_volume(body)
    try:
        if mode == "mc":
            raise UnsupportedVolumeError("mc requested")
        return 2**d * reflect_intersect_volumes(body, 2 * Z) / vol**2
    except UnsupportedVolumeError:
        ratios = np.array([intersection_volume_ratio(body, 2 * z, "mc", n, seed) for z in Z])
        return 2**d * ratios / vol


def midpoint_density(body: ConvexBody, h: float, *, mode: str = "auto", n: int = 20_000,
                     seed: int = 0, pad: int = PAD_CELLS) -> GridDensity:
    """Grid of ``midpoint_values`` at the cell centres."""
    origin, counts = make_grid(body, h, pad)
    f = GridDensity(np.asarray(origin), float(h), np.zeros(counts))
    values = midpoint_values(body, f.nodes(), mode=mode, n=n, seed=seed).reshape(counts)
    f = f.with_values(values)
    return f.with_values(values, abs(f.mass - 1.0))


def convolve_double(f: GridDensity) -> GridDensity:
    """Density of the midpoint of two independent copies: ``2^d ∫ f(y) f(2z - y) dy``."""
    d = f.dim
    v = f.values
    edge = max(np.abs(np.take(v, [0, -1], axis=ax)).max() for ax in range(d))
    if edge > 1e-12 * max(np.abs(v).max(), 1e-300):
        raise GridError("insufficient padding: density touches the grid boundary")
    full = signal.fftconvolve(v, v)
    out = full[tuple(slice(0, None, 2) for _ in range(d))] * (2**d * f.h**d)
    # FFT round-off leaves tiny noise where the exact convolution vanishes
    out[out < 1e-13 * out.max()] = 0.0
    g = f.with_values(out)
    return g.with_values(out, max(f.eps_grid, abs(g.mass - 1.0)))


def sk_density(body: ConvexBody, k: int, h: float, *, base: GridDensity | None = None) -> GridDensity:
    """Density of ``S_k`` by ``k`` doublings of the indicator density."""
    if not 0 <= k <= MAX_K:
        raise GridError(f"k must lie in [0, {MAX_K}]")
    f = base if base is not None else grid_indicator_density(body, h)
    for _ in range(k):
        f = convolve_double(f)
    return f


def sk_chain(body: ConvexBody, k_max: int, h: float) -> list[GridDensity]:
    """``[f_{S_0}, ..., f_{S_kmax}]`` sharing one indicator grid."""
    chain = [grid_indicator_density(body, h)]
    for _ in range(k_max):
        chain.append(convolve_double(chain[-1]))
    return chain


@dataclass(frozen=True)
class CheckRow:
    check: str
    k: int
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


def check_lemma22(body: ConvexBody, k_max: int, h: float, *, chain: list[GridDensity] | None = None,
                  f1: GridDensity | None = None) -> list[CheckRow]:
    """``max_z f_{S_k}(z) - f_1(z)^(2^k - 1)`` for ``k = 1..k_max`` against ``tau(h)``."""
    _require_unit_volume(body)
    f1 = f1 if f1 is not None else midpoint_density(body, h)
    chain = chain if chain is not None else sk_chain(body, k_max, h)
    rows = []
    for k in range(1, k_max + 1):
        fk = chain[k]
        viol = float(np.max(fk.values - f1.values ** (2**k - 1)))
        tau = fk.tau()
        rows.append(CheckRow("iterated_midpoint_bound", k, viol, tau, viol <= tau))
    return rows


def logconcavity_check(f: GridDensity, lines: int = 200, seed: int = 0,
                       triples_per_line: int = 16) -> CheckRow:
    """Random-line midpoint test ``f(mid) >= sqrt(f(a) f(b)) - tau``."""
    rng = np.random.default_rng(seed)
    d = f.dim
    tau = f.tau()
    vmax = float(f.values.max())
    support = np.argwhere(f.values > 1e-9 * vmax)
    lo = f.origin
    hi = f.origin + f.h * (np.array(f.extents) - 1)
    worst = np.inf
    for _ in range(lines):
        p0 = f.origin + f.h * support[rng.integers(len(support))]
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        # parameter range of the line inside the grid box
        with np.errstate(divide="ignore"):
            t1 = (lo - p0) / u
            t2 = (hi - p0) / u
        tmin = np.max(np.minimum(t1, t2))
        tmax = np.min(np.maximum(t1, t2))
        ta = rng.uniform(tmin, tmax, triples_per_line)
        tb = rng.uniform(tmin, tmax, triples_per_line)
        a = p0 + ta[:, None] * u
        b = p0 + tb[:, None] * u
        m = 0.5 * (a + b)
        fa, fb, fm = f(a), f(b), f(m)
        slack = fm - np.sqrt(fa * fb) + tau
        worst = min(worst, float(slack.min()))
    return CheckRow("log_concavity", 0, worst, tau, worst >= 0.0,
                    "min over triples of f(mid) - sqrt(f(a)f(b)) + tau")


def centroid_value_check(f: GridDensity) -> CheckRow:
    """Value at the centre of mass against ``e^-d * max f``."""
    y = f.mean()
    fy = float(f(y[None, :])[0])
    bound = math.exp(-f.dim) * float(f.values.max())
    tau = f.tau()
    return CheckRow("centroid_value", 0, fy - bound, tau, fy >= bound - tau,
                    f"f(centroid)={fy:.6g}, e^-d max f={bound:.6g}")


@dataclass(frozen=True)
class SmallBallProbe:
    k: int
    R: float
    p_sk: float
    p_sk_stderr: float
    p_x: float
    p_x_stderr: float
    p_x_from_formula: bool
    ratio: float
    ratio_stderr: float
    tail_sk: float
    second_moment: float
    markov_bound: float
    markov_ok: bool
    markov_constant_bound: float


def small_ball_probe(body: ConvexBody, k: int, R: float | None = None, n: int = 100_000,
                     seed: int = 0, *, radius_factor: float = 2.0**-7,
                     markov_const: float = 2.0**14, L: float | None = None) -> SmallBallProbe:
    """Monte Carlo small-ball probabilities of ``S_k`` and ``X`` for an isotropic unit-volume body.

    ``ratio = P(|S_k| <= R) / P(|X| <= R)`` lower-bounds ``max f_{S_k}`` (with |K| = 1).
    ``markov_bound`` is ``E|S_k|^2 / R^2`` with the empirical second moment;
    ``markov_constant_bound`` is ``markov_const * L^2 / 2^k`` (meaningful at the default R).
    """
    d = body.dim
    R = radius_factor * math.sqrt(d) if R is None else float(R)
    S = np.asarray(sample_sk(body, k, n, seed).points)
    X = np.asarray(sample_uniform(body, n, seed + 1).points)
    rS = np.linalg.norm(S, axis=1)
    rX = np.linalg.norm(X, axis=1)
    p_sk = float(np.mean(rS <= R))
    p_x = float(np.mean(rX <= R))
    se_sk = math.sqrt(p_sk * (1 - p_sk) / n)
    se_x = math.sqrt(p_x * (1 - p_x) / n)
    from_formula = p_x == 0.0
    if from_formula:
        p_x = math.pi ** (d / 2) * R**d / math.gamma(d / 2 + 1)
        se_x = 0.0
    ratio = p_sk / p_x
    ratio_se = ratio * math.hypot(se_sk / p_sk if p_sk else 0.0, se_x / p_x if p_x else 0.0)
    m2 = float(np.mean(rS**2))
    tail = float(np.mean(rS >= R))
    markov = m2 / R**2
    if L is None:
        cov = np.cov(X, rowvar=False).reshape(d, d)
        L = float(np.sqrt(np.trace(cov) / d))
    return SmallBallProbe(k, R, p_sk, se_sk, p_x, se_x, from_formula, ratio, ratio_se, tail, m2,
                          markov, tail <= markov, markov_const * L * L / 2**k)


# ---------------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------------


def dump_grid(f: GridDensity, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# grid density v1\n")
        fh.write(f"d {f.dim}\n")
        fh.write("origin " + " ".join(f"{v:.17g}" for v in f.origin) + "\n")
        fh.write(f"h {f.h:.17g}\n")
        fh.write("extents " + " ".join(str(n) for n in f.extents) + "\n")
        fh.write(f"eps_grid {f.eps_grid:.17g}\n")
        fh.write("values\n")
        for v in f.values.reshape(-1):
            fh.write(f"{v:.17g}\n")


def load_grid(path) -> GridDensity:
    header: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "values":
                break
            key, *rest = line.split()
            header[key] = rest
        vals = np.array([float(x) for x in fh.read().split()])
    try:
        d = int(header["d"][0])
        origin = np.array([float(x) for x in header["origin"]])
        h = float(header["h"][0])
        ext = tuple(int(x) for x in header["extents"])
        eps = float(header.get("eps_grid", ["0"])[0])
    except (KeyError, IndexError, ValueError) as exc:
        raise GridError(f"malformed grid header: {exc}") from None
    if len(ext) != d or origin.shape != (d,) or vals.size != int(np.prod(ext)):
        raise GridError("grid header and value count disagree")
    if not np.all(np.isfinite(vals)):
        raise GridError("non-finite grid values")
    return GridDensity(origin, h, vals.reshape(ext), eps)
