"""Seeded uniform sampling from convex bodies and the dyadic averages S_k.

Random streams are keyed by ``(seed, stream, chunk)`` where a chunk is a fixed
block of ``CHUNK`` consecutive point indices, so the points with a given index
do not depend on how the work is split between workers.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexBody, DegenerateBodyError, GeometryError

CHUNK = 4096
PROBE_SIZE = 256
REJECTION_THRESHOLD = 0.01
MAX_K = 20

_STREAM_POINTS = 0
_STREAM_PROBE = 1


class SamplingError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class SampleBatch:
    points: np.ndarray
    seed: int
    method: str
    burn_in: int = 0
    thinning: int = 1

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def worker_count() -> int:
    """Worker threads from ``CONVEXCOVER_WORKERS``; never changes results."""
    try:
        return max(1, int(os.environ.get("CONVEXCOVER_WORKERS", "1")))
    except ValueError:
        return 1


def stream_rng(seed: int, stream: int, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(stream, chunk))
    return np.random.Generator(np.random.PCG64(ss))


def acceptance_rate(body: ConvexBody, seed: int) -> float:
    box = body.bounding_box()
    rng = stream_rng(seed, _STREAM_PROBE)
    pts = box.lower + rng.random((PROBE_SIZE, body.dim)) * box.widths
    return float(np.mean(body.inside(pts)))


def choose_method(body: ConvexBody, seed: int, allow_mcmc: bool = True) -> str:
    rate = acceptance_rate(body, seed)
    if rate >= REJECTION_THRESHOLD:
        return "rejection"
    if not allow_mcmc:
        raise SamplingError(f"acceptance probe rate {rate:.4f} below threshold and "
                            "hit-and-run disabled")
    return "hit-and-run"


def _rejection_chunk(body: ConvexBody, seed: int, chunk: int, lower, widths) -> np.ndarray:
    rng = stream_rng(seed, _STREAM_POINTS, chunk)
    d = body.dim
    got: list[np.ndarray] = []
    have = 0
    rate = 0.5
    while have < CHUNK:
        m = int(math.ceil((CHUNK - have) / max(rate, 1e-3) * 1.2)) + 16
        cand = lower + rng.random((m, d)) * widths
        ok = body.inside(cand)
        rate = max(float(ok.mean()), 1e-3)
        got.append(cand[ok])
        have += int(ok.sum())
    return np.vstack(got)[:CHUNK]


def _hit_and_run_chunks(body: ConvexBody, seed: int, chunks: list[int], start: np.ndarray,
                        burn_in: int, thinning: int) -> dict[int, np.ndarray]:
    """One chain per chunk; chains advance together but draw from their own streams."""
    d = body.dim
    steps = burn_in + CHUNK * thinning
    rngs = [stream_rng(seed, _STREAM_POINTS, c) for c in chunks]
    out = {c: np.empty((CHUNK, d)) for c in chunks}
    x = np.tile(start, (len(chunks), 1))
    block = 1024
    emitted = 0
    for s0 in range(0, steps, block):
        nb = min(block, steps - s0)
        dirs = np.stack([r.standard_normal((nb, d)) for r in rngs], axis=1)
        unif = np.stack([r.random(nb) for r in rngs], axis=1)
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        for j in range(nb):
            u = dirs[j]
            lo, hi = body.chord(x, u)
            x = x + (lo + unif[j] * (hi - lo))[:, None] * u
            step = s0 + j + 1
            if step > burn_in and (step - burn_in) % thinning == 0:
                for i, c in enumerate(chunks):
                    out[c][emitted] = x[i]
                emitted += 1
    return out


def _generate(body: ConvexBody, start: int, stop: int, seed: int, method: str,
              burn_in: int, thinning: int, workers: int) -> np.ndarray:
    """Points with global indices ``start <= i < stop``."""
    c0, c1 = start // CHUNK, (stop - 1) // CHUNK
    chunks = list(range(c0, c1 + 1))
    if method == "rejection":
        box = body.bounding_box()
        lower, widths = np.asarray(box.lower), box.widths

        def work(c):
            return _rejection_chunk(body, seed, c, lower, widths)

        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(workers) as ex:
                blocks = list(ex.map(work, chunks))
        else:
            blocks = [work(c) for c in chunks]
    else:
        res = _hit_and_run_chunks(body, seed, chunks, body.interior_point(), burn_in, thinning)
        blocks = [res[c] for c in chunks]
    allpts = np.vstack(blocks)
    off = start - c0 * CHUNK
    return allpts[off:off + (stop - start)]


def _resolve(body: ConvexBody, seed: int, method: str | None, burn_in: int | None,
             thinning: int | None, allow_mcmc: bool) -> tuple[str, int, int]:
    if body.degenerate:
        raise DegenerateBodyError("cannot sample a body with empty interior")
    d = body.dim
    method = method or choose_method(body, seed, allow_mcmc)
    if method not in ("rejection", "hit-and-run"):
        raise SamplingError(f"unknown method {method!r}")
    if method == "rejection":
        return method, 0, 1
    return method, (10 * d * d if burn_in is None else burn_in), (d if thinning is None else thinning)


def sample_uniform(body: ConvexBody, n: int, seed: int, method: str | None = None, *,
                   burn_in: int | None = None, thinning: int | None = None,
                   allow_mcmc: bool = True, workers: int | None = None) -> SampleBatch:
    """``n`` i.i.d. uniform points (exact for rejection, approximate for hit-and-run)."""
    if n < 1:
        raise SamplingError("n must be positive")
    method, burn_in, thinning = _resolve(body, seed, method, burn_in, thinning, allow_mcmc)
    pts = _generate(body, 0, n, seed, method, burn_in, thinning, workers or worker_count())
    pts.setflags(write=False)
    return SampleBatch(pts, int(seed), method, burn_in, thinning)


def sample_sk(body: ConvexBody, k: int, n: int, seed: int, method: str | None = None, *,
              allow_mcmc: bool = True, workers: int | None = None) -> SampleBatch:
    """Rows are means of ``2**k`` fresh uniform points; ``k=0`` reproduces ``sample_uniform``."""
    if not 0 <= k <= MAX_K:
        raise SamplingError(f"k must lie in [0, {MAX_K}]")
    if n < 1:
        raise SamplingError("n must be positive")
    method, burn_in, thinning = _resolve(body, seed, method, None, None, allow_mcmc)
    workers = workers or worker_count()
    m = 1 << k
    rows_per_block = max(1, (1 << 18) >> k)
    out = np.empty((n, body.dim))
    for r0 in range(0, n, rows_per_block):
        r1 = min(n, r0 + rows_per_block)
        base = _generate(body, r0 * m, r1 * m, seed, method, burn_in, thinning, workers)
        out[r0:r1] = base.reshape(r1 - r0, m, body.dim).mean(axis=1) if m > 1 else base
    out.setflags(write=False)
    return SampleBatch(out, int(seed), method, burn_in, thinning)


def write_samples_csv(batch: SampleBatch, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(batch.dim)])
        for row in batch.points:
            w.writerow([f"{v:.17g}" for v in row])


def mc_volume(body: ConvexBody, n: int, seed: int) -> tuple[float, float]:
    """Box volume times hit fraction, with its binomial standard error."""
    box = body.bounding_box()
    rng = stream_rng(seed, 2)
    hits = 0
    done = 0
    while done < n:
        m = min(1 << 18, n - done)
        pts = box.lower + rng.random((m, body.dim)) * box.widths
        hits += int(body.inside(pts).sum())
        done += m
    p = hits / n
    return box.volume * p, box.volume * math.sqrt(max(p * (1 - p), 0.0) / n)
