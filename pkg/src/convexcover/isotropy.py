"""Moments, isotropic normalisation, isotropic constant and the thin-shell statistic."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import (AffineImage, ConvexBody, DegenerateBodyError, UnsupportedVolumeError,
                       exact_moments, exact_volume)
from .sampler import mc_volume, sample_uniform

log = logging.getLogger(__name__)

CONDITION_CUTOFF = 1e12
_BATCHES = 20


@dataclass(frozen=True, eq=False)
class MomentEstimate:
    mean: np.ndarray
    covariance: np.ndarray
    volume: float
    volume_stderr: float
    n_samples: int
    isotropic_constant: float
    stderr_L: float
    mean_stderr: np.ndarray
    covariance_stderr: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def recompute_L(self) -> float:
        return isotropic_constant(self.covariance, self.volume)


def isotropic_constant(cov: np.ndarray, volume: float) -> float:
    d = cov.shape[0]
    return (math.sqrt(max(np.linalg.det(cov), 0.0)) / volume) ** (1.0 / d)


def _check_conditioning(cov: np.ndarray) -> None:
    w = np.linalg.eigvalsh(cov)
    if w.min() <= 0 or w.max() / w.min() > CONDITION_CUTOFF:
        raise DegenerateBodyError("covariance is degenerate (condition number above 1e12)")


def body_volume(body: ConvexBody, n: int, seed: int) -> tuple[float, float]:
    """Exact volume when available, else Monte Carlo with standard error."""
    try:
        return exact_volume(body), 0.0
    except UnsupportedVolumeError:
        return mc_volume(body, n, seed)


def moments_from_points(X: np.ndarray, volume: float, volume_stderr: float = 0.0) -> MomentEstimate:
    n, d = X.shape
    mean = X.mean(axis=0)
    C = X - mean
    cov = C.T @ C / (n - 1)
    cov = 0.5 * (cov + cov.T)
    _check_conditioning(cov)
    prods = np.einsum("ni,nj->nij", C, C)
    cov_se = prods.std(axis=0, ddof=1) / math.sqrt(n)
    mean_se = X.std(axis=0, ddof=1) / math.sqrt(n)
    L = isotropic_constant(cov, volume)
    # batch means for the determinant part; delta method for the volume part
    nb = min(_BATCHES, max(2, n // (10 * d * d)))
    Ls = []
    for part in np.array_split(X, nb):
        Cp = np.cov(part, rowvar=False).reshape(d, d)
        Ls.append(isotropic_constant(Cp, volume))
    se_det = float(np.std(Ls, ddof=1) / math.sqrt(nb))
    se_vol = L / d * volume_stderr / volume
    stderr_L = math.hypot(se_det, se_vol)
    return MomentEstimate(mean, cov, float(volume), float(volume_stderr), n, L, stderr_L,
                          mean_se, cov_se)


def estimate_moments(body: ConvexBody, n: int, seed: int, method: str | None = None) -> MomentEstimate:
    d = body.dim
    if n < 10 * d * d:
        raise ValueError(f"need n >= 10*d^2 = {10 * d * d} samples")
    batch = sample_uniform(body, n, seed, method)
    vol, vol_se = body_volume(body, n, seed)
    return moments_from_points(np.asarray(batch.points), vol, vol_se)


def _sym_inv_sqrt(cov: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(cov)
    # fix eigenvector signs: largest-magnitude entry positive
    idx = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[idx, np.arange(Q.shape[1])])
    return (Q / np.sqrt(w)) @ Q.T


class IsotropicMap(NamedTuple):
    body: AffineImage
    M: np.ndarray
    t: np.ndarray


def isotropic_normalize(body: ConvexBody, n: int = 100_000, seed: int = 0, *,
                        exact: bool = True, verify: bool = True) -> IsotropicMap:
    """Affine image with centroid 0, volume 1 and covariance ``L**2 * I``.

    Exact moments are used whenever the body has them; otherwise they are sampled.
    """
    d = body.dim
    try:
        if not exact:
            raise UnsupportedVolumeError("sampled moments requested")
        vol, mean, cov = exact_moments(body)
        _check_conditioning(cov)
    except UnsupportedVolumeError:
        est = estimate_moments(body, n, seed)
        vol, mean, cov = est.volume, est.mean, est.covariance
    L = isotropic_constant(cov, vol)
    M = L * _sym_inv_sqrt(cov)
    t = -M @ mean
    image = AffineImage(body, M, t)
    if verify and n >= 10 * d * d:
        check = estimate_moments(image, n, seed + 1)
        off = check.covariance - np.diag(np.diag(check.covariance))
        tol = 3 * math.sqrt(2) * check.covariance_stderr
        if np.any(np.abs(off) > tol):
            log.warning("isotropic normalisation check: off-diagonal covariance above 3 stderr")
    return IsotropicMap(image, M, t)


def unit_covariance_image(body: ConvexBody, n: int = 100_000, seed: int = 0) -> AffineImage:
    """Centred affine image with covariance I (the thin-shell normalisation)."""
    iso = isotropic_normalize(body, n, seed, verify=False)
    vol, mean, cov = _moments_any(iso.body, n, seed)
    L = isotropic_constant(cov, vol)
    return AffineImage(body, iso.M / L, iso.t / L)


def _moments_any(body, n, seed):
    try:
        return exact_moments(body)
    except UnsupportedVolumeError:
        est = estimate_moments(body, n, seed)
        return est.volume, est.mean, est.covariance


@dataclass(frozen=True)
class ThinShell:
    value: float
    stderr: float
    n: int


def thin_shell_stat(body: ConvexBody, n: int, seed: int) -> ThinShell:
    """Monte Carlo ``E[(|X| - sqrt(d))^2]`` for a body already normalised to covariance I."""
    d = body.dim
    X = np.asarray(sample_uniform(body, n, seed).points)
    C = X - X.mean(axis=0)
    cov = C.T @ C / (n - 1)
    se = np.einsum("ni,nj->nij", C, C).std(axis=0, ddof=1) / math.sqrt(n)
    # loose screen for a body that was never normalised (entrywise 6 stderr or 5%)
    if np.any(np.abs(cov - np.eye(d)) > np.maximum(6 * se, 0.05)):
        raise ValueError("body is not normalised to identity covariance")
    r = (np.linalg.norm(X, axis=1) - math.sqrt(d)) ** 2
    return ThinShell(float(r.mean()), float(r.std(ddof=1) / math.sqrt(n)), n)
