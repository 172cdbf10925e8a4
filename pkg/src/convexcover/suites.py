"""Experiment suites: per-body computations, CSV reports, certificates and the summary table."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import covering, density, isotropy, symmetry
from .bodies import (NamedBody, builtin_zoo, ehrhart_simplex, named, symmetric_lattice_free,
                     write_bodies)
from .geometry import UnsupportedVolumeError, ball_volume, exact_moments, translate
from .sampler import sample_sk, worker_count

log = logging.getLogger(__name__)

SUITES = ("moments", "symmetry", "lemmas", "covering", "ehrhart")
DEFAULT_GRID_H = {1: 1.0 / 1024, 2: 1.0 / 128}
COVARIANCE_REL_TOL = 0.05
LATTICE_FREE_SEEDS = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    seed: int
    out: Path
    bodies_path: Path | None = None
    n: int = 20_000
    grid_h: float | None = None
    k_max: int = 3
    lam: float = 0.9
    delta: float | None = None
    symmetry_budget: int = 8000

    def validate(self) -> None:
        if self.suite not in SUITES + ("all",):
            raise ConfigError(f"unknown suite {self.suite!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        for key in ("n", "k_max", "symmetry_budget"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        for key in ("grid_h", "delta"):
            v = getattr(self, key)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be positive")
        if not 0 < self.lam < 1:
            raise ConfigError("lambda must lie in (0, 1)")
        if self.k_max > 8:
            raise ConfigError("k_max above 8 is outside the grid budget")

    @property
    def suites(self) -> tuple[str, ...]:
        return SUITES if self.suite == "all" else (self.suite,)


@dataclass
class SuiteResult:
    name: str
    header: list[str]
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r.get(h)) for h in header])


def _summary(suite, name, quantity, measured, bound, relation, passed, hard=True) -> dict:
    return {"suite": suite, "name": name, "quantity": quantity, "measured": measured,
            "bound": bound, "relation": relation, "passed": bool(passed), "hard": hard}


def _map(fn, items):
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def exact_L(body) -> float | None:
    try:
        vol, _, cov = exact_moments(body)
    except UnsupportedVolumeError:
        return None
    return isotropy.isotropic_constant(cov, vol)


def ball_L(d: int) -> float:
    """Isotropic constant of the Euclidean ball, the smallest over all bodies."""
    return math.sqrt(1.0 / (d + 2)) / ball_volume(d) ** (1.0 / d)


# ---------------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------------

MOMENT_HEADER = ["name", "d", "volume", "L", "stderr_L", "L_exact", "thin_shell", "stderr",
                 "seed", "n"]


def run_moments(bodies: list[NamedBody], cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("moments", MOMENT_HEADER)

    def one(nb: NamedBody):
        d = nb.body.dim
        n = max(cfg.n, 10 * d * d)
        est = isotropy.estimate_moments(nb.body, n, cfg.seed)
        shell = isotropy.thin_shell_stat(isotropy.unit_covariance_image(nb.body, n, cfg.seed),
                                         n, cfg.seed + 1)
        return {"name": nb.name, "d": d, "volume": est.volume, "L": est.isotropic_constant,
                "stderr_L": est.stderr_L, "L_exact": exact_L(nb.body), "thin_shell": shell.value,
                "stderr": shell.stderr, "seed": cfg.seed, "n": n}

    for row in _map(one, bodies):
        res.rows.append(row)
        lb = ball_L(row["d"])
        ok = row["L"] >= lb - 4 * row["stderr_L"]
        res.summary.append(_summary("moments", row["name"], "L", row["L"], lb, ">= L_ball - 4se", ok))
        if not ok:
            res.failures.append(f"moments/{row['name']}: L below the ball value")
    return res


# ---------------------------------------------------------------------------------
# symmetry
# ---------------------------------------------------------------------------------

SYMMETRY_HEADER = ["name", "d", "delta", "stderr", "x_star_1", "x_star_2", "x_star_3", "L",
                   "bound_delta_kb", "margin", "centred", "centred_stderr", "bound_centred",
                   "method", "converged", "seed", "budget", "n"]


def run_symmetry(bodies: list[NamedBody], cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("symmetry", SYMMETRY_HEADER)

    def one(nb: NamedBody):
        body, d = nb.body, nb.body.dim
        r = symmetry.delta_kb(body, cfg.symmetry_budget, cfg.seed, n=cfg.n)
        L = exact_L(body)
        if L is None:
            L = isotropy.estimate_moments(body, max(cfg.n, 10 * d * d), cfg.seed).isotropic_constant
        c, c_se = symmetry.centred_symmetry(body, n=cfg.n, seed=cfg.seed)
        bd = symmetry.bound_delta_kb(d, L)
        row = {"name": nb.name, "d": d, "delta": r.delta, "stderr": r.stderr, "L": L,
               "bound_delta_kb": bd, "margin": r.delta - bd, "centred": c, "centred_stderr": c_se,
               "bound_centred": symmetry.bound_centred(d, L), "method": r.method,
               "converged": r.converged, "seed": cfg.seed, "budget": cfg.symmetry_budget,
               "n": cfg.n}
        for i in range(3):
            row[f"x_star_{i + 1}"] = float(r.x_star[i]) if i < d else None
        return row

    for row in _map(one, bodies):
        res.rows.append(row)
        name, d = row["name"], row["d"]
        se = row["stderr"]
        checks = [
            ("delta", row["delta"], 2.0**-d, ">= 2^-d", row["delta"] >= 2.0**-d - 3 * se),
            ("delta", row["delta"], row["bound_delta_kb"], ">= bound_delta_kb",
             row["delta"] >= row["bound_delta_kb"] - 3 * se),
            ("centred", row["centred"], row["bound_centred"], ">= bound_centred",
             row["centred"] >= row["bound_centred"] - 3 * row["centred_stderr"]),
            ("centred", row["centred"], row["delta"], "<= delta",
             row["centred"] <= row["delta"] + 3 * math.hypot(se, row["centred_stderr"]) + 1e-12),
        ]
        for q, m, b, rel, ok in checks:
            res.summary.append(_summary("symmetry", name, q, m, b, rel, ok))
            if not ok:
                res.failures.append(f"symmetry/{name}: {q} {rel} violated")
    return res


# ---------------------------------------------------------------------------------
# lemmas (grid densities)
# ---------------------------------------------------------------------------------

LEMMA_HEADER = ["name", "d", "check", "k", "value", "tolerance", "passed", "detail", "seed",
                "grid_h", "k_max", "n"]


def _lemma_rows(nb: NamedBody, cfg: ExperimentConfig) -> list[dict]:
    body = nb.body
    d = body.dim
    h = cfg.grid_h or DEFAULT_GRID_H[d]
    iso = isotropy.isotropic_normalize(body, cfg.n, cfg.seed, verify=False)
    K = iso.body
    base = {"name": nb.name, "d": d, "seed": cfg.seed, "grid_h": h, "k_max": cfg.k_max,
            "n": cfg.n}
    rows = []

    def add(r: density.CheckRow, check=None):
        rows.append({**base, "check": check or r.check, "k": r.k, "value": r.value,
                     "tolerance": r.tolerance, "passed": r.passed, "detail": r.detail})

    f1 = density.midpoint_density(K, h)
    ind = density.grid_indicator_density(K, h)
    conv = density.convolve_double(ind)
    diff = float(np.max(np.abs(conv.values - f1.values)))
    tau = max(conv.tau(), f1.tau())
    add(density.CheckRow("midpoint_identity", 1, diff, tau, diff <= tau))

    chain = density.sk_chain(K, cfg.k_max, h)
    for r in density.check_lemma22(K, cfg.k_max, h, chain=chain, f1=f1):
        add(r)
    for k in range(1, cfg.k_max + 1):
        add(replace(density.centroid_value_check(chain[k]), k=k))
        add(replace(density.logconcavity_check(chain[k], seed=cfg.seed), k=k))

    # covariance contraction of S_k against 2^-k L^2 I on the isotropic body
    L = exact_L(K) or isotropy.estimate_moments(K, cfg.n, cfg.seed).isotropic_constant
    tol = COVARIANCE_REL_TOL * math.sqrt(max(1.0, 1e5 / cfg.n))
    for k in range(1, cfg.k_max + 1):
        S = np.asarray(sample_sk(K, k, cfg.n, cfg.seed + k).points)
        C = np.cov(S, rowvar=False).reshape(d, d)
        target = 2.0**-k * L * L * np.eye(d)
        rel = float(np.linalg.norm(C - target) / np.linalg.norm(target))
        add(density.CheckRow("sk_covariance", k, rel, tol, rel <= tol, "relative Frobenius error"))

    for k in range(1, cfg.k_max + 1):
        p = density.small_ball_probe(K, k, n=cfg.n, seed=cfg.seed + 100 + k, L=L)
        fmax = float(chain[k].values.max())
        slack = fmax + chain[k].tau() + 4 * p.ratio_stderr - p.ratio
        add(density.CheckRow("small_ball_ratio", k, p.ratio, fmax, slack >= 0,
                             f"P(|S_k|<=R)/P(|X|<=R) against grid max of f_Sk; R={p.R:.6g}"))
        add(density.CheckRow("small_ball_markov", k, p.tail_sk, p.markov_bound, p.markov_ok,
                             f"constant-form bound {p.markov_constant_bound:.6g}"))
    return rows


def run_lemmas(bodies: list[NamedBody], cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("lemmas", LEMMA_HEADER)
    eligible = [nb for nb in bodies if nb.body.dim <= 2]
    skipped = [nb.name for nb in bodies if nb.body.dim > 2]
    if skipped:
        log.info("lemmas suite: grid checks skip d = 3 bodies: %s", ", ".join(skipped))
    for rows in _map(lambda nb: _lemma_rows(nb, cfg), eligible):
        for row in rows:
            res.rows.append(row)
            res.summary.append(_summary("lemmas", row["name"], f"{row['check']}[k={row['k']}]",
                                        row["value"], row["tolerance"], row["check"], row["passed"]))
            if not row["passed"]:
                res.failures.append(f"lemmas/{row['name']}: {row['check']} k={row['k']} failed")
    return res


# ---------------------------------------------------------------------------------
# covering
# ---------------------------------------------------------------------------------

COVER_HEADER = ["name", "d", "lambda", "mesh_delta", "count", "greedy_count", "covered",
                "max_gauge", "threshold", "reverified_half_delta", "x_star_delta",
                "classical_bound", "bound_hadwiger_c1", "difference_body_bound", "certificate",
                "seed", "budget"]


def run_covering(bodies: list[NamedBody], cfg: ExperimentConfig, out: Path) -> SuiteResult:
    res = SuiteResult("covering", COVER_HEADER)
    certdir = out / "certificates"
    certdir.mkdir(parents=True, exist_ok=True)

    def one(nb: NamedBody):
        K, d = nb.body, nb.body.dim
        pipe = covering.hadwiger_pipeline(K, cfg.symmetry_budget, cfg.seed, lam=cfg.lam,
                                          mesh_delta=cfg.delta, name=nb.name)
        cert = pipe.certificate
        B = covering.cover_body_for(K, cert)
        half = covering.verify_cover(K, cert.centers, B, cert.lam, cert.delta / 2)
        rel = f"certificates/{nb.name}.cert"
        covering.write_certificate(cert, out / rel)
        L = exact_L(K) or isotropy.estimate_moments(K, max(cfg.n, 10 * d * d),
                                                   cfg.seed).isotropic_constant
        return {"name": nb.name, "d": d, "lambda": cert.lam, "mesh_delta": cert.delta,
                "count": cert.count, "greedy_count": cert.greedy_count, "covered": cert.covered,
                "max_gauge": cert.max_gauge, "threshold": cert.threshold,
                "reverified_half_delta": half.covered, "x_star_delta": pipe.delta,
                "classical_bound": covering.classical_bound(d) if d >= 2 else None,
                "bound_hadwiger_c1": covering.bound_hadwiger(d, L) if d >= 2 else None,
                "difference_body_bound": pipe.difference_body_bound, "certificate": rel,
                "seed": cfg.seed, "budget": cfg.symmetry_budget}

    for row in _map(one, bodies):
        res.rows.append(row)
        name, d = row["name"], row["d"]
        ok = row["covered"] and row["reverified_half_delta"]
        res.summary.append(_summary("covering", name, "covered", row["count"], None,
                                    "verified at delta and delta/2", ok))
        if not ok:
            res.failures.append(f"covering/{name}: certificate does not verify")
        if d >= 2:
            cb = row["classical_bound"]
            res.summary.append(_summary("covering", name, "count", row["count"], cb,
                                        "<= classical_bound", row["count"] <= cb, hard=False))
        if d == 2:
            res.summary.append(_summary("covering", name, "count", row["count"], 6, "<= 6",
                                        row["count"] <= 6))
            if row["count"] > 6:
                res.failures.append(f"covering/{name}: planar count above 6")
            res.summary.append(_summary("covering", name, "count", row["count"], 4, "<= 4",
                                        row["count"] <= 4, hard=False))
    return res


# ---------------------------------------------------------------------------------
# lattice points
# ---------------------------------------------------------------------------------

EHRHART_HEADER = ["name", "d", "volume", "symmetric", "lattice_free", "interior_lattice_free",
                  "n_interior_nonzero", "n_boundary_nonzero", "minkowski_bound", "minkowski_ok", "ehrhart_bound",
                  "lattice_free_volume_bound", "L", "shift_norm", "seed"]


def ehrhart_bodies(bodies: list[NamedBody], seed: int) -> list[NamedBody]:
    """Input bodies centred at their centroids plus seeded symmetric lattice-free bodies."""
    out = []
    for nb in bodies:
        try:
            _, c, _ = exact_moments(nb.body)
        except UnsupportedVolumeError:
            log.info("ehrhart suite: skipping %s (no exact moments)", nb.name)
            continue
        out.append(NamedBody(nb.name, translate(nb.body, -c), {"shift": float(np.linalg.norm(c))}))
    for d in (2, 3):
        for s in range(LATTICE_FREE_SEEDS):
            out.append(named(f"symfree{d}_{s}", symmetric_lattice_free(d, seed * 1000 + s)))
    out.append(named("ehrhart_simplex2", ehrhart_simplex()))
    return out


def _nonzero(points: np.ndarray) -> int:
    return int(np.any(points != 0, axis=1).sum())


def run_ehrhart(bodies: list[NamedBody], cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("ehrhart", EHRHART_HEADER)

    def one(nb: NamedBody):
        rep = covering.ehrhart_check(nb.body)
        d = nb.body.dim
        return {"name": nb.name, "d": d, "volume": rep.volume, "symmetric": rep.symmetric,
                "lattice_free": rep.lattice_free, "interior_lattice_free": rep.interior_lattice_free,
                "n_interior_nonzero": _nonzero(rep.interior_points),
                "n_boundary_nonzero": _nonzero(rep.boundary_points),
                "minkowski_bound": 2.0**d, "minkowski_ok": rep.minkowski_ok,
                "ehrhart_bound": rep.ehrhart_bound, "lattice_free_volume_bound": rep.lattice_free_volume_bound,
                "L": rep.isotropic_constant, "shift_norm": nb.spec.get("shift", 0.0),
                "seed": cfg.seed}

    for row in _map(one, ehrhart_bodies(bodies, cfg.seed)):
        res.rows.append(row)
        name = row["name"]
        res.summary.append(_summary("ehrhart", name, "volume", row["volume"], row["minkowski_bound"],
                                    "<= 2^d if symmetric and lattice-free", row["minkowski_ok"]))
        if not row["minkowski_ok"]:
            res.failures.append(f"ehrhart/{name}: symmetric lattice-free body above 2^d")
        if name.startswith("symfree") and not (row["lattice_free"] and row["symmetric"]):
            res.failures.append(f"ehrhart/{name}: generator produced a non-free body")
    return res


# ---------------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------------

SUMMARY_HEADER = ["suite", "name", "quantity", "measured", "bound", "relation", "passed", "hard",
                  "seed"]


def resolve_bodies(cfg: ExperimentConfig) -> list[NamedBody]:
    if cfg.bodies_path is not None:
        from .bodies import load_bodies
        return load_bodies(cfg.bodies_path)
    return builtin_zoo(cfg.seed)


def run_suite(cfg: ExperimentConfig) -> list[str]:
    """Run the configured suites, write every artifact under ``cfg.out``; return hard failures."""
    cfg.validate()
    bodies = resolve_bodies(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bodies(bodies, out / "bodies.jsonl")
    results = []
    for suite in cfg.suites:
        log.info("running suite %s on %d bodies", suite, len(bodies))
        if suite == "moments":
            r = run_moments(bodies, cfg)
        elif suite == "symmetry":
            r = run_symmetry(bodies, cfg)
        elif suite == "lemmas":
            r = run_lemmas(bodies, cfg)
        elif suite == "covering":
            r = run_covering([nb for nb in bodies if nb.body.dim <= 3], cfg, out)
        else:
            r = run_ehrhart(bodies, cfg)
        write_csv(out / f"{suite}.csv", r.header, r.rows)
        results.append(r)
    summary = [{**s, "seed": cfg.seed} for r in results for s in r.summary]
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return [f for r in results for f in r.failures]
