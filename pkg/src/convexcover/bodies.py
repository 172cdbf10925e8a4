"""Built-in test bodies and the JSON-lines body file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import spatial

from .geometry import (AffineImage, Ball, ConvexBody, Ellipsoid, GeometryError, HPolytope,
                       VPolytope)

BODY_TYPES = ("hpoly", "vpoly", "ball", "ellipsoid")
ZOO_DIMS = (1, 2, 3)


class BodyFileError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class NamedBody:
    name: str
    body: ConvexBody
    spec: dict


# ---------------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------------


def cube(d: int) -> HPolytope:
    eye = np.eye(d)
    return HPolytope(np.vstack([eye, -eye]), np.r_[np.ones(d), np.zeros(d)])


def simplex(d: int) -> HPolytope:
    """``conv(0, e_1, ..., e_d)``."""
    return HPolytope(np.vstack([-np.eye(d), np.ones((1, d))]), np.r_[np.zeros(d), 1.0])


def cross_polytope(d: int) -> HPolytope:
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
    return HPolytope(signs, np.ones(signs.shape[0]))


def unit_ball(d: int) -> Ball:
    return Ball(np.zeros(d), 1.0)


def _zoo_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5A00, tag)))


def random_polytope(d: int, seed: int, n_points: int | None = None) -> HPolytope:
    """H-form of the hull of seeded Gaussian points (an interval when d = 1)."""
    rng = _zoo_rng(seed, d)
    if d == 1:
        a, b = np.sort(rng.uniform(-1.0, 1.0, 2))
        if b - a < 0.2:
            b = a + 0.2
        return HPolytope([[1.0], [-1.0]], [b, -a])
    n = n_points or (7 if d == 2 else 12)
    while True:
        P = rng.standard_normal((n, d))
        try:
            hull = spatial.ConvexHull(P)
        except spatial.QhullError:
            continue
        if hull.volume > 0.5:
            return VPolytope(P[hull.vertices]).as_hpolytope()


def random_polygon(seed: int, n_points: int = 7) -> HPolytope:
    return random_polytope(2, seed, n_points)


def symmetric_lattice_free(d: int, seed: int, n_dirs: int | None = None) -> HPolytope:
    """Random origin-symmetric polytope scaled so no nonzero integer point is in the closed body.

    The scale is 0.999 times the smallest gauge of a nonzero lattice point in the box
    enclosing the unscaled body, so the result is lattice-free with a thin margin.
    """
    rng = _zoo_rng(seed, 100 + d)
    m = n_dirs or (3 if d == 2 else 5)
    U = rng.standard_normal((m, d))
    U /= np.linalg.norm(U, axis=1)[:, None]
    A = np.vstack([U, -U])
    b = rng.uniform(0.5, 1.5, m)
    P = HPolytope(A, np.r_[b, b])
    if P.as_hpolytope() is None or P.degenerate or not np.isfinite(P.vertices).all():
        raise GeometryError("unbounded random body")
    box = P.bounding_box()
    R = int(math.ceil(np.max(np.abs(np.r_[box.lower, box.upper]))))
    axes = [np.arange(-R, R + 1)] * d
    Z = np.array(np.meshgrid(*axes, indexing="ij"), dtype=float).reshape(d, -1).T
    Z = Z[np.any(Z != 0, axis=1)]
    g = np.asarray(P.gauge(Z))
    scale = 0.999 * min(float(g.min()), 1e6)
    return HPolytope(P.A, P.b * scale)


def ehrhart_simplex() -> HPolytope:
    """``conv((-1,-1), (2,-1), (-1,2))``: centred, area (d+1)^d/d! = 4.5 at d = 2."""
    return VPolytope([[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]).as_hpolytope()


# ---------------------------------------------------------------------------------
# spec dictionaries
# ---------------------------------------------------------------------------------


def _reject_constant(token: str):
    raise BodyFileError(f"non-finite number {token!r} in body file")


def _array(spec: dict, key: str, ndim: int) -> np.ndarray:
    if key not in spec:
        raise BodyFileError(f"body {spec.get('name', '?')!r}: missing field {key!r}")
    try:
        a = np.array(spec[key], dtype=float)
    except (TypeError, ValueError):
        raise BodyFileError(f"body {spec.get('name', '?')!r}: field {key!r} is not numeric") from None
    if a.ndim != ndim:
        raise BodyFileError(f"body {spec.get('name', '?')!r}: field {key!r} has wrong shape")
    if not np.all(np.isfinite(a)):
        raise BodyFileError(f"body {spec.get('name', '?')!r}: non-finite entries in {key!r}")
    return a


def body_from_spec(spec: dict) -> ConvexBody:
    if not isinstance(spec, dict):
        raise BodyFileError("body entry must be an object")
    kind = spec.get("type")
    try:
        if kind == "hpoly":
            body: ConvexBody = HPolytope(_array(spec, "A", 2), _array(spec, "b", 1))
        elif kind == "vpoly":
            body = VPolytope(_array(spec, "vertices", 2))
        elif kind == "ball":
            r = _array(spec, "radius", 0)
            body = Ball(_array(spec, "center", 1), float(r))
        elif kind == "ellipsoid":
            body = Ellipsoid(_array(spec, "center", 1), _array(spec, "shape", 2))
        else:
            raise BodyFileError(f"body {spec.get('name', '?')!r}: unknown type {kind!r}")
        if "affine" in spec:
            aff = spec["affine"]
            if not isinstance(aff, dict):
                raise BodyFileError("affine must be an object with M and t")
            body = AffineImage(body, _array(aff, "M", 2), _array(aff, "t", 1))
    except BodyFileError:
        raise
    except GeometryError as exc:
        raise BodyFileError(f"body {spec.get('name', '?')!r}: {exc}") from None
    return body


def spec_of(name: str, body: ConvexBody) -> dict:
    """Spec dictionary reproducing ``body`` exactly through ``body_from_spec``."""
    if isinstance(body, HPolytope):
        return {"name": name, "type": "hpoly", "A": body.A.tolist(), "b": body.b.tolist()}
    if isinstance(body, VPolytope):
        return {"name": name, "type": "vpoly", "vertices": body.points.tolist()}
    if isinstance(body, Ball):
        return {"name": name, "type": "ball", "center": body.center.tolist(), "radius": body.radius}
    if isinstance(body, Ellipsoid):
        return {"name": name, "type": "ellipsoid", "center": body.center.tolist(),
                "shape": body.shape.tolist()}
    if isinstance(body, AffineImage):
        inner = spec_of(name, body.inner)
        if "affine" in inner:
            raise GeometryError("nested affine images have no flat spec")
        inner["affine"] = {"M": body.M.tolist(), "t": body.t.tolist()}
        return inner
    raise GeometryError(f"no spec form for {type(body).__name__}")


def named(name: str, body: ConvexBody) -> NamedBody:
    """Round-trip through the JSON body dictionary so file-loaded copies are bit-identical."""
    spec = spec_of(name, body)
    return NamedBody(name, body_from_spec(json.loads(json.dumps(spec))), spec)


def builtin_zoo(seed: int, dims=ZOO_DIMS) -> list[NamedBody]:
    out = []
    for d in dims:
        out += [named(f"cube{d}", cube(d)), named(f"simplex{d}", simplex(d)),
                named(f"cross{d}", cross_polytope(d)), named(f"ball{d}", unit_ball(d)),
                named(f"randpoly{d}", random_polytope(d, seed))]
    return out


def load_bodies(path) -> list[NamedBody]:
    """Read a JSON-lines body file; blank lines and lines starting with ``#`` are skipped."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise BodyFileError(f"cannot read body file: {exc}") from None
    bodies, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            spec = json.loads(line, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise BodyFileError(f"{p}:{lineno}: {exc.msg}") from None
        name = spec.get("name") if isinstance(spec, dict) else None
        if not isinstance(name, str) or not name:
            raise BodyFileError(f"{p}:{lineno}: body needs a non-empty name")
        if name in seen:
            raise BodyFileError(f"{p}:{lineno}: duplicate body name {name!r}")
        seen.add(name)
        bodies.append(NamedBody(name, body_from_spec(spec), spec))
    if not bodies:
        raise BodyFileError(f"{p}: no bodies")
    return bodies


def write_bodies(bodies: list[NamedBody], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for nb in bodies:
            fh.write(json.dumps(nb.spec, allow_nan=False) + "\n")
