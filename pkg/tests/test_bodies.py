import json

import numpy as np
import pytest

from convexcover.bodies import (BodyFileError, body_from_spec, builtin_zoo, load_bodies, named,
                                random_polytope, spec_of, write_bodies)
from convexcover.geometry import AffineImage, Ball, exact_volume


def test_zoo_names_and_dims():
    zoo = builtin_zoo(0)
    assert len(zoo) == 15
    assert {nb.body.dim for nb in zoo} == {1, 2, 3}


def test_zoo_seeded():
    a = random_polytope(2, 3)
    b = random_polytope(2, 3)
    assert np.array_equal(a.A, b.A)
    assert not np.array_equal(a.A, random_polytope(2, 4).A)


def test_spec_round_trip_is_bit_exact(tmp_path):
    zoo = builtin_zoo(7)
    path = tmp_path / "b.jsonl"
    write_bodies(zoo, path)
    back = load_bodies(path)
    for x, y in zip(zoo, back):
        assert x.name == y.name
        assert exact_volume(x.body) == exact_volume(y.body)


def test_affine_spec(tmp_path):
    spec = {"name": "e", "type": "ball", "center": [0, 0], "radius": 1,
            "affine": {"M": [[2, 0], [0, 1]], "t": [1, 1]}}
    body = body_from_spec(spec)
    assert isinstance(body, AffineImage)
    assert exact_volume(body) == pytest.approx(2 * np.pi)
    assert spec_of("e", body)["affine"]["t"] == [1.0, 1.0]


@pytest.mark.parametrize("line", [
    '{"name": "a", "type": "ball", "center": [0, NaN], "radius": 1}',
    '{"name": "a", "type": "ball", "center": [0, 0], "radius": Infinity}',
    '{"name": "a", "type": "blob"}',
    '{"name": "a", "type": "hpoly", "A": [[1, 0]]}',
    '{"type": "ball", "center": [0], "radius": 1}',
    'not json',
])
def test_bad_body_lines(tmp_path, line):
    path = tmp_path / "b.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(BodyFileError):
        load_bodies(path)


def test_duplicate_names(tmp_path):
    path = tmp_path / "b.jsonl"
    spec = json.dumps({"name": "a", "type": "ball", "center": [0], "radius": 1})
    path.write_text(spec + "\n" + spec + "\n")
    with pytest.raises(BodyFileError):
        load_bodies(path)


def test_named_round_trip_ball():
    nb = named("b", Ball([0.1, 0.2], 0.3))
    assert nb.spec["type"] == "ball"
    assert nb.body.radius == 0.3
