import json

import numpy as np
import pytest

from oracles import brute_collision_free, brute_drivable
from truncdiff.errors import TooManyObstaclesError, UnknownKindError
from truncdiff.world import (
    SCENE_KINDS,
    Obstacle,
    Scene,
    collision_free,
    comfort,
    drivable,
    gen_corpus,
    gen_scene,
    pdm_score,
    progress,
    scene_tokens,
    ttc_score,
)
from truncdiff.world.scoring import combine


def straight_scene(length=20.0, obstacles=(), w=2.0, dt=0.5):
    route = np.array([[0.0, 0.0], [length, 0.0]])
    gt = np.stack([np.linspace(2.0, 16.0, 8), np.zeros(8)], axis=1)[None]
    return Scene("obstacle", 0, 4.0, 0.0, list(obstacles), route, w, gt, dt)


def line(xs, y=0.0):
    xs = np.asarray(xs, dtype=float)
    return np.stack([xs, np.full_like(xs, y)], axis=1)


def test_gen_scene_deterministic():
    a, b = gen_scene("fork", 7), gen_scene("fork", 7)
    assert a.to_json() == b.to_json()


def test_unknown_kind():
    with pytest.raises(UnknownKindError):
        gen_scene("roundabout", 1)


@pytest.mark.parametrize("kind", SCENE_KINDS)
def test_generated_modes_are_legal(kind):
    for seed in range(25):
        s = gen_scene(kind, seed)
        assert 3.0 <= s.speed <= 12.0
        assert s.half_width > 0 and len(s.route) >= 2
        for mode in s.gt_modes:
            score = pdm_score(mode, s)
            assert score.nc == 1.0 and score.dac == 1.0


def test_scene_mode_counts():
    for seed in range(30):
        assert 1 <= len(gen_scene("obstacle", seed).obstacles) <= 3
        assert 2 <= len(gen_scene("fork", seed).gt_modes) <= 3
        assert 1 <= len(gen_scene("merge", seed).gt_modes) <= 2
        assert 1 <= len(gen_scene("obstacle", seed).gt_modes) <= 2


def test_scene_json_round_trip():
    for kind in SCENE_KINDS:
        s = gen_scene(kind, 3)
        line_ = s.to_json()
        back = Scene.from_json(line_)
        assert back.to_json() == line_
        d = json.loads(line_)
        assert set(d) == {"kind", "seed", "split", "ego", "obstacles", "route", "branches", "half_width", "gt_modes", "dt"}


def test_corpus_split_and_determinism():
    a = gen_corpus(6, 3, 5)
    assert [s.split for s in a] == ["train"] * 6 + ["eval"] * 3
    assert [s.to_json() for s in a] == [s.to_json() for s in gen_corpus(6, 3, 5)]


def test_collision_examples():
    obs = Obstacle((5.0, 0.0), 0.5, (0.0, 0.0))
    s = straight_scene(obstacles=[obs])
    assert not collision_free(line([1, 3, 5, 7]), s)
    assert collision_free(line([1, 3, 5, 7]), straight_scene())
    # waypoint 1 (t = dt) at radius + 1 + 1e-6 from a moving obstacle's position at that time
    moving = Obstacle((3.0, 0.0), 0.5, (2.0, 0.0))
    sc = straight_scene(obstacles=[moving])
    gap = 0.5 + 1.0 + 1e-6
    assert collision_free(np.array([[4.0 - gap, 0.0]]), sc)
    assert not collision_free(np.array([[4.0 - gap + 2e-6, 0.0]]), sc)


def test_drivable_examples():
    s = straight_scene(w=2.0)
    assert drivable(line([0, 5, 10]), s)
    assert not drivable(np.array([[5.0, 2.1]]), s)
    assert drivable(np.array([[5.0, 2.0]]), s)


def test_progress_examples():
    s = straight_scene(20.0)
    assert progress(line([1, 20]), s) == 1.0
    assert progress(line([1, 0]), s) == 0.0
    assert progress(line([1, 15]), s) == pytest.approx(0.75)
    assert progress(np.array([[15.0, 1.3]]), s) == pytest.approx(0.75)


def test_comfort_examples():
    s = straight_scene()
    assert comfort(line(np.arange(1, 9) * 2.0), s) == 1.0
    assert comfort(line([0, 0, 4]), s) == 0.0
    # x = 0.5 i^2 with dt = 0.5 gives exactly 4 m/s^2
    assert comfort(line(0.5 * np.arange(8) ** 2), s) == 1.0
    assert comfort(line(0.51 * np.arange(8) ** 2), s) == 0.0


def test_ttc_examples():
    assert ttc_score(line([2.5, 5.0]), straight_scene()) == 1.0
    # 5 m/s with a 2 m surface gap ahead of the last waypoint: contact after 0.4 s
    near = straight_scene(obstacles=[Obstacle((5.0 + 1.0 + 2.0 + 0.5, 0.0), 0.5, (0.0, 0.0))])
    traj = line([2.5, 5.0])
    assert collision_free(traj, near)
    assert ttc_score(traj, near) == 0.0
    far = straight_scene(obstacles=[Obstacle((5.0 + 1.0 + 10.5 + 0.5, 0.0), 0.5, (0.0, 0.0))])
    assert ttc_score(traj, far) == 1.0
    blocked = straight_scene(obstacles=[Obstacle((5.0, 0.0), 0.5, (0.0, 0.0))])
    assert not collision_free(traj, blocked) and ttc_score(traj, blocked) == 0.0


def test_pdm_combination_examples():
    assert combine(1, 1, 1, 1, 1).total == 1.0
    assert combine(0, 1, 1, 1, 1).total == 0.0
    assert combine(1, 1, 1, 0, 0.5).total == pytest.approx(0.625)


def test_score_bounds_random(rng):
    for seed in range(30):
        s = gen_scene(SCENE_KINDS[seed % 3], seed)
        traj = s.gt_modes[0] + rng.normal(scale=2.0, size=s.gt_modes[0].shape)
        sc = pdm_score(traj, s)
        for v in (sc.nc, sc.dac, sc.ttc, sc.comfort, sc.progress, sc.total):
            assert 0.0 <= v <= 1.0
        assert sc.total <= min(sc.nc, sc.dac)


def geometry_pairs(n=100):
    r = np.random.default_rng(2024)
    pairs = []
    for i in range(n):
        s = gen_scene(SCENE_KINDS[i % 3], 1000 + i)
        base = s.gt_modes[r.integers(len(s.gt_modes))]
        pairs.append((base + r.normal(scale=r.uniform(0.2, 3.0), size=base.shape), s))
    return pairs


def test_geometry_matches_brute_force():
    pairs = geometry_pairs()
    nc = [(collision_free(t, s), brute_collision_free(t, s)) for t, s in pairs]
    dac = [(drivable(t, s), brute_drivable(t, s)) for t, s in pairs]
    assert all(a == b for a, b in nc)
    assert all(a == b for a, b in dac)
    # the sample exercises both outcomes of each check
    assert {a for a, _ in nc} == {True, False}
    assert {a for a, _ in dac} == {True, False}


def test_tokens_without_obstacles():
    s = gen_scene("fork", 1)
    tok, valid = scene_tokens(s)
    assert tok.shape == (12, 6) and valid.sum() == 9 and not valid[9:].any()
    assert set(tok[valid, 5]) <= {1.0, 2.0, 3.0}
    assert np.all(tok[~valid] == 0)


def test_tokens_route_resampling():
    s = straight_scene(20.0, obstacles=[Obstacle((5.0, 1.0), 0.7, (0.1, -0.2))])
    tok, valid = scene_tokens(s)
    assert valid.sum() == 10
    np.testing.assert_allclose(tok[0], [5.0, 1.0, 0.7, 0.1, -0.2, 1.0])
    np.testing.assert_allclose(tok[1], [4.0, 0.0, 0, 0, 0, 2.0])
    np.testing.assert_allclose(tok[2:10, 0], np.arange(8) * 20.0 / 7.0, atol=1e-12)
    assert np.all(tok[2:10, 5] == 3.0)


def test_too_many_obstacles():
    s = straight_scene(obstacles=[Obstacle((float(i), 5.0), 0.5, (0.0, 0.0)) for i in range(4)])
    with pytest.raises(TooManyObstaclesError):
        scene_tokens(s)
