import numpy as np
import pytest

from skelnav.errors import InputError
from skelnav.regulator import decompose_instruction
from skelnav.simenv import geodesic_distance
from skelnav.worldgen import (closet_bundle, corridor_bundle, densify_polyline,
                              random_blob_mask, random_corridor_bundle,
                              standard_maze_suite)


def test_blob_mask_is_seeded():
    a = random_blob_mask((120, 80), np.random.default_rng(3))
    b = random_blob_mask((120, 80), np.random.default_rng(3))
    c = random_blob_mask((120, 80), np.random.default_rng(4))
    assert a.dtype == np.bool_ and a.shape == (120, 80)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert 0 < a.sum() < a.size


def test_densify_polyline_spacing():
    pts = densify_polyline([(0.0, 0.0), (3.3, 0.0)], spacing=0.5)
    assert pts[0] == (0.0, 0.0)
    assert pts[-1] == (3.3, 0.0)
    gaps = [np.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])]
    assert all(g <= 0.5 + 1e-9 for g in gaps)


def test_corridor_bundle_invariants():
    bundle = corridor_bundle("c0", [((1, 0), 3.0), ((0, -1), 2.6), ((1, 0), 3.4)])
    world, ep = bundle.world, bundle.episodes[0]
    sentences = decompose_instruction(ep.instruction)
    assert len(sentences) == 3                 # one sentence per leg
    assert len(ep.subtask_hints) == 3          # one hint per sentence
    assert len(world.objects) == 3             # a named object at each corner
    assert world.is_free(ep.start.x, ep.start.y)
    assert world.is_free(*ep.goal)
    for p in ep.reference_path:
        assert world.is_free(*p)
    assert ep.subtask_hints[-1] == ep.goal
    # the goal is reachable and roughly as far as the legs add up to
    # (shorter is fine: the geodesic cuts corners across the corridor width)
    d = geodesic_distance(world, (ep.start.x, ep.start.y), ep.goal)
    assert 0.7 * 9.0 <= d <= 1.05 * 9.0


def test_corridor_bundle_needs_legs():
    with pytest.raises(InputError):
        corridor_bundle("c1", [])


def test_standard_maze_suite_is_fixed():
    suite = standard_maze_suite()
    assert [b.episodes[0].id for b in suite] == [f"maze_{k:02d}" for k in range(20)]
    again = standard_maze_suite()
    for a, b in zip(suite, again):
        assert np.array_equal(a.world.free, b.world.free)
        assert a.episodes[0].instruction == b.episodes[0].instruction
    # leg counts cycle 6..9, so subtask counts do too
    counts = [len(decompose_instruction(b.episodes[0].instruction)) for b in suite]
    assert counts == [6 + (k % 4) for k in range(20)]


def test_closet_bundle():
    bundle = closet_bundle(n_sentences=4)
    ep = bundle.episodes[0]
    assert len(decompose_instruction(ep.instruction)) == 4
    assert len(ep.subtask_hints) == 4
    assert ep.goal == (ep.start.x, ep.start.y)
    assert bundle.world.is_free(ep.start.x, ep.start.y)
    assert geodesic_distance(bundle.world, (ep.start.x, ep.start.y), ep.goal) == 0.0


def test_random_corridor_bundle_is_seeded():
    a = random_corridor_bundle("r0", np.random.default_rng(9))
    b = random_corridor_bundle("r0", np.random.default_rng(9))
    c = random_corridor_bundle("r0", np.random.default_rng(10))
    assert np.array_equal(a.world.free, b.world.free)
    assert a.episodes[0].instruction == b.episodes[0].instruction
    assert a.episodes[0].goal == b.episodes[0].goal
    assert not np.array_equal(a.world.free, c.world.free)
