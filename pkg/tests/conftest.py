import dataclasses

import pytest

from skelnav.backends import make_oracle_backend
from skelnav.regulator import EpisodeConfig, run_episode
from skelnav.simenv import MapBundle, save_map_bundle
from skelnav.worldgen import closet_bundle, corridor_bundle


@pytest.fixture(scope="session")
def tiny_bundle():
    """Two-leg corridor: a full episode finishes inside the 6-step minimum."""
    return corridor_bundle("tiny_00", [((1, 0), 3.0), ((0, 1), 3.0)])


@pytest.fixture(scope="session")
def closet():
    """Goal-at-start room where every step is the rotate-in-place fallback."""
    return closet_bundle()


@pytest.fixture(scope="session")
def tiny_record(tiny_bundle):
    """One oracle episode on the tiny corridor, shared read-only."""
    ep = tiny_bundle.episodes[0]
    return run_episode(tiny_bundle.world, ep, make_oracle_backend(),
                       EpisodeConfig(), seed=3)


@pytest.fixture(scope="session")
def two_episode_dir(tmp_path_factory, tiny_bundle):
    """The tiny corridor saved to disk with a second, identical-geometry
    episode so multi-episode CLI paths get exercised."""
    ep0 = tiny_bundle.episodes[0]
    ep1 = dataclasses.replace(ep0, id="tiny_01")
    bundle = MapBundle(world=tiny_bundle.world, episodes=[ep0, ep1])
    out = tmp_path_factory.mktemp("bundle")
    save_map_bundle(out, bundle)
    return out
