import numpy as np
import pytest

from sicgram import gramspace as gs
from sicgram import search, weyl


@pytest.fixture(scope="session")
def wh_reference():
    """Reference (fiducial, Gram, PhaseVector) per dimension, built once."""
    cache = {}

    def build(n, seed=0):
        if n not in cache:
            fid = weyl.fiducial_search(n, seed=seed, restrict_zauner=True)
            G, pv = weyl.wh_gram(fid)
            cache[n] = (fid, G, pv)
        return cache[n]

    return build


@pytest.fixture(scope="session")
def solution():
    """One converged, polished search solution per dimension.

    Trial indices for n = 6, 7 are pinned to streams known to reach the
    global minimum (local minima exist there, as expected).
    """
    cache = {}
    pinned = {2: (0, 0), 3: (0, 0), 4: (1, 0), 5: (3, 0), 6: (11, 0), 7: (99, 154)}

    def build(n):
        if n not in cache:
            seed, trial = pinned[n]
            cfg = search.SearchConfig(n=n, seed=seed)
            out = search.run_single_trial(n, seed, trial, cfg)
            assert out.status == search.CONVERGED, f"pinned trial for n={n} did not converge"
            cache[n] = out
        return cache[n]

    return build


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)


def random_phases(n, rng):
    return gs.PhaseVector(n, rng.uniform(0, 2 * np.pi, gs.phase_count(n)))
