import numpy as np
import pytest

from ctxdbn.dbn import DbnModel, Structure, random_cpds
from ctxdbn.eventlog import EncodedTrace


def random_model(K, nE, nB=1, nS=1, seed=0, structure=None):
    rng = np.random.default_rng(seed)
    if structure is None:
        structure = {
            (False, False): Structure.PFA,
            (True, False): Structure.BACKGROUND,
            (False, True): Structure.SYMPTOM,
            (True, True): Structure.FULL,
        }[(nB > 1, nS > 1)]
    return DbnModel(structure, random_cpds(K, nE, nB, nS, rng))


def random_trace(rng, T, nE, nB=1, nS=1, case_id="c"):
    return EncodedTrace(
        case_id,
        rng.integers(nE, size=T),
        rng.integers(nB, size=T),
        rng.integers(nS, size=T),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
