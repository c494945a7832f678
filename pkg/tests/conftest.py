import numpy as np
import pytest

from unbalanced_ot.measures import DiscreteMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def dirac(x, w=1.0):
    return DiscreteMeasure.dirac(np.atleast_1d(x), w)


@pytest.fixture
def dirac_pair():
    return dirac([0.0]), dirac([1.0])


def measures_close(a: DiscreteMeasure, b: DiscreteMeasure, rtol=1e-12, atol=1e-14) -> bool:
    """Same sorted supports, weights equal up to float reassociation."""
    if a.dim != b.dim or a.atom_count != b.atom_count:
        return False
    return bool(
        np.array_equal(a.positions, b.positions)
        and np.allclose(a.weights, b.weights, rtol=rtol, atol=atol)
    )
