"""Seeded random instance generators shared by the CLI checks and tests."""

from __future__ import annotations

import numpy as np

from .measures import DiscreteMeasure

__all__ = [
    "random_measure",
    "random_equal_mass_pair",
    "random_pair",
    "random_triple",
]


def random_measure(
    rng: np.random.Generator,
    dim: int,
    max_atoms: int = 10,
    max_mass: float = 5.0,
    box: float = 1.5,
    allow_empty: bool = False,
) -> DiscreteMeasure:
    """A measure with uniform atom positions and a uniform total mass."""
    if allow_empty and rng.random() < 0.05:
        return DiscreteMeasure(dim)
    n = int(rng.integers(1, max_atoms + 1))
    positions = rng.uniform(0.0, box, (n, dim))
    weights = rng.uniform(0.1, 1.0, n)
    total = rng.uniform(0.05 * max_mass, max_mass)
    return DiscreteMeasure(dim, positions, weights * (total / weights.sum()))


def random_pair(rng, dim, max_atoms=10, max_mass=5.0, box=1.5, allow_empty=False):
    return (
        random_measure(rng, dim, max_atoms, max_mass, box, allow_empty),
        random_measure(rng, dim, max_atoms, max_mass, box, allow_empty),
    )


def random_equal_mass_pair(rng, dim, max_atoms=10, max_mass=5.0, box=1.5):
    mu, nu = random_pair(rng, dim, max_atoms, max_mass, box)
    return mu, nu.scale(mu.total_mass() / nu.total_mass())


def random_triple(rng, dim, max_atoms=8, max_mass=4.0, box=1.5):
    return tuple(random_measure(rng, dim, max_atoms, max_mass, box) for _ in range(3))
