"""Random piecewise-constant weights shared by the weight tests and acceptance."""

import numpy as np

from poissona2.weights import PiecewiseWeight
from conftest import random_spd


def rough_weight(rng, leaf_depth=None, cond=20.0):
    n = rng.integers(1, 4) if leaf_depth is None else leaf_depth
    mats = random_spd(rng, (1 << n) + 2, cond=cond)
    return PiecewiseWeight(mats[2:], mats[0], mats[1])


def smooth_weight(rng, amplitude, leaf_depth=3):
    """Identity plus a small symmetric perturbation with shared tails."""
    n = 1 << leaf_depth
    pert = rng.uniform(-1, 1, (n, 3)) * amplitude
    leaves = np.empty((n, 2, 2))
    leaves[:, 0, 0] = 1 + pert[:, 0]
    leaves[:, 0, 1] = leaves[:, 1, 0] = 0.5 * pert[:, 1]
    leaves[:, 1, 1] = 1 + pert[:, 2]
    return PiecewiseWeight(leaves)


def corpus(seed=7, size=120):
    rng = np.random.default_rng(seed)
    return [rough_weight(rng) for _ in range(size)]
