"""Shared fixtures: the frozen reference orbit and its manifold data.

The NRHO initial condition is the repository's frozen reference (also
embedded in configs/): a southern L2 member with period 1.466695 ND,
located by differential correction + continuation (see dev/find_nrho.py).
Closure residual at 1e-12 integration tolerance is ~6e-12.
"""

from pathlib import Path

import numpy as np
import pytest

from cislunargame.manifold import build_manifold
from cislunargame.orbit import load_orbit
from cislunargame.params import EARTH_MOON

NRHO_STATE = np.array([
    1.0186592906664071, 0.0, -0.1796720946893309,
    0.0, -0.0958140437020706, 0.0,
])
NRHO_PERIOD = 1.466695

# Frozen monodromy spectrum of the reference orbit (regression anchors).
NRHO_UNSTABLE_MULTIPLIER = -1.9335438448
NRHO_STABLE_MULTIPLIER = -0.5171850655

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def orbit():
    return load_orbit(NRHO_STATE, NRHO_PERIOD, EARTH_MOON, tol=1e-6)


@pytest.fixture(scope="session")
def manifold(orbit):
    return build_manifold(orbit)
