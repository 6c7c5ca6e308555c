from __future__ import annotations

import numpy as np
import pytest

from quasibeam.geometry import ProfileSpec, SurfaceGeometry


@pytest.fixture(scope="session")
def geom():
    """Default neck profile alpha = 1/2, Euclidean ends beyond r0 = 1.5."""
    return SurfaceGeometry(ProfileSpec(alpha=0.5))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
