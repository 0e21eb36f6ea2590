"""Counter-based random substreams.

Every block of trials draws from its own Philox stream keyed by
``(seed, block, role)``, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "forward": 0,
    "loopback": 1,
    "fpa_forward": 2,
    "fpa_loopback": 3,
    "pilot_forward": 4,
    "pilot_loopback": 5,
    "fixed_angles": 6,
    "approx": 7,
}


def substream(seed: int, block: int, role: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block), ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples, CN(0, 1)."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)
