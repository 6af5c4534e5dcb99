"""Counter-based random streams. Philox keeps runs reproducible across platforms."""

import numpy as np

RNG_NAME = "numpy-philox4x64-v1"


def make_rng(seed: int | np.random.Generator, stream: int = 0) -> np.random.Generator:
    """Generator for `seed`; `stream` > 0 selects an independent jumped-ahead stream."""
    if isinstance(seed, np.random.Generator):
        return seed
    bitgen = np.random.Philox(int(seed))
    if stream:
        bitgen = bitgen.jumped(stream)
    return np.random.Generator(bitgen)
