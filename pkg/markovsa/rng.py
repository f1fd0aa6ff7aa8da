"""Counter-based random streams, one per Monte Carlo run"""

import numpy as np

# Stream tags within a run
CHAIN_STREAM = 0
INITIAL_STREAM = 1


def run_generator(seed: int, run_index: int = 0, stream: int = CHAIN_STREAM) -> np.random.Generator:
    """
    Generator for run `run_index` of a batch seeded with `seed`.

    Streams depend only on (seed, run_index, stream), so a run draws the same
    numbers whatever batch or thread it is executed in.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run_index), int(stream)))
    return np.random.Generator(np.random.Philox(sequence))
