import numpy as np
import pytest

from memforecast import synth


@pytest.fixture
def nested_suite(tmp_path):
    """Small nested synthetic suite: 3 sizes x 3 checkpoints on 30k ids."""
    config = synth.SynthConfig(
        seed=101, universe=30_000,
        models=(synth.SynthModel("tiny", 10**7, 0.01),
                synth.SynthModel("mid", 10**8, 0.02),
                synth.SynthModel("big", 10**9, 0.05)),
        checkpoints=(10_000, 20_000, 30_000),
        mode="nested")
    return synth.generate(config, tmp_path / "nested"), config


@pytest.fixture
def overlap_suite(tmp_path):
    config = synth.SynthConfig(
        seed=202, universe=30_000,
        models=(synth.SynthModel("a", 10**7, 0.05),
                synth.SynthModel("b", 10**8, 0.08)),
        checkpoints=(15_000, 30_000),
        mode="overlap", overlap=0.8)
    return synth.generate(config, tmp_path / "overlap"), config


def random_match_arrays(rng, count, max_cont_len=64, id_stride=3):
    """Sorted ids with random strides and random masks below the bit limit."""
    gaps = rng.integers(1, id_stride + 1, size=count, dtype=np.uint64)
    ids = np.cumsum(gaps) - 1
    masks = rng.integers(0, 1 << 63, size=count, dtype=np.uint64) * 2 \
        + rng.integers(0, 2, size=count, dtype=np.uint64)
    if max_cont_len < 64:
        masks &= np.uint64((1 << max_cont_len) - 1)
    return ids.astype(np.uint64), masks
