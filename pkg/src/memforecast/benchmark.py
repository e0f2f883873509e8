"""Throughput benchmark for the token scanner.

Generates a synthetic token file and measures sustained token comparisons per
second through scan_token_arrays. Engineering target: at least 10 million
comparisons per second per worker on commodity hardware.
"""

from __future__ import annotations

import argparse
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import scorer


@dataclass(frozen=True)
class BenchResult:
    records: int
    token_comparisons: int
    seconds: float

    @property
    def comparisons_per_second(self) -> float:
        return self.token_comparisons / self.seconds

    def __str__(self) -> str:
        return (f"{self.records} records, {self.token_comparisons} comparisons "
                f"in {self.seconds:.3f}s -> "
                f"{self.comparisons_per_second / 1e6:.1f}M comparisons/s")


def _write_input(path: Path, records: int, prompt_len: int, max_cont_len: int,
                 seed: int) -> None:
    rng = np.random.default_rng(seed)
    chunk = 1 << 15
    with scorer.TokenFileWriter(path, prompt_len=prompt_len,
                                max_cont_len=max_cont_len) as w:
        for start in range(0, records, chunk):
            n = min(chunk, records - start)
            ids = np.arange(start, start + n, dtype=np.uint64)
            true = rng.integers(0, 1 << 16, size=(n, prompt_len + max_cont_len),
                                dtype=np.uint32)
            gen = true[:, prompt_len:].copy()
            flip = rng.random(size=gen.shape) < 0.5
            gen[flip] ^= 1
            w.write_arrays(ids, true, gen)


def run_benchmark(records: int = 200_000, prompt_len: int = 32,
                  max_cont_len: int = 64, seed: int = 7,
                  threads: int = 1) -> BenchResult:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bench.mtok"
        _write_input(path, records, prompt_len, max_cont_len, seed)
        start = time.perf_counter()
        total = 0
        _, chunks = scorer.scan_token_arrays(path, threads=threads)
        for ids, masks in chunks:
            total += ids.size
        elapsed = time.perf_counter() - start
    return BenchResult(total, total * max_cont_len, elapsed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Benchmark token-scan throughput")
    parser.add_argument("--records", type=int, default=200_000)
    parser.add_argument("--prompt-len", type=int, default=32)
    parser.add_argument("--cont-len", type=int, default=64)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    result = run_benchmark(args.records, args.prompt_len, args.cont_len,
                           threads=args.threads)
    print(result)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
