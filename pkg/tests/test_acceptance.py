"""Acceptance suite: one test per shipping criterion, printed pass/fail.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. Every tolerance is pinned here; nothing is deferred.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from memforecast import fixtures, store, synth
from memforecast.benchmark import run_benchmark
from memforecast.core import FormatError, ScoreParams
from memforecast.distribution import histogram, spike_mass, tail_fit
from memforecast.predictor import (checkpoint_memorized_set, confusion,
                                   phi_correlation, precision_recall)
from memforecast.scaling import (equi_compute_frontier, grid_from_csv,
                                 grid_to_csv, recommend)
from memforecast.scorer import MatchRecord, memorization_score, memorized_set


def report(name: str, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: PASS"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)


@pytest.fixture(scope="module")
def oracle_suite(tmp_path_factory):
    """Nested synthetic suite on a 10^5 universe, shared across criteria."""
    config = synth.SynthConfig(
        seed=404, universe=100_000,
        models=(synth.SynthModel("small", 10**7, 0.015),
                synth.SynthModel("large", 10**8, 0.04)),
        checkpoints=(40_000, 100_000), mode="nested")
    generated = synth.generate(config, tmp_path_factory.mktemp("oracle"))
    return generated, config


def test_worked_score_examples():
    """Four published worked examples score exactly 0.7, 0, 0.3, 1.0."""
    start = time.perf_counter()
    patterns = [
        ([0, 1, 1, 0, 1, 1, 1, 1, 0, 1], Fraction(7, 10)),
        ([0] * 10, Fraction(0)),
        ([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], Fraction(3, 10)),
        ([1] * 10, Fraction(1)),
    ]
    params = ScoreParams(prompt_len=4, cont_len=10)
    for pattern, want in patterns:
        mask = sum(1 << i for i, b in enumerate(pattern) if b)
        got = memorization_score(MatchRecord(0, mask, 10), params)
        assert got == want  # exact rational equality, no tolerance
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report("worked-score-examples", f"{elapsed * 1000:.1f} ms")


def naive_pair_stats(p_ids, t_ids, bound):
    """Per-element reference: loop over every id in the universe."""
    p, t = set(int(i) for i in p_ids), set(int(i) for i in t_ids)
    tp = fp = fn = tn = 0
    for i in range(bound):
        in_p, in_t = i in p, i in t
        if in_p and in_t:
            tp += 1
        elif in_p:
            fp += 1
        elif in_t:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    na, nb = tp + fp, tp + fn
    if na in (0, bound) or nb in (0, bound):
        phi = None
    else:
        phi = (bound * tp - na * nb) / (
            math.sqrt(na * (bound - na)) * math.sqrt(nb * (bound - nb)))
    return (tp, fp, fn, tn), precision, recall, phi


def test_oracle_equivalence(oracle_suite):
    """Bitset statistics equal a naive per-element loop on a 10^5 universe."""
    start = time.perf_counter()
    generated, config = oracle_suite
    suite = store.load_manifest(generated.manifest_path)

    # naive path: per-record python extraction, then per-id loops
    naive_sets = {}
    package_sets = {}
    for model in suite.models:
        for cp in model.checkpoints:
            _, stream = store.read_match_records(suite.record_path(cp))
            ids = [r.seq_id for r in stream
                   if r.match_mask & 0xFFFFFFFF == 0xFFFFFFFF
                   and r.seq_id < cp.sequences_seen]
            naive_sets[(model.name, cp.label)] = ids
            package_sets[(model.name, cp.label)] = checkpoint_memorized_set(
                suite, model.name, cp.label)

    keys = list(package_sets)
    for key in keys:
        got = package_sets[key]
        assert [int(i) for i in got.ids] == naive_sets[key]
        bound = got.universe_bound
        assert len(got) / bound == len(naive_sets[key]) / bound  # fractions

    for i, key_p in enumerate(keys):
        for key_t in keys[i + 1:]:
            p_set, t_set = package_sets[key_p], package_sets[key_t]
            bound = min(p_set.universe_bound, t_set.universe_bound)
            c = confusion(p_set, t_set)
            counts, precision, recall, phi = naive_pair_stats(
                naive_sets[key_p], naive_sets[key_t], bound)
            assert (c.tp, c.fp, c.fn, c.tn) == counts
            assert precision_recall(c) == (precision, recall)
            assert phi_correlation(p_set, t_set) == phi
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report("oracle-equivalence", f"{elapsed:.1f} s, universe 1e5")


def test_nested_checkpoint_property(oracle_suite):
    """Nested mode: precision(early->late) = 1 and recall = |early|/|late|."""
    generated, config = oracle_suite
    suite = store.load_manifest(generated.manifest_path)
    checked = 0
    for model in suite.models:
        sets = [checkpoint_memorized_set(suite, model.name, cp.label)
                for cp in model.checkpoints]
        for early, late in zip(sets, sets[1:]):
            c = confusion(early, late)
            precision, recall = precision_recall(c)
            assert precision == 1.0  # exact
            bound = min(early.universe_bound, late.universe_bound)
            assert recall == len(early) / late.count_below(bound)  # exact
            assert precision >= recall  # the published qualitative shape
            checked += 1
    assert checked >= 2
    report("nested-checkpoint-property", f"{checked} adjacent pairs")


def test_fixture_replay_grid_and_frontier():
    """Re-encoded published tables replay verbatim through grid/frontier."""
    # grid: load + re-export is byte-identical for both tables
    for name in (fixtures.SIZE_GRID, fixtures.CHECKPOINT_GRID):
        text = fixtures.fixture_text(name)
        assert grid_to_csv(grid_from_csv(text)) == text

    size_rows = fixtures.load_grid(fixtures.SIZE_GRID)
    combined = fixtures.combined_12b_grid()

    # frontier at a budget admitting every fully-trained size row
    budget = max(r.cost for r in size_rows)
    frontier = equi_compute_frontier(size_rows, [budget])
    assert frontier[0].row.model == "6.9B"
    assert frontier[0].row.recall == 0.795
    # frontier entries quote fixture values verbatim
    per_row_budgets = [r.cost for r in combined]
    for entry in equi_compute_frontier(combined, per_row_budgets):
        assert entry.row in combined

    # recommend with a recall floor the budget cannot meet
    rec = recommend(budget, combined, min_recall=0.9)
    assert not rec.feasible
    assert rec.smallest_sufficient.sequences_seen == 126_000_000
    assert rec.smallest_sufficient.recall == 0.916
    report("fixture-replay", "grids byte-identical; recommend -> 126e6 row")


def test_distribution_recovery(tmp_path):
    """Planted Zipf(2.0) tail and 1.62% spike recovered at 10^6 samples."""
    start = time.perf_counter()
    config = synth.SynthConfig(
        seed=505, universe=1_000_000,
        models=(synth.SynthModel("m", 10**8, 0.0162),),
        checkpoints=(1_000_000,), mode="nested",
        tail=synth.TailSpec("zipf", 2.0), tail_mass=0.35)
    generated = synth.generate(config, tmp_path / "dist")
    path = generated.manifest_path.parent / "records/m__c1000000.mrec"
    _, chunks = store.read_match_arrays(path)
    hist = histogram(chunks, ScoreParams(cont_len=32))

    fit = tail_fit(hist)
    assert fit.preferred == "power-law"
    assert abs(fit.pl_exponent - 2.0) <= 0.1
    sigma = math.sqrt(0.0162 * (1 - 0.0162) / 1_000_000)
    assert abs(spike_mass(hist) - 0.0162) <= 3 * sigma
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report("distribution-recovery",
           f"exponent {fit.pl_exponent:.3f}, spike {spike_mass(hist):.5f}, "
           f"{elapsed:.1f} s")


def test_threshold_monotonicity(oracle_suite):
    """Memorized set at N=64 is a subset of the N=32 set, exhaustively."""
    generated, config = oracle_suite
    suite = store.load_manifest(generated.manifest_path)
    files = 0
    for model in suite.models:
        for cp in model.checkpoints:
            path = suite.record_path(cp)
            _, stream = store.read_match_records(path)
            records = list(stream)
            at_32 = memorized_set(iter(records), ScoreParams(cont_len=32))
            at_64 = memorized_set(iter(records), ScoreParams(cont_len=64))
            ids_32 = set(int(i) for i in at_32.ids)
            ids_64 = set(int(i) for i in at_64.ids)
            assert ids_64 <= ids_32
            assert len(ids_64) < len(ids_32)  # the ablation is non-trivial
            files += 1
    report("threshold-monotonicity", f"{files} record files, exhaustive")


def test_format_round_trip_and_corruption(tmp_path):
    """10^6-record file round-trips bit-exactly; all corruptions rejected."""
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    count = 1_000_000
    ids = np.cumsum(rng.integers(1, 3, size=count, dtype=np.uint64)) - 1
    masks = rng.integers(0, 1 << 63, size=count, dtype=np.uint64) * 2 \
        + rng.integers(0, 2, size=count, dtype=np.uint64)
    original = tmp_path / "one.mrec"
    with store.MatchRecordWriter(original, model_name="m",
                                 checkpoint_label="c", prompt_len=32,
                                 max_cont_len=64) as w:
        for lo in range(0, count, 1 << 16):
            w.write_arrays(ids[lo: lo + (1 << 16)], masks[lo: lo + (1 << 16)])

    # write -> read -> rewrite is byte-identical
    header, chunks = store.read_match_arrays(original)
    rewritten = tmp_path / "two.mrec"
    with store.MatchRecordWriter(rewritten, model_name=header.model_name,
                                 checkpoint_label=header.checkpoint_label,
                                 prompt_len=header.prompt_len,
                                 max_cont_len=header.max_cont_len) as w:
        for i, m in chunks:
            w.write_arrays(i, m)
    raw = original.read_bytes()
    assert raw == rewritten.read_bytes()

    # 1000 random single-byte corruptions, every one rejected with a diagnostic
    corrupt_path = tmp_path / "corrupt.mrec"
    rejected = 0
    for k in range(1000):
        pos = int(rng.integers(0, len(raw)))
        delta = int(rng.integers(1, 256))
        corrupted = bytearray(raw)
        corrupted[pos] = (corrupted[pos] + delta) % 256
        corrupt_path.write_bytes(bytes(corrupted))
        try:
            store.verify_match_file(corrupt_path)
        except FormatError as exc:
            assert str(exc)  # carries a diagnostic
            rejected += 1
    assert rejected == 1000
    elapsed = time.perf_counter() - start
    report("format-round-trip",
           f"1e6 records byte-identical; 1000/1000 corruptions rejected; "
           f"{elapsed:.0f} s")


def test_scan_throughput():
    """Scanner sustains >= 10 million token comparisons per second."""
    result = run_benchmark(records=200_000, prompt_len=32, max_cont_len=64)
    assert result.comparisons_per_second >= 10_000_000
    report("scan-throughput",
           f"{result.comparisons_per_second / 1e6:.0f}M comparisons/s")
