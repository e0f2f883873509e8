from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memforecast.core import FormatError, ScoreParams
from memforecast.scorer import (MatchRecord, TokenRecord, is_extractible,
                                memorization_score, memorized_set,
                                scan_to_record_file, scan_token_arrays,
                                scan_tokens, write_token_file)
from memforecast import store
from memforecast.synth import write_token_file_for_masks


def mask_from_pattern(bits):
    return sum(1 << i for i, b in enumerate(bits) if b)


# The four worked examples: per-position match patterns and their scores.
WORKED_EXAMPLES = [
    ([0, 1, 1, 0, 1, 1, 1, 1, 0, 1], Fraction(7, 10)),
    ([0] * 10, Fraction(0)),
    ([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], Fraction(3, 10)),
    ([1] * 10, Fraction(1)),
]
PARAMS_10 = ScoreParams(prompt_len=4, cont_len=10)


class TestScore:
    def test_worked_examples_exact(self):
        for pattern, want in WORKED_EXAMPLES:
            rec = MatchRecord(0, mask_from_pattern(pattern), 10)
            assert memorization_score(rec, PARAMS_10) == want

    def test_all_bits_set_scores_one(self):
        rec = MatchRecord(5, (1 << 32) - 1, 32)
        assert memorization_score(rec, ScoreParams()) == 1

    def test_score_is_exact_rational(self):
        rec = MatchRecord(0, mask_from_pattern(WORKED_EXAMPLES[0][0]), 10)
        score = memorization_score(rec, PARAMS_10)
        assert score == Fraction(7, 10)
        assert float(score) == pytest.approx(0.7)

    def test_threshold_above_valid_bits_rejected(self):
        rec = MatchRecord(0, 0b111, 8)
        with pytest.raises(ValueError):
            memorization_score(rec, ScoreParams(cont_len=16))

    @given(mask=st.integers(0, (1 << 64) - 1), n=st.integers(1, 64))
    def test_score_range_and_granularity(self, mask, n):
        rec = MatchRecord(0, mask, 64)
        score = memorization_score(rec, ScoreParams(cont_len=n))
        assert 0 <= score <= 1
        assert (score * n).denominator == 1


class TestExtractible:
    def test_full_match_is_extractible(self):
        rec = MatchRecord(0, mask_from_pattern([1] * 10), 10)
        assert is_extractible(rec, PARAMS_10)

    def test_partial_match_is_not(self):
        rec = MatchRecord(0, mask_from_pattern(WORKED_EXAMPLES[0][0]), 10)
        assert not is_extractible(rec, PARAMS_10)

    def test_threshold_32_vs_64(self):
        # low 32 bits set, bit 32 clear: extractible at 32, not at 64
        rec = MatchRecord(0, (1 << 32) - 1, 64)
        assert is_extractible(rec, ScoreParams(cont_len=32))
        assert not is_extractible(rec, ScoreParams(cont_len=64))

    @given(mask=st.integers(0, (1 << 64) - 1))
    def test_prefix_monotonicity(self, mask):
        # extractible at 64 implies extractible at 32 (bit-prefix property)
        rec = MatchRecord(0, mask, 64)
        if is_extractible(rec, ScoreParams(cont_len=64)):
            assert is_extractible(rec, ScoreParams(cont_len=32))


def naive_masks(records, prompt_len, max_cont_len):
    """Independent per-token comparator used as the scan oracle."""
    out = {}
    for rec in records:
        mask = 0
        for i in range(max_cont_len):
            if rec.true_tokens[prompt_len + i] == rec.gen_tokens[i]:
                mask |= 1 << i
        out[rec.seq_id] = mask
    return out


def make_records(rng, count, prompt_len, max_cont_len, match_p=0.5):
    records = []
    for seq_id in range(count):
        true = rng.integers(0, 100, size=prompt_len + max_cont_len).tolist()
        gen = []
        for i in range(max_cont_len):
            t = true[prompt_len + i]
            gen.append(t if rng.random() < match_p else t + 1)
        records.append(TokenRecord(seq_id, tuple(true), tuple(gen)))
    return records


class TestScan:
    def test_worked_example_file(self, tmp_path):
        # token file realizing the four worked examples, then scanned
        path = tmp_path / "t.mtok"
        ids = np.arange(4, dtype=np.uint64)
        masks = np.array([mask_from_pattern(p) for p, _ in WORKED_EXAMPLES],
                         dtype=np.uint64)
        write_token_file_for_masks(path, ids, masks, prompt_len=4,
                                   max_cont_len=10)
        got = list(scan_tokens(path))
        scores = [memorization_score(r, PARAMS_10) for r in got]
        assert scores == [Fraction(7, 10), 0, Fraction(3, 10), 1]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.mtok"
        write_token_file(path, [], prompt_len=4, max_cont_len=10)
        assert list(scan_tokens(path)) == []

    def test_matches_naive_comparator(self, tmp_path):
        rng = np.random.default_rng(3)
        records = make_records(rng, 500, prompt_len=3, max_cont_len=12)
        path = tmp_path / "r.mtok"
        write_token_file(path, records, prompt_len=3, max_cont_len=12)
        want = naive_masks(records, 3, 12)
        got = {r.seq_id: r.match_mask for r in scan_tokens(path)}
        assert got == want

    def test_million_records_match_naive(self, tmp_path):
        # bulk oracle check at a small record shape to keep the file modest
        rng = np.random.default_rng(17)
        count, m, nmax = 1_000_000, 2, 8
        path = tmp_path / "big.mtok"
        chunk = 1 << 16
        from memforecast.scorer import TokenFileWriter
        with TokenFileWriter(path, prompt_len=m, max_cont_len=nmax) as w:
            for start in range(0, count, chunk):
                n = min(chunk, count - start)
                ids = np.arange(start, start + n, dtype=np.uint64)
                true = rng.integers(0, 50, size=(n, m + nmax), dtype=np.uint32)
                gen = true[:, m:].copy()
                flip = rng.random(size=gen.shape) < 0.4
                gen[flip] += 1
                w.write_arrays(ids, true, gen)

        _, chunks = scan_token_arrays(path)
        got_masks = np.concatenate([mk for _, mk in chunks])
        assert got_masks.size == count

        # independent naive comparator directly over the file bytes
        import struct
        raw = path.read_bytes()
        rec_size = 8 + 4 * (m + 2 * nmax)
        fmt = "<Q" + "I" * (m + 2 * nmax)
        want = np.empty(count, dtype=np.uint64)
        for r in range(count):
            vals = struct.unpack_from(fmt, raw, 18 + r * rec_size)
            true_cont = vals[1 + m: 1 + m + nmax]
            gen = vals[1 + m + nmax:]
            mask = 0
            for i in range(nmax):
                if true_cont[i] == gen[i]:
                    mask |= 1 << i
            want[r] = mask
        assert np.array_equal(got_masks, want)

    def test_chunking_invariance(self, tmp_path):
        rng = np.random.default_rng(9)
        records = make_records(rng, 777, prompt_len=2, max_cont_len=7)
        path = tmp_path / "c.mtok"
        write_token_file(path, records, prompt_len=2, max_cont_len=7)
        results = []
        for chunk in (1, 13, 100, 10_000):
            _, chunks = scan_token_arrays(path, chunk_records=chunk)
            results.append(np.concatenate([m for _, m in chunks]))
        for r in results[1:]:
            assert np.array_equal(results[0], r)

    def test_threaded_scan_identical(self, tmp_path):
        rng = np.random.default_rng(29)
        records = make_records(rng, 3000, prompt_len=2, max_cont_len=16)
        path = tmp_path / "p.mtok"
        write_token_file(path, records, prompt_len=2, max_cont_len=16)
        _, serial = scan_token_arrays(path, chunk_records=256, threads=1)
        _, parallel = scan_token_arrays(path, chunk_records=256, threads=4)
        a = np.concatenate([m for _, m in serial])
        b = np.concatenate([m for _, m in parallel])
        assert np.array_equal(a, b)

    def test_truncated_record_reports_offset(self, tmp_path):
        rng = np.random.default_rng(4)
        records = make_records(rng, 10, prompt_len=2, max_cont_len=4)
        path = tmp_path / "t.mtok"
        write_token_file(path, records, prompt_len=2, max_cont_len=4)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(FormatError) as err:
            list(scan_tokens(path))
        assert err.value.offset is not None
        assert "byte" in str(err.value)

    def test_count_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(4)
        records = make_records(rng, 4, prompt_len=2, max_cont_len=4)
        path = tmp_path / "t.mtok"
        write_token_file(path, records, prompt_len=2, max_cont_len=4)
        raw = bytearray(path.read_bytes())
        raw[10] = 99  # declared record count
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            list(scan_tokens(path))

    def test_scan_to_record_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        records = make_records(rng, 321, prompt_len=3, max_cont_len=9)
        tok = tmp_path / "x.mtok"
        write_token_file(tok, records, prompt_len=3, max_cont_len=9)
        rec = tmp_path / "x.mrec"
        header = scan_to_record_file(tok, rec, model_name="m",
                                     checkpoint_label="c")
        assert header.record_count == 321
        stored_header, stream = store.read_match_records(rec)
        got = {r.seq_id: r.match_mask for r in stream}
        want = naive_masks(records, 3, 9)
        assert got == want


class TestMemorizedSet:
    def make(self, entries, n=4):
        return [MatchRecord(i, m, n) for i, m in entries]

    def test_definition(self):
        full = 0b1111
        recs = self.make([(0, full), (1, 0b0011), (2, full)])
        got = memorized_set(recs, ScoreParams(cont_len=4))
        assert sorted(int(i) for i in got.ids) == [0, 2]
        assert got.universe_bound == 3

    def test_id_bound(self):
        full = 0b1111
        recs = self.make([(0, full), (1, 0b0011), (2, full)])
        got = memorized_set(recs, ScoreParams(cont_len=4), id_bound=2)
        assert sorted(int(i) for i in got.ids) == [0]
        assert got.universe_bound == 2

    def test_unsorted_rejected(self):
        full = 0b1111
        recs = self.make([(2, full), (1, full)])
        with pytest.raises(FormatError):
            memorized_set(recs, ScoreParams(cont_len=4))

    def test_planted_ids_recovered(self, nested_suite):
        generated, config = nested_suite
        import json
        truth = json.loads(generated.truth_path.read_text())
        for entry in truth["files"]:
            path = generated.manifest_path.parent / entry["path"]
            _, stream = store.read_match_records(path)
            got = memorized_set(stream, ScoreParams(cont_len=32))
            assert [int(i) for i in got.ids] == entry["memorized_ids"]
