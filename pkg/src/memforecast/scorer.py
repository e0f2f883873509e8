"""Memorization scoring: compare true continuations against greedy generations.

The atomic comparison result per sequence is a 64-bit match mask: bit i is set
iff the generated token at continuation position i equals the true token. The
score at threshold N is the popcount of the low N bits divided by N, an exact
rational; a sequence is extractible at N when all low N bits are set.

Token file layout (.mtok, little-endian):
    magic "MTOK" | version u32 | prompt_len u8 | max_cont_len u8 | count u64
    records: seq_id u64
             | (prompt_len + max_cont_len) true token ids u32
             | max_cont_len generated token ids u32
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import MASK_WIDTH, FormatError, ScoreParams
from .sets import MemorizedSet
from . import store

MTOK_MAGIC = b"MTOK"
MTOK_VERSION = 1
MTOK_HEADER = struct.Struct("<4sIBBQ")

CHUNK_RECORDS = 1 << 15


@dataclass(frozen=True)
class TokenRecord:
    """True tokens (prompt + continuation) and the model's greedy continuation."""

    seq_id: int
    true_tokens: tuple[int, ...]
    gen_tokens: tuple[int, ...]


@dataclass(frozen=True)
class MatchRecord:
    """Per-sequence continuation match mask; bits >= valid_bits are zero."""

    seq_id: int
    match_mask: int
    valid_bits: int

    def __post_init__(self):
        if not 1 <= self.valid_bits <= MASK_WIDTH:
            raise ValueError(f"valid_bits {self.valid_bits} outside [1, {MASK_WIDTH}]")
        if self.match_mask >> self.valid_bits:
            raise ValueError(
                f"mask bits set at or above valid_bits={self.valid_bits}")


def _low_mask(n: int) -> int:
    return (1 << n) - 1


def _check_threshold(rec_valid_bits: int, params: ScoreParams) -> int:
    n = params.cont_len
    if n > rec_valid_bits:
        raise ValueError(
            f"threshold {n} exceeds the record's {rec_valid_bits} valid mask bits")
    return n


def memorization_score(rec: MatchRecord, params: ScoreParams) -> Fraction:
    """Fraction of the first ``params.cont_len`` continuation tokens matched.

    Exact rational in [0, 1]; equals 1 iff every compared token matched.
    """
    n = _check_threshold(rec.valid_bits, params)
    return Fraction((rec.match_mask & _low_mask(n)).bit_count(), n)


def is_extractible(rec: MatchRecord, params: ScoreParams) -> bool:
    """True iff the memorization score at this threshold is exactly 1."""
    n = _check_threshold(rec.valid_bits, params)
    low = _low_mask(n)
    return rec.match_mask & low == low


@dataclass(frozen=True)
class TokenFileHeader:
    prompt_len: int
    max_cont_len: int
    record_count: int
    version: int = MTOK_VERSION

    @property
    def record_size(self) -> int:
        return 8 + 4 * (self.prompt_len + 2 * self.max_cont_len)


def _read_token_header(f, path) -> TokenFileHeader:
    buf = f.read(MTOK_HEADER.size)
    if len(buf) != MTOK_HEADER.size:
        raise FormatError("truncated token-file header", path=path, offset=len(buf))
    magic, version, prompt_len, max_cont_len, count = MTOK_HEADER.unpack(buf)
    if magic != MTOK_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MTOK_MAGIC!r}",
                          path=path, offset=0)
    if version != MTOK_VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=4)
    if not 1 <= max_cont_len <= MASK_WIDTH:
        raise FormatError(f"max_cont_len {max_cont_len} outside [1, {MASK_WIDTH}]",
                          path=path, offset=9)
    if prompt_len < 1:
        raise FormatError(f"prompt_len {prompt_len} must be >= 1", path=path,
                          offset=8)
    return TokenFileHeader(prompt_len, max_cont_len, count)


class TokenFileWriter:
    """Streaming token-file writer; patches the record count on close."""

    def __init__(self, path: str | Path, *, prompt_len: int, max_cont_len: int):
        if not 1 <= max_cont_len <= MASK_WIDTH:
            raise ValueError(f"max_cont_len {max_cont_len} outside [1, {MASK_WIDTH}]")
        if prompt_len < 1:
            raise ValueError(f"prompt_len {prompt_len} must be >= 1")
        self.path = Path(path)
        self.prompt_len = prompt_len
        self.max_cont_len = max_cont_len
        self._count = 0
        self._f = open(self.path, "wb")
        self._f.write(MTOK_HEADER.pack(MTOK_MAGIC, MTOK_VERSION, prompt_len,
                                       max_cont_len, 0))

    def write_arrays(self, seq_ids: np.ndarray, true_tokens: np.ndarray,
                     gen_tokens: np.ndarray) -> None:
        n = seq_ids.shape[0]
        if true_tokens.shape != (n, self.prompt_len + self.max_cont_len):
            raise ValueError(f"true_tokens must be (n, {self.prompt_len + self.max_cont_len})")
        if gen_tokens.shape != (n, self.max_cont_len):
            raise ValueError(f"gen_tokens must be (n, {self.max_cont_len})")
        rec = np.zeros(n, dtype=self._dtype())
        rec["seq_id"] = seq_ids
        rec["true"] = true_tokens
        rec["gen"] = gen_tokens
        self._f.write(rec.tobytes())
        self._count += n

    def write_records(self, records: Iterable[TokenRecord]) -> None:
        for rec in records:
            self.write_arrays(
                np.array([rec.seq_id], dtype="<u8"),
                np.array([rec.true_tokens], dtype="<u4"),
                np.array([rec.gen_tokens], dtype="<u4"))

    def _dtype(self) -> np.dtype:
        return np.dtype([("seq_id", "<u8"),
                         ("true", "<u4", (self.prompt_len + self.max_cont_len,)),
                         ("gen", "<u4", (self.max_cont_len,))])

    def close(self) -> None:
        if self._f.closed:
            return
        self._f.seek(MTOK_HEADER.size - 8)
        self._f.write(struct.pack("<Q", self._count))
        self._f.close()

    def __enter__(self) -> "TokenFileWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close() if exc_type is None else self._f.close()


def write_token_file(path: str | Path, records: Iterable[TokenRecord], *,
                     prompt_len: int, max_cont_len: int) -> None:
    with TokenFileWriter(path, prompt_len=prompt_len,
                         max_cont_len=max_cont_len) as w:
        w.write_records(records)


def _masks_from_chunk(chunk: np.ndarray, prompt_len: int,
                      max_cont_len: int) -> np.ndarray:
    eq = chunk["true"][:, prompt_len:] == chunk["gen"]
    packed = np.packbits(eq, axis=1, bitorder="little")
    words = np.zeros((eq.shape[0], 8), dtype=np.uint8)
    words[:, : packed.shape[1]] = packed
    return words.view("<u8").ravel()


def scan_token_arrays(path: str | Path, *, chunk_records: int = CHUNK_RECORDS,
                      threads: int = 1,
                      ) -> tuple[TokenFileHeader, Iterator[tuple[np.ndarray, np.ndarray]]]:
    """Scan a token file into (seq_ids, match_masks) chunks, in file order.

    The output is a pure function of the file bytes: chunk size and thread
    count never change the concatenated result. Truncated or misdeclared
    files raise FormatError naming the byte offset.
    """
    path = Path(path)
    size = path.stat().st_size
    f = open(path, "rb")
    try:
        header = _read_token_header(f, path)
    except Exception:
        f.close()
        raise
    rec_size = header.record_size
    payload = size - MTOK_HEADER.size
    if payload != header.record_count * rec_size:
        f.close()
        full = payload // rec_size
        if payload % rec_size:
            msg = (f"truncated record: payload holds {payload} bytes, not a "
                   f"multiple of the {rec_size}-byte record size")
        else:
            msg = (f"length mismatch: payload holds {full} records but header "
                   f"declares {header.record_count}")
        raise FormatError(msg, path=path, offset=MTOK_HEADER.size + full * rec_size)
    dtype = np.dtype([("seq_id", "<u8"),
                      ("true", "<u4", (header.prompt_len + header.max_cont_len,)),
                      ("gen", "<u4", (header.max_cont_len,))])

    def read_chunks() -> Iterator[np.ndarray]:
        with f:
            f.seek(MTOK_HEADER.size)
            remaining = header.record_count
            while remaining > 0:
                n = min(remaining, chunk_records)
                buf = f.read(n * rec_size)
                if len(buf) != n * rec_size:
                    raise FormatError("truncated record", path=path,
                                      offset=f.tell() - len(buf) % rec_size)
                remaining -= n
                yield np.frombuffer(buf, dtype=dtype)

    def serial() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for chunk in read_chunks():
            yield (chunk["seq_id"].copy(),
                   _masks_from_chunk(chunk, header.prompt_len, header.max_cont_len))

    def parallel() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        # Deterministic merge: futures are consumed in submission order.
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = []
            for chunk in read_chunks():
                pending.append(pool.submit(
                    lambda c: (c["seq_id"].copy(),
                               _masks_from_chunk(c, header.prompt_len,
                                                 header.max_cont_len)),
                    chunk))
                if len(pending) > threads * 2:
                    yield pending.pop(0).result()
            for fut in pending:
                yield fut.result()

    return header, (parallel() if threads > 1 else serial())


def scan_tokens(path: str | Path, params: ScoreParams | None = None, *,
                chunk_records: int = CHUNK_RECORDS,
                threads: int = 1) -> Iterator[MatchRecord]:
    """Yield one MatchRecord per token record, in input order.

    ``params`` is optional; when given, its threshold must not exceed the
    file's stored mask width.
    """
    header, chunks = scan_token_arrays(path, chunk_records=chunk_records,
                                       threads=threads)
    if params is not None and params.cont_len > header.max_cont_len:
        raise ValueError(
            f"threshold {params.cont_len} exceeds token file's "
            f"max_cont_len {header.max_cont_len}")
    for ids, masks in chunks:
        for i in range(ids.size):
            yield MatchRecord(int(ids[i]), int(masks[i]), header.max_cont_len)


def scan_to_record_file(token_path: str | Path, record_path: str | Path, *,
                        model_name: str, checkpoint_label: str,
                        chunk_records: int = CHUNK_RECORDS,
                        threads: int = 1) -> store.RecordFileHeader:
    """Scan a token file and persist the masks as a match-record file."""
    header, chunks = scan_token_arrays(token_path, chunk_records=chunk_records,
                                       threads=threads)
    with store.MatchRecordWriter(record_path, model_name=model_name,
                                 checkpoint_label=checkpoint_label,
                                 prompt_len=header.prompt_len,
                                 max_cont_len=header.max_cont_len) as w:
        for ids, masks in chunks:
            w.write_arrays(ids, masks)
    return store.RecordFileHeader(model_name, checkpoint_label,
                                  header.prompt_len, header.max_cont_len,
                                  w.count)


def extractible_ids(chunks: Iterable[tuple[np.ndarray, np.ndarray]],
                    cont_len: int, id_bound: int | None = None) -> np.ndarray:
    """Ids whose low ``cont_len`` mask bits are all set (array fast path)."""
    full = np.uint64(_low_mask(cont_len))
    out = []
    last = -1
    for ids, masks in chunks:
        if ids.size == 0:
            continue
        if int(ids[0]) <= last or np.any(ids[1:] <= ids[:-1]):
            raise FormatError("match records not sorted by seq_id")
        last = int(ids[-1])
        hit = (masks & full) == full
        if id_bound is not None:
            hit &= ids < np.uint64(id_bound)
        out.append(ids[hit].copy())
    if not out:
        return np.empty(0, dtype=np.uint64)
    return np.concatenate(out)


def memorized_set(records: Iterable[MatchRecord], params: ScoreParams,
                  id_bound: int | None = None, *,
                  owner: tuple[str, str] | None = None,
                  universe_bound: int | None = None) -> MemorizedSet:
    """Collect the ids extractible at ``params.cont_len`` from sorted records.

    ``id_bound``, when given, drops ids at or above it and fixes the
    universe; otherwise the universe is taken to be the dense prefix ending
    at the last record seen. Unsorted input raises FormatError.
    """
    n = params.cont_len
    ids = []
    last = -1
    count = 0
    for rec in records:
        if rec.seq_id <= last:
            raise FormatError(
                f"match records not sorted by seq_id ({rec.seq_id} after {last})")
        last = rec.seq_id
        count += 1
        if id_bound is not None and rec.seq_id >= id_bound:
            continue
        if is_extractible(rec, ScoreParams(params.prompt_len, n)):
            ids.append(rec.seq_id)
    if universe_bound is None:
        universe_bound = id_bound if id_bound is not None else last + 1
        if count == 0 and id_bound is None:
            universe_bound = 0
    return MemorizedSet(np.array(ids, dtype=np.uint64), universe_bound, n,
                        owner=owner)


def load_memorized_set(record_path: str | Path, cont_len: int,
                       id_bound: int | None = None) -> MemorizedSet:
    """Build the memorized set of a match-record file at one threshold.

    The owner is taken from the file header; the universe is the file's
    record span capped by ``id_bound`` (normally a sequences-seen count).
    """
    header, chunks = store.read_match_arrays(record_path)
    if cont_len > header.max_cont_len:
        raise ValueError(
            f"threshold {cont_len} exceeds record file's max_cont_len "
            f"{header.max_cont_len}")
    last = -1
    collected = []
    full = np.uint64(_low_mask(cont_len))
    for ids, masks in chunks:
        last = int(ids[-1])
        hit = (masks & full) == full
        if id_bound is not None:
            hit &= ids < np.uint64(id_bound)
        collected.append(ids[hit].copy())
    universe = last + 1
    if id_bound is not None:
        universe = min(universe, id_bound)
    ids = np.concatenate(collected) if collected else np.empty(0, np.uint64)
    return MemorizedSet(ids, max(universe, 0), cont_len,
                        owner=(header.model_name, header.checkpoint_label))
