"""Bit-exact persistence: match-record files, memorized-set files, manifests, CSV.

Binary layouts are little-endian and fixed:

match-record file (.mrec)
    magic "MREC" | version u32 | name_len u16 | name | label_len u16 | label
    | prompt_len u8 | max_cont_len u8 | record_count u64
    records: seq_id u64 | match_mask u64        (16 bytes each, sorted by id)
    footer: sha256 of everything before it      (32 bytes)

memorized-set file (.mset)
    magic "MSET" | threshold u8
    payload: strictly increasing seq_id u64
    footer: sha256 of everything before it      (32 bytes)

The sha256 footer makes any byte-level corruption detectable; files are
immutable once written, so readers need no locking.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import (MASK_WIDTH, CheckpointSpec, FormatError, ModelSpec,
                   ScoreParams, Suite)

MREC_MAGIC = b"MREC"
MSET_MAGIC = b"MSET"
MREC_VERSION = 1
CHECKSUM_LEN = 32
RECORD_SIZE = 16  # seq_id u64 + match_mask u64

# Chunk size for streaming readers/writers; readers never hold a whole
# payload in memory.
CHUNK_RECORDS = 1 << 16


@dataclass(frozen=True)
class RecordFileHeader:
    model_name: str
    checkpoint_label: str
    prompt_len: int
    max_cont_len: int
    record_count: int
    version: int = MREC_VERSION

    def encode(self) -> bytes:
        name = self.model_name.encode("utf-8")
        label = self.checkpoint_label.encode("utf-8")
        if len(name) > 0xFFFF or len(label) > 0xFFFF:
            raise ValueError("model name / checkpoint label too long for header")
        return b"".join([
            MREC_MAGIC,
            struct.pack("<I", self.version),
            struct.pack("<H", len(name)), name,
            struct.pack("<H", len(label)), label,
            struct.pack("<BBQ", self.prompt_len, self.max_cont_len,
                        self.record_count),
        ])


def _read_exact(f, n: int, path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated while reading {what}",
                          path=path, offset=f.tell() - len(buf))
    return buf


def _decode_record_header(f, path) -> tuple[RecordFileHeader, int]:
    magic = _read_exact(f, 4, path, "magic")
    if magic != MREC_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MREC_MAGIC!r}",
                          path=path, offset=0)
    (version,) = struct.unpack("<I", _read_exact(f, 4, path, "version"))
    if version != MREC_VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=4)
    (name_len,) = struct.unpack("<H", _read_exact(f, 2, path, "name length"))
    name = _read_exact(f, name_len, path, "model name")
    (label_len,) = struct.unpack("<H", _read_exact(f, 2, path, "label length"))
    label = _read_exact(f, label_len, path, "checkpoint label")
    prompt_len, max_cont_len, count = struct.unpack(
        "<BBQ", _read_exact(f, 10, path, "header tail"))
    try:
        header = RecordFileHeader(name.decode("utf-8"), label.decode("utf-8"),
                                  prompt_len, max_cont_len, count)
    except UnicodeDecodeError as exc:
        raise FormatError(f"header strings are not UTF-8: {exc}", path=path) from exc
    if not 1 <= max_cont_len <= MASK_WIDTH:
        raise FormatError(f"max_cont_len {max_cont_len} outside [1, {MASK_WIDTH}]",
                          path=path)
    if prompt_len < 1:
        raise FormatError(f"prompt_len {prompt_len} must be >= 1", path=path)
    return header, f.tell()


def _append_checksum(path: Path) -> None:
    """Append sha256 of the current file contents (two-pass finalize)."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(1 << 20)
            if not block:
                break
            h.update(block)
    with open(path, "ab") as f:
        f.write(h.digest())


class MatchRecordWriter:
    """Streaming writer for match-record files.

    Records must arrive sorted by seq_id with no mask bits at or above
    ``max_cont_len``. The header's record count is patched and the checksum
    appended on close, so the writer works without knowing the count upfront.
    """

    def __init__(self, path: str | Path, *, model_name: str,
                 checkpoint_label: str, prompt_len: int, max_cont_len: int):
        if not 1 <= max_cont_len <= MASK_WIDTH:
            raise ValueError(f"max_cont_len {max_cont_len} outside [1, {MASK_WIDTH}]")
        self.path = Path(path)
        self._header = RecordFileHeader(model_name, checkpoint_label,
                                        prompt_len, max_cont_len, 0)
        self._count_offset = len(self._header.encode()) - 8
        self._count = 0
        self._last_id = -1
        self._mask_limit = (1 << max_cont_len) - 1
        self._f = open(self.path, "wb")
        self._f.write(self._header.encode())

    def write_arrays(self, seq_ids: np.ndarray, masks: np.ndarray) -> None:
        seq_ids = np.ascontiguousarray(seq_ids, dtype="<u8")
        masks = np.ascontiguousarray(masks, dtype="<u8")
        if seq_ids.shape != masks.shape or seq_ids.ndim != 1:
            raise ValueError("seq_ids and masks must be equal-length 1-d arrays")
        if seq_ids.size == 0:
            return
        if int(seq_ids[0]) <= self._last_id or np.any(seq_ids[1:] <= seq_ids[:-1]):
            raise FormatError("records not strictly increasing by seq_id",
                              path=self.path)
        if np.any(masks > np.uint64(self._mask_limit)):
            raise ValueError(
                f"mask has bits set at or above max_cont_len={self._header.max_cont_len}")
        out = np.empty((seq_ids.size, 2), dtype="<u8")
        out[:, 0] = seq_ids
        out[:, 1] = masks
        self._f.write(out.tobytes())
        self._count += seq_ids.size
        self._last_id = int(seq_ids[-1])

    def write_records(self, records: Iterable["MatchRecordLike"]) -> None:
        ids, masks = [], []
        for rec in records:
            ids.append(rec.seq_id)
            masks.append(rec.match_mask)
            if len(ids) >= CHUNK_RECORDS:
                self.write_arrays(np.array(ids, dtype="<u8"),
                                  np.array(masks, dtype="<u8"))
                ids, masks = [], []
        if ids:
            self.write_arrays(np.array(ids, dtype="<u8"),
                              np.array(masks, dtype="<u8"))

    @property
    def count(self) -> int:
        return self._count

    def close(self) -> None:
        if self._f.closed:
            return
        self._f.seek(self._count_offset)
        self._f.write(struct.pack("<Q", self._count))
        self._f.close()
        _append_checksum(self.path)

    def __enter__(self) -> "MatchRecordWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._f.close()


class MatchRecordLike:
    """Anything with integer seq_id and match_mask attributes."""

    seq_id: int
    match_mask: int


def write_match_records(path: str | Path, records, *, model_name: str,
                        checkpoint_label: str, prompt_len: int,
                        max_cont_len: int) -> RecordFileHeader:
    """Write sorted match records to ``path``; returns the final header."""
    with MatchRecordWriter(path, model_name=model_name,
                           checkpoint_label=checkpoint_label,
                           prompt_len=prompt_len,
                           max_cont_len=max_cont_len) as w:
        w.write_records(records)
    return RecordFileHeader(model_name, checkpoint_label, prompt_len,
                            max_cont_len, w.count)


def read_match_arrays(path: str | Path,
                      chunk_records: int = CHUNK_RECORDS,
                      ) -> tuple[RecordFileHeader, Iterator[tuple[np.ndarray, np.ndarray]]]:
    """Open a match-record file; stream (seq_ids, masks) chunks.

    Validation is complete only once the iterator is exhausted: sortedness and
    mask-bit bounds are checked per chunk, the sha256 footer at the end.
    """
    path = Path(path)
    size = path.stat().st_size
    f = open(path, "rb")
    try:
        header, data_start = _decode_record_header(f, path)
    except Exception:
        f.close()
        raise
    payload = size - data_start - CHECKSUM_LEN
    if payload < 0:
        f.close()
        raise FormatError("file too small for checksum footer", path=path,
                          offset=size)
    if payload != header.record_count * RECORD_SIZE:
        f.close()
        expected = data_start + header.record_count * RECORD_SIZE + CHECKSUM_LEN
        full = max(payload, 0) // RECORD_SIZE
        raise FormatError(
            f"payload holds {payload} bytes but header declares "
            f"{header.record_count} records ({header.record_count * RECORD_SIZE} bytes); "
            f"file may be truncated (expected size {expected}, got {size})",
            path=path, offset=data_start + full * RECORD_SIZE)

    def chunks() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        digest = hashlib.sha256()
        mask_limit = np.uint64((1 << header.max_cont_len) - 1)
        last_id = -1
        with f:
            f.seek(0)
            digest.update(_read_exact(f, data_start, path, "header"))
            remaining = header.record_count
            while remaining > 0:
                n = min(remaining, chunk_records)
                offset = f.tell()
                buf = _read_exact(f, n * RECORD_SIZE, path, "records")
                digest.update(buf)
                arr = np.frombuffer(buf, dtype="<u8").reshape(n, 2)
                ids, masks = arr[:, 0], arr[:, 1]
                if (ids[0] <= last_id and last_id >= 0) or np.any(ids[1:] <= ids[:-1]):
                    raise FormatError("seq_ids not strictly increasing",
                                      path=path, offset=offset)
                if np.any(masks > mask_limit):
                    raise FormatError(
                        f"mask bits set at or above max_cont_len={header.max_cont_len}",
                        path=path, offset=offset)
                last_id = int(ids[-1])
                remaining -= n
                yield ids, masks
            stored = _read_exact(f, CHECKSUM_LEN, path, "checksum")
            if stored != digest.digest():
                raise FormatError("checksum mismatch: file corrupted",
                                  path=path, offset=size - CHECKSUM_LEN)

    return header, chunks()


def read_match_records(path: str | Path):
    """Like :func:`read_match_arrays` but yields per-record objects."""
    from .scorer import MatchRecord  # local import: scorer depends on store

    header, chunks = read_match_arrays(path)

    def records() -> Iterator[MatchRecord]:
        for ids, masks in chunks:
            for i in range(ids.size):
                yield MatchRecord(int(ids[i]), int(masks[i]), header.max_cont_len)

    return header, records()


def verify_match_file(path: str | Path) -> RecordFileHeader:
    """Fully read a match-record file, raising FormatError on any defect."""
    header, chunks = read_match_arrays(path)
    for _ in chunks:
        pass
    return header


def write_set_file(path: str | Path, threshold: int, seq_ids: np.ndarray) -> None:
    """Write a memorized-set file: strictly increasing ids at one threshold."""
    if not 1 <= threshold <= MASK_WIDTH:
        raise ValueError(f"threshold {threshold} outside [1, {MASK_WIDTH}]")
    ids = np.ascontiguousarray(seq_ids, dtype="<u8")
    if ids.size and np.any(ids[1:] <= ids[:-1]):
        raise FormatError("set ids must be strictly increasing", path=path)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MSET_MAGIC)
        f.write(struct.pack("<B", threshold))
        f.write(ids.tobytes())
    _append_checksum(path)


def read_set_file(path: str | Path) -> tuple[int, np.ndarray]:
    """Read a memorized-set file; returns (threshold, sorted id array)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 5 + CHECKSUM_LEN:
        raise FormatError("file too small for header and checksum", path=path,
                          offset=len(raw))
    if raw[:4] != MSET_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MSET_MAGIC!r}",
                          path=path, offset=0)
    threshold = raw[4]
    if not 1 <= threshold <= MASK_WIDTH:
        raise FormatError(f"threshold {threshold} outside [1, {MASK_WIDTH}]",
                          path=path, offset=4)
    body, stored = raw[:-CHECKSUM_LEN], raw[-CHECKSUM_LEN:]
    if hashlib.sha256(body).digest() != stored:
        raise FormatError("checksum mismatch: file corrupted", path=path,
                          offset=len(raw) - CHECKSUM_LEN)
    payload = body[5:]
    if len(payload) % 8 != 0:
        raise FormatError("payload is not a whole number of u64 ids",
                          path=path, offset=5 + len(payload) - len(payload) % 8)
    ids = np.frombuffer(payload, dtype="<u8")
    if ids.size and np.any(ids[1:] <= ids[:-1]):
        raise FormatError("set ids not strictly increasing", path=path, offset=5)
    return threshold, ids


# ---------------------------------------------------------------------------
# Suite manifests (UTF-8 JSON)

def suite_to_dict(suite: Suite) -> dict:
    return {
        "name": suite.name,
        "threshold_default": {"M": suite.threshold_default.prompt_len,
                              "N": suite.threshold_default.cont_len},
        "models": [
            {
                "name": m.name,
                "params": m.params,
                "tokens_per_sequence": m.tokens_per_sequence,
                "checkpoints": [
                    {"label": c.label, "sequences_seen": c.sequences_seen,
                     "record_file": c.record_file}
                    for c in m.checkpoints
                ],
            }
            for m in suite.models
        ],
    }


def _expect(obj, key, kind, where, path):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"{where}: missing key {key!r}", path=path)
    val = obj[key]
    if kind is int and isinstance(val, bool):
        raise FormatError(f"{where}.{key}: expected integer, got bool", path=path)
    if not isinstance(val, kind):
        raise FormatError(
            f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}",
            path=path)
    return val


def suite_from_dict(doc: dict, *, root: Path | None = None,
                    path: Path | None = None) -> Suite:
    name = _expect(doc, "name", str, "manifest", path)
    th = _expect(doc, "threshold_default", dict, "manifest", path)
    try:
        params = ScoreParams(_expect(th, "M", int, "threshold_default", path),
                             _expect(th, "N", int, "threshold_default", path))
    except ValueError as exc:
        raise FormatError(f"threshold_default: {exc}", path=path) from exc
    models = []
    for mi, mdoc in enumerate(_expect(doc, "models", list, "manifest", path)):
        where = f"models[{mi}]"
        checkpoints = []
        for ci, cdoc in enumerate(_expect(mdoc, "checkpoints", list, where, path)):
            cwhere = f"{where}.checkpoints[{ci}]"
            checkpoints.append(CheckpointSpec(
                _expect(cdoc, "label", str, cwhere, path),
                _expect(cdoc, "sequences_seen", int, cwhere, path),
                _expect(cdoc, "record_file", str, cwhere, path)))
        models.append(ModelSpec(
            _expect(mdoc, "name", str, where, path),
            _expect(mdoc, "params", int, where, path),
            _expect(mdoc, "tokens_per_sequence", int, where, path),
            tuple(checkpoints)))
    return Suite(name, tuple(models), params, root=root)


def load_manifest(path: str | Path) -> Suite:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}", path=path) from exc
    if not isinstance(doc, dict):
        raise FormatError("manifest root must be a JSON object", path=path)
    return suite_from_dict(doc, root=path.parent, path=path)


def save_manifest(suite: Suite, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(suite_to_dict(suite), indent=2, sort_keys=False) + "\n",
        encoding="utf-8")


# ---------------------------------------------------------------------------
# CSV export

def format_cell(value) -> str:
    """Render one CSV cell: 6 significant digits for floats, empty for
    undefined (None/NaN), exact text for integers and strings."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def export_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Deterministic CSV text: given column order, LF line endings."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return out.getvalue()


def parse_csv(text: str) -> tuple[list[str], list[list[str]]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("CSV has no header row")
    return rows[0], rows[1:]
