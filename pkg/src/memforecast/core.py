"""Shared domain types, identifiers, and suite validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

# Match masks are fixed 64-bit words; thresholds can never exceed this.
MASK_WIDTH = 64


class FormatError(Exception):
    """A file or record stream violates an on-disk format contract."""

    def __init__(self, message: str, *, path: str | Path | None = None,
                 offset: int | None = None):
        self.path = str(path) if path is not None else None
        self.offset = offset
        self.detail = message
        parts = []
        if self.path is not None:
            parts.append(self.path)
        if offset is not None:
            parts.append(f"byte {offset}")
        parts.append(message)
        super().__init__(": ".join(parts))


@dataclass(frozen=True)
class ScoreParams:
    """Prompt length and continuation threshold used to score a sequence.

    ``cont_len`` is the number of continuation tokens that must be compared;
    a sequence counts as memorized when all ``cont_len`` of them match.
    """

    prompt_len: int = 32
    cont_len: int = 32

    def __post_init__(self):
        if self.prompt_len < 1:
            raise ValueError(f"prompt_len must be >= 1, got {self.prompt_len}")
        if not 1 <= self.cont_len <= MASK_WIDTH:
            raise ValueError(
                f"cont_len must be in [1, {MASK_WIDTH}], got {self.cont_len}")


@dataclass(frozen=True)
class CheckpointSpec:
    """One saved model state, identified by how much training data it consumed."""

    label: str
    sequences_seen: int
    record_file: str


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: int
    tokens_per_sequence: int = 2048
    checkpoints: tuple[CheckpointSpec, ...] = ()

    def final_checkpoint(self) -> CheckpointSpec:
        if not self.checkpoints:
            raise ValueError(f"model {self.name!r} has no checkpoints")
        return self.checkpoints[-1]


@dataclass(frozen=True)
class Suite:
    """A family of models x checkpoints evaluated over one shared training order."""

    name: str
    models: tuple[ModelSpec, ...]
    threshold_default: ScoreParams = field(default_factory=ScoreParams)
    # Directory that relative record_file paths resolve against (normally the
    # directory holding the manifest). Not serialized.
    root: Path | None = None

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(f"no model named {name!r} in suite {self.name!r}")

    def checkpoint(self, model_name: str, label: str) -> tuple[ModelSpec, CheckpointSpec]:
        m = self.model(model_name)
        for cp in m.checkpoints:
            if cp.label == label:
                return m, cp
        raise KeyError(f"no checkpoint {label!r} for model {model_name!r}")

    def record_path(self, checkpoint: CheckpointSpec) -> Path:
        p = Path(checkpoint.record_file)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p


@dataclass(frozen=True)
class Violation:
    """One validation failure, pinned to its location in the manifest."""

    kind: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.kind}: {self.message}"


def validate_suite(suite: Suite) -> list[Violation]:
    """Check every suite invariant; return all violations (empty means valid).

    Referenced record files are fully verified (header, payload, checksum) so
    that an accepted suite can never raise a format error downstream.
    Deterministic and side-effect free.
    """
    from . import store  # local import: store depends on core

    violations: list[Violation] = []
    seen_names: set[str] = set()
    for mi, model in enumerate(suite.models):
        loc = f"models[{mi}]"
        if model.name in seen_names:
            violations.append(Violation(
                "duplicate-model", loc, f"model name {model.name!r} repeated"))
        seen_names.add(model.name)
        if model.params <= 0:
            violations.append(Violation(
                "bad-params", loc, f"params must be positive, got {model.params}"))
        if model.tokens_per_sequence <= 0:
            violations.append(Violation(
                "bad-tokens-per-sequence", loc,
                f"tokens_per_sequence must be positive, got {model.tokens_per_sequence}"))
        if not model.checkpoints:
            violations.append(Violation(
                "no-checkpoints", loc, "model declares no checkpoints"))
        prev_seen = 0
        for ci, cp in enumerate(model.checkpoints):
            cloc = f"{loc}.checkpoints[{ci}]"
            if cp.sequences_seen <= 0:
                violations.append(Violation(
                    "bad-sequences-seen", cloc,
                    f"sequences_seen must be positive, got {cp.sequences_seen}"))
            elif cp.sequences_seen <= prev_seen:
                violations.append(Violation(
                    "non-monotone-checkpoints", cloc,
                    f"sequences_seen {cp.sequences_seen} does not exceed "
                    f"previous checkpoint's {prev_seen}"))
            prev_seen = max(prev_seen, cp.sequences_seen)

            path = suite.record_path(cp)
            if not path.is_file():
                violations.append(Violation(
                    "missing-file", cloc, f"record file {path} does not exist"))
                continue
            try:
                header = store.verify_match_file(path)
            except FormatError as exc:
                violations.append(Violation("bad-record-file", cloc, str(exc)))
                continue
            if header.model_name != model.name:
                violations.append(Violation(
                    "header-mismatch", cloc,
                    f"record file names model {header.model_name!r}, "
                    f"manifest says {model.name!r}"))
            if header.checkpoint_label != cp.label:
                violations.append(Violation(
                    "header-mismatch", cloc,
                    f"record file names checkpoint {header.checkpoint_label!r}, "
                    f"manifest says {cp.label!r}"))
            if header.max_cont_len < suite.threshold_default.cont_len:
                violations.append(Violation(
                    "threshold-unsupported", cloc,
                    f"record file keeps {header.max_cont_len} continuation bits, "
                    f"fewer than default threshold {suite.threshold_default.cont_len}"))
    return violations
