"""Synthetic suites with planted ground truth.

The generator plants, per (model, checkpoint), which sequence ids are
memorized and what the non-memorized score distribution looks like, then
writes ordinary record files plus a sidecar listing everything it planted.
Desk-scale acceptance tests diff analytics output against that sidecar.

All randomness is a counter-based hash keyed on (seed, stream tag, model
index, checkpoint index, sequence id): any single record is computable
independently, so chunked or parallel generation is byte-identical to serial.

Construction of the memorized sets: each sequence draws one latent value per
model, taken from a suite-shared draw with probability ``rho`` and from a
model-private draw otherwise (so two models consult the shared draw together
with probability rho^2). A checkpoint memorizes the sequence when the
latent falls below the checkpoint's rate, which grows with data seen;
thresholding one latent per model makes every checkpoint's set nest inside
the next. Nested mode is rho = 1, which also nests sets across model sizes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import CheckpointSpec, FormatError, ModelSpec, ScoreParams, Suite
from .sets import MemorizedSet
from . import distribution, predictor, scorer, store

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)

# Stream tags keep every random draw on its own independent stream.
_T_SHARED, _T_OWN, _T_PICK, _T_BIN, _T_BITS = 1, 2, 3, 4, 5
_T_EXT1, _T_EXT2, _T_NOISE, _T_TRUE = 6, 7, 8, 9

# Probability that a memorized sequence's match run extends through all 64
# mask bits; keeps both the default and doubled thresholds non-trivial.
_FULL_EXTENSION_P = 0.5

CHUNK = 1 << 16


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64: golden-ratio premix then two multiply-xorshift rounds."""
    z = x + _C1
    z = (z ^ (z >> np.uint64(30))) * _C2
    z = (z ^ (z >> np.uint64(27))) * _C3
    return z ^ (z >> np.uint64(31))


def _key(*parts: int) -> np.uint64:
    k = np.zeros(1, dtype=np.uint64)
    for p in parts:
        k = _mix64(k ^ np.uint64(p))
    return k[0]


def _uniforms(key: np.uint64, ids: np.ndarray) -> np.ndarray:
    """One float64 in [0, 1) per id, on the stream named by ``key``."""
    h = _mix64(ids ^ key)
    return (h >> np.uint64(11)) * (2.0 ** -53)


def _hash_matrix(key_parts: tuple[int, ...], ids: np.ndarray,
                 columns: int) -> np.ndarray:
    out = np.empty((ids.size, columns), dtype=np.uint64)
    for j in range(columns):
        out[:, j] = _mix64(ids ^ _key(*key_parts, j))
    return out


def pack_bit_columns(bits: np.ndarray) -> np.ndarray:
    """(n, k<=64) bool array -> n uint64 masks, column j becoming bit j."""
    packed = np.packbits(bits, axis=1, bitorder="little")
    words = np.zeros((bits.shape[0], 8), dtype=np.uint8)
    words[:, : packed.shape[1]] = packed
    return words.view("<u8").ravel()


@dataclass(frozen=True)
class SynthModel:
    name: str
    params: int
    base_rate: float  # memorized fraction planted at the final checkpoint


@dataclass(frozen=True)
class TailSpec:
    kind: str     # "geometric" | "zipf"
    value: float  # per-bin ratio, or Zipf exponent over bin index


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    universe: int
    models: tuple[SynthModel, ...]
    checkpoints: tuple[int, ...]  # sequences_seen, strictly increasing
    mode: str = "nested"          # "nested" | "overlap"
    overlap: float | None = None  # rho, overlap mode only
    tail: TailSpec = field(default_factory=lambda: TailSpec("geometric", 0.5))
    tail_mass: float = 0.3        # non-memorized mass placed in the tail bins
    prompt_len: int = 32
    cont_len: int = 32
    tokens_per_sequence: int = 2048

    def __post_init__(self):
        if self.universe <= 0:
            raise ValueError("universe must be positive")
        if not self.models:
            raise ValueError("at least one model required")
        for m in self.models:
            if not 0.0 <= m.base_rate <= 1.0:
                raise ValueError(f"base_rate {m.base_rate} outside [0, 1]")
            if m.params <= 0:
                raise ValueError("params must be positive")
        if len({m.name for m in self.models}) != len(self.models):
            raise ValueError("model names must be unique")
        if not self.checkpoints:
            raise ValueError("at least one checkpoint required")
        if any(c <= 0 for c in self.checkpoints) or \
                any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be positive and strictly increasing")
        if self.mode not in ("nested", "overlap"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "overlap":
            if self.overlap is None or not 0.0 <= self.overlap <= 1.0:
                raise ValueError("overlap mode needs rho in [0, 1]")
        if self.tail.kind not in ("geometric", "zipf"):
            raise ValueError(f"unknown tail kind {self.tail.kind!r}")
        if self.tail.kind == "geometric" and self.tail.value <= 0:
            raise ValueError("geometric ratio must be positive")
        if not 0.0 <= self.tail_mass <= 1.0:
            raise ValueError("tail_mass must be in [0, 1]")
        if not 4 <= self.cont_len <= 64:
            raise ValueError("cont_len must be in [4, 64]")

    @property
    def rho(self) -> float:
        return 1.0 if self.mode == "nested" else float(self.overlap)

    def rate(self, model_index: int, checkpoint_index: int) -> float:
        seen = self.checkpoints[checkpoint_index]
        return self.models[model_index].base_rate * seen / self.checkpoints[-1]


def config_to_dict(c: SynthConfig) -> dict:
    return {
        "seed": c.seed,
        "universe": c.universe,
        "models": [{"name": m.name, "params": m.params, "base_rate": m.base_rate}
                   for m in c.models],
        "checkpoints": list(c.checkpoints),
        "mode": c.mode,
        "overlap": c.overlap,
        "tail": {"kind": c.tail.kind, "value": c.tail.value},
        "tail_mass": c.tail_mass,
        "prompt_len": c.prompt_len,
        "cont_len": c.cont_len,
        "tokens_per_sequence": c.tokens_per_sequence,
    }


def _tail_from_dict(doc) -> TailSpec:
    kind = doc.get("kind")
    if kind not in ("geometric", "zipf"):
        raise ValueError(f"tail.kind must be 'geometric' or 'zipf', got {kind!r}")
    # accept the kind-specific spelling alongside the generic "value"
    alias = "ratio" if kind == "geometric" else "exponent"
    value = doc.get("value", doc.get(alias))
    if value is None:
        raise ValueError(f"tail needs a {alias!r} (or 'value') entry")
    return TailSpec(kind, float(value))


def config_from_dict(doc: dict) -> SynthConfig:
    tail = doc.get("tail", {"kind": "geometric", "value": 0.5})
    return SynthConfig(
        seed=int(doc["seed"]),
        universe=int(doc["universe"]),
        models=tuple(SynthModel(m["name"], int(m["params"]), float(m["base_rate"]))
                     for m in doc["models"]),
        checkpoints=tuple(int(c) for c in doc["checkpoints"]),
        mode=doc.get("mode", "nested"),
        overlap=doc.get("overlap"),
        tail=_tail_from_dict(tail),
        tail_mass=float(doc.get("tail_mass", 0.3)),
        prompt_len=int(doc.get("prompt_len", 32)),
        cont_len=int(doc.get("cont_len", 32)),
        tokens_per_sequence=int(doc.get("tokens_per_sequence", 2048)),
    )


def load_config(path: str | Path) -> SynthConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return config_from_dict(doc)
    except KeyError as exc:
        raise FormatError(f"bad synth config: missing key {exc}",
                          path=path) from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad synth config: {exc}", path=path) from exc


def nonspike_pmf(config: SynthConfig) -> np.ndarray:
    """Distribution over bins 0..N-1 for sequences that are not memorized.

    Bins at or above half the threshold form the tail with the configured
    shape and total mass; the remaining mass decays geometrically over the
    low bins.
    """
    n = config.cont_len
    lo = max(int(math.ceil(distribution.DEFAULT_TAIL_MIN * n)), 1)
    p = np.zeros(n, dtype=np.float64)
    low = 0.8 ** np.arange(lo, dtype=np.float64)
    p[:lo] = (1.0 - config.tail_mass) * low / low.sum()
    bins = np.arange(lo, n, dtype=np.float64)
    if config.tail.kind == "geometric":
        shape = config.tail.value ** (bins - lo)
    else:
        shape = bins ** (-config.tail.value)
    p[lo:] = config.tail_mass * shape / shape.sum()
    return p


def _joint_cells(rate_a: float, rate_b: float, rho: float) -> tuple[float, ...]:
    """2x2 cell probabilities (both, a-only, b-only, neither) for two models.

    Both-memorized probability is rho^2 * min(ra, rb) + (1 - rho^2) * ra * rb:
    the models consult the shared latent independently with probability rho
    each, and thresholding one uniform gives P(min) agreement.
    """
    p11 = rho * rho * min(rate_a, rate_b) + (1 - rho * rho) * rate_a * rate_b
    return (p11, rate_a - p11, rate_b - p11, 1 - rate_a - rate_b + p11)


def _phi_of_cells(c11: float, c10: float, c01: float, c00: float) -> float | None:
    n = c11 + c10 + c01 + c00
    a = c11 + c10
    b = c11 + c01
    if a <= 0 or b <= 0 or a >= n or b >= n:
        return None
    return (n * c11 - a * b) / (math.sqrt(a * (n - a)) * math.sqrt(b * (n - b)))


def analytic_phi(rate_a: float, rate_b: float, rho: float) -> float | None:
    """Phi implied by the generator's 2x2 cell probabilities for two models."""
    for r in (rate_a, rate_b):
        if r <= 0.0 or r >= 1.0:
            return None
    return _phi_of_cells(*_joint_cells(rate_a, rate_b, rho))


def phi_sampling_std(rate_a: float, rate_b: float, rho: float,
                     support: int) -> float | None:
    """Delta-method std of the empirical phi over ``support`` iid sequences.

    The four cell counts are jointly multinomial; phi is scale-invariant in
    the counts, so a one-sided numerical gradient over per-unit cell counts
    gives Var(phi_hat) ~ (sum p g^2 - (sum p g)^2) / n. The normal-theory
    1/sqrt(n) rule is far too tight for sparse indicators, where the joint
    cell is nearly Poisson.
    """
    cells = _joint_cells(rate_a, rate_b, rho)
    base = _phi_of_cells(*cells)
    if base is None or support <= 0:
        return None
    eps = 1e-7
    grads = []
    for k in range(4):
        bumped = list(cells)
        bumped[k] += eps
        shifted = _phi_of_cells(*bumped)
        if shifted is None:
            return None
        grads.append((shifted - base) / eps)
    mean_g = sum(p * g for p, g in zip(cells, grads))
    var = sum(p * g * g for p, g in zip(cells, grads)) - mean_g * mean_g
    return math.sqrt(max(var, 0.0) / support)


def _model_latents(config: SynthConfig, model_index: int,
                   ids: np.ndarray) -> np.ndarray:
    shared = _uniforms(_key(config.seed, _T_SHARED), ids)
    if config.rho >= 1.0:
        return shared
    own = _uniforms(_key(config.seed, _T_OWN, model_index), ids)
    pick = _uniforms(_key(config.seed, _T_PICK, model_index), ids)
    return np.where(pick < config.rho, shared, own)


def _checkpoint_chunks(config: SynthConfig, model_index: int,
                       checkpoint_index: int, *,
                       chunk: int = CHUNK) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (seq_ids, masks) for one (model, checkpoint), in id order."""
    n = config.cont_len
    width = 64 - n
    covered = min(config.universe, config.checkpoints[checkpoint_index])
    rate = config.rate(model_index, checkpoint_index)
    cum = np.cumsum(nonspike_pmf(config))
    bits_key = (config.seed, _T_BITS, model_index, checkpoint_index)
    for start in range(0, covered, chunk):
        ids = np.arange(start, min(start + chunk, covered), dtype=np.uint64)
        latent = _model_latents(config, model_index, ids)
        memorized = latent < rate

        # Non-memorized rows: a uniform subset of the low bins of the drawn
        # size, random sparse noise above the threshold region.
        x = _uniforms(_key(config.seed, _T_BIN, model_index, checkpoint_index),
                      ids)
        bins = np.searchsorted(cum, x, side="right").astype(np.int64)
        np.clip(bins, 0, n - 1, out=bins)
        h = _hash_matrix(bits_key, ids, n)
        order = np.argsort(h, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order,
                          np.broadcast_to(np.arange(n), order.shape), axis=1)
        low = pack_bit_columns(rank < bins[:, None])
        if width:
            noise = (_mix64(ids ^ _key(config.seed, _T_NOISE, model_index,
                                       checkpoint_index, 0))
                     & _mix64(ids ^ _key(config.seed, _T_NOISE, model_index,
                                         checkpoint_index, 1))
                     & _mix64(ids ^ _key(config.seed, _T_NOISE, model_index,
                                         checkpoint_index, 2)))
            noise &= np.uint64((1 << width) - 1)
        else:
            noise = np.zeros(ids.size, dtype=np.uint64)

        # Memorized rows: all low bits, then a match run of length E above.
        full_low = np.uint64((1 << n) - 1)
        if width:
            ext1 = _uniforms(_key(config.seed, _T_EXT1, model_index), ids)
            ext2 = _uniforms(_key(config.seed, _T_EXT2, model_index), ids)
            run = np.where(ext1 < _FULL_EXTENSION_P, width,
                           (ext2 * width).astype(np.int64)).astype(np.uint64)
            run_mask = (np.uint64(1) << run) - np.uint64(1)  # run <= width <= 60
            high_memorized = run_mask << np.uint64(n)
            high_tail = noise << np.uint64(n)
        else:
            high_memorized = high_tail = np.zeros(ids.size, dtype=np.uint64)
        masks = np.where(memorized, full_low | high_memorized,
                         low | high_tail)
        yield ids, masks


def planted_ids(config: SynthConfig, model_index: int,
                checkpoint_index: int) -> np.ndarray:
    """The memorized ids this generator plants, computed without file I/O."""
    covered = min(config.universe, config.checkpoints[checkpoint_index])
    rate = config.rate(model_index, checkpoint_index)
    out = []
    for start in range(0, covered, CHUNK):
        ids = np.arange(start, min(start + CHUNK, covered), dtype=np.uint64)
        latent = _model_latents(config, model_index, ids)
        out.append(ids[latent < rate])
    if not out:
        return np.empty(0, dtype=np.uint64)
    return np.concatenate(out)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(1 << 20)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class GeneratedSuite:
    suite: Suite
    manifest_path: Path
    truth_path: Path


def generate(config: SynthConfig, out_dir: str | Path, *,
             chunk: int = CHUNK) -> GeneratedSuite:
    """Write a full synthetic suite: manifest, record files, truth sidecar.

    Deterministic function of the config: the same config produces byte
    identical files, whatever the chunk size.
    """
    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)

    models = []
    truth_files = []
    for mi, sm in enumerate(config.models):
        checkpoints = []
        for ci, seen in enumerate(config.checkpoints):
            label = f"c{seen}"
            rel = f"records/{sm.name}__{label}.mrec"
            path = out_dir / rel
            with store.MatchRecordWriter(path, model_name=sm.name,
                                         checkpoint_label=label,
                                         prompt_len=config.prompt_len,
                                         max_cont_len=64) as w:
                for ids, masks in _checkpoint_chunks(config, mi, ci, chunk=chunk):
                    w.write_arrays(ids, masks)
            truth_files.append({
                "model": sm.name,
                "checkpoint": label,
                "path": rel,
                "sha256": _sha256_file(path),
                "record_count": w.count,
                "rate": config.rate(mi, ci),
                "memorized_ids": [int(i) for i in planted_ids(config, mi, ci)],
            })
            checkpoints.append(CheckpointSpec(label, seen, rel))
        models.append(ModelSpec(sm.name, sm.params, config.tokens_per_sequence,
                                tuple(checkpoints)))

    suite = Suite(f"synth-{config.seed}", tuple(models),
                  ScoreParams(config.prompt_len, config.cont_len), root=out_dir)
    manifest_path = out_dir / "manifest.json"
    store.save_manifest(suite, manifest_path)

    pairs = []
    for i in range(len(config.models)):
        for j in range(i + 1, len(config.models)):
            pairs.append({
                "a": config.models[i].name,
                "b": config.models[j].name,
                "phi": analytic_phi(config.models[i].base_rate,
                                    config.models[j].base_rate, config.rho),
            })
    truth = {
        "config": config_to_dict(config),
        "threshold": config.cont_len,
        "files": truth_files,
        "analytic_phi_final": pairs,
    }
    truth_path = out_dir / "ground_truth.json"
    truth_path.write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return GeneratedSuite(suite, manifest_path, truth_path)


# ---------------------------------------------------------------------------
# Ground-truth verification

@dataclass(frozen=True)
class CheckItem:
    name: str
    status: str  # "pass" | "fail" | "skip"
    detail: str = ""

    def __str__(self) -> str:
        text = f"[{self.status.upper():4s}] {self.name}"
        return f"{text}: {self.detail}" if self.detail else text


@dataclass(frozen=True)
class CheckReport:
    items: tuple[CheckItem, ...]

    @property
    def passed(self) -> bool:
        return all(i.status != "fail" for i in self.items)

    def __str__(self) -> str:
        lines = [str(i) for i in self.items]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: {verdict} "
                     f"({sum(i.status == 'fail' for i in self.items)} failures, "
                     f"{len(self.items)} checks)")
        return "\n".join(lines)


def _check_file(entry: dict, root: Path, threshold: int) -> list[CheckItem]:
    name = f"{entry['model']}@{entry['checkpoint']}"
    path = root / entry["path"]
    items = []
    if not path.is_file():
        return [CheckItem(f"{name}: file present", "fail", f"{path} missing")]
    actual = _sha256_file(path)
    if actual != entry["sha256"]:
        return [CheckItem(f"{name}: file intact", "fail",
                          f"sha256 mismatch in {entry['path']}")]
    items.append(CheckItem(f"{name}: file intact", "pass"))
    try:
        store.verify_match_file(path)
    except FormatError as exc:
        return items + [CheckItem(f"{name}: format valid", "fail", str(exc))]
    items.append(CheckItem(f"{name}: format valid", "pass"))

    observed = scorer.load_memorized_set(path, threshold)
    planted = np.array(entry["memorized_ids"], dtype=np.uint64)
    if observed.ids.size == planted.size and np.array_equal(observed.ids, planted):
        items.append(CheckItem(f"{name}: memorized set matches planted", "pass"))
    else:
        extra = np.setdiff1d(observed.ids, planted).size
        missing = np.setdiff1d(planted, observed.ids).size
        items.append(CheckItem(
            f"{name}: memorized set matches planted", "fail",
            f"{extra} unplanted ids present, {missing} planted ids absent"))

    count = entry["record_count"]
    rate = entry["rate"]
    sigma = math.sqrt(max(rate * (1 - rate), 0.0) / count) if count else 0.0
    frac = observed.ids.size / count if count else 0.0
    if abs(frac - rate) <= 3 * sigma or frac == rate:
        items.append(CheckItem(f"{name}: memorized fraction near planted rate",
                               "pass",
                               f"observed {frac:.6g}, planted {rate:.6g}"))
    else:
        items.append(CheckItem(f"{name}: memorized fraction near planted rate",
                               "fail",
                               f"observed {frac:.6g}, planted {rate:.6g}, "
                               f"3-sigma {3 * sigma:.3g}"))

    header, chunks = store.read_match_arrays(path)
    hist = distribution.histogram(chunks, ScoreParams(cont_len=threshold))
    if hist.total:
        spike = distribution.spike_mass(hist)
        if spike == frac:
            items.append(CheckItem(
                f"{name}: spike mass equals memorized fraction", "pass"))
        else:
            items.append(CheckItem(
                f"{name}: spike mass equals memorized fraction", "fail",
                f"spike {spike:.6g} vs fraction {frac:.6g}"))
    return items


def ground_truth_check(manifest_path: str | Path,
                       truth_path: str | Path) -> CheckReport:
    """Diff analytics output over a generated suite against the sidecar."""
    manifest_path = Path(manifest_path)
    truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
    config = config_from_dict(truth["config"])
    suite = store.load_manifest(manifest_path)
    root = manifest_path.parent
    threshold = truth["threshold"]

    items: list[CheckItem] = []
    sets_by_key: dict[tuple[str, str], MemorizedSet] = {}
    for entry in truth["files"]:
        items.extend(_check_file(entry, root, threshold))
        path = root / entry["path"]
        if path.is_file():
            try:
                model, cp = suite.checkpoint(entry["model"], entry["checkpoint"])
                sets_by_key[(entry["model"], entry["checkpoint"])] = \
                    scorer.load_memorized_set(path, threshold,
                                              id_bound=cp.sequences_seen)
            except (FormatError, KeyError, OSError):
                pass

    if config.mode == "nested":
        for model in suite.models:
            for early_cp, late_cp in zip(model.checkpoints, model.checkpoints[1:]):
                key = f"{model.name}: {early_cp.label} -> {late_cp.label}"
                early = sets_by_key.get((model.name, early_cp.label))
                late = sets_by_key.get((model.name, late_cp.label))
                if early is None or late is None:
                    items.append(CheckItem(f"{key}: nesting", "skip",
                                           "sets unavailable"))
                    continue
                c = predictor.confusion(early, late)
                precision, recall = predictor.precision_recall(c)
                bound = predictor.common_support(early, late)
                expected_recall = (len(early) / late.count_below(bound)
                                   if late.count_below(bound) else None)
                ok = c.fp == 0 and precision in (None, 1.0) \
                    and recall == expected_recall
                items.append(CheckItem(
                    f"{key}: nested precision/recall",
                    "pass" if ok else "fail",
                    f"precision {precision}, recall {recall}, "
                    f"expected recall {expected_recall}"))

    rho = config.rho
    rates = {m.name: m.base_rate for m in config.models}
    final_label = f"c{config.checkpoints[-1]}"
    for pair in truth.get("analytic_phi_final", []):
        name = f"phi({pair['a']}, {pair['b']})"
        expected = pair["phi"]
        a = sets_by_key.get((pair["a"], final_label))
        b = sets_by_key.get((pair["b"], final_label))
        if a is None or b is None or expected is None:
            items.append(CheckItem(name, "skip", "degenerate rates or missing sets"))
            continue
        observed = predictor.phi_correlation(a, b)
        support = predictor.common_support(a, b)
        sigma = phi_sampling_std(rates[pair["a"]], rates[pair["b"]], rho, support)
        if observed is None or sigma is None or sigma == 0.0:
            items.append(CheckItem(name, "skip", "constant indicator"))
            continue
        delta = abs(observed - expected)
        items.append(CheckItem(
            name, "pass" if delta <= 3 * sigma else "fail",
            f"observed {observed:.4f}, analytic {expected:.4f} "
            f"(delta {delta:.3g}, 3-sigma {3 * sigma:.3g})"))

    for mi, sm in enumerate(config.models):
        name = f"{sm.name}: tail recovery"
        entry_path = root / f"records/{sm.name}__{final_label}.mrec"
        if not entry_path.is_file():
            items.append(CheckItem(name, "skip", "final record file missing"))
            continue
        _, chunks = store.read_match_arrays(entry_path)
        hist = distribution.histogram(chunks, ScoreParams(cont_len=threshold))
        try:
            report = distribution.tail_fit(hist)
        except ValueError as exc:
            items.append(CheckItem(name, "skip", str(exc)))
            continue
        if report.tail_total < 100_000:
            items.append(CheckItem(
                name, "skip",
                f"{report.tail_total} tail samples; tolerance stated at >= 1e5"))
            continue
        if config.tail.kind == "geometric":
            want = "exponential"
            planted = -math.log(config.tail.value)
            got = report.exp_rate
            ok = report.preferred == want and \
                abs(got - planted) <= 0.05 * abs(planted)
        else:
            want = "power-law"
            planted = config.tail.value
            got = report.pl_exponent
            ok = report.preferred == want and abs(got - planted) <= 0.1
        items.append(CheckItem(
            name, "pass" if ok else "fail",
            f"preferred {report.preferred} (want {want}), parameter {got:.4f} "
            f"(planted {planted:.4f})"))

    return CheckReport(tuple(items))


# ---------------------------------------------------------------------------
# Token-file generation consistent with target masks

def write_token_file_for_masks(path: str | Path, seq_ids: np.ndarray,
                               masks: np.ndarray, *, prompt_len: int,
                               max_cont_len: int, seed: int = 0) -> None:
    """Emit a token file whose scan reproduces ``masks`` exactly.

    True tokens are hash-derived; the generated continuation copies the true
    token where the target mask bit is set and differs in the lowest bit
    where it is clear.
    """
    seq_ids = np.asarray(seq_ids, dtype=np.uint64)
    masks = np.asarray(masks, dtype=np.uint64)
    with scorer.TokenFileWriter(path, prompt_len=prompt_len,
                                max_cont_len=max_cont_len) as w:
        for start in range(0, seq_ids.size, CHUNK):
            ids = seq_ids[start: start + CHUNK]
            mk = masks[start: start + CHUNK]
            cols = prompt_len + max_cont_len
            true = (_hash_matrix((seed, _T_TRUE), ids, cols)
                    & np.uint64(0xFFFFFFFF)).astype(np.uint32)
            shifts = np.arange(max_cont_len, dtype=np.uint64)
            matched = ((mk[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool)
            cont = true[:, prompt_len:]
            gen = np.where(matched, cont, cont ^ np.uint32(1))
            w.write_arrays(ids, true, gen)
