"""Experiment harness: config, model assembly, training, comparisons, analyses.

A Model bundles frozen encoders, the prompt bank, part attention, and one
prediction head.  Only prompt contexts, attention parameters, and head
classifier parameters train; encoder weights and class embeddings stay
frozen (checksummed before/after to audit this).

Everything is deterministic given (seed_data, seed_model): seed_data drives
the few-shot split, seed_model drives parameter init and batch shuffling.
Wall-clock timings are reported but excluded from report equality and never
written into CSV or SVG outputs.
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .attention import PartAttention
from .container import Reader, Writer
from .data import Dataset, SyntheticSpec, few_shot_split, generate, load_dataset
from .encoders import FrozenImageEncoder, FrozenTextEncoder, load_features
from .errors import ConfigError, DataError, FormatError
from .heads import HeadKind, build_head
from .numerics import Parameter, Sgd, Tensor, backward, constant, cross_entropy, no_grad
from .prompts import PromptBank, PromptFeatures, manual_features
from . import report as rpt

MODEL_MAGIC = b"XRVP"
MODEL_VERSION = 1

PARAMS_FILE = "params.xrvp"
CONFIG_FILE = "config.json"
REPORT_FILE = "report.json"


# --- configuration -------------------------------------------------------------


@dataclass
class TrainConfig:
    head: str = "CRM_FULL"
    num_parts: int = 4
    ctx_len: int = 16
    scale: float = 64.0
    feat_dim: int = 64
    word_dim: int = 32
    proj_dim: int | None = None
    head_hidden: int | None = None
    epochs: int = 100
    lr0: float = 2e-3
    weight_decay: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 32
    shots: int = 16
    seed_data: int = 0
    seed_model: int = 0
    encoder_seed: int = 7
    data_spec: dict | None = None
    data_file: str | None = None
    prompt_mode: str = "learned"
    prompt_file: str | None = None
    squared_denominator: bool = False
    normalize_prompts: bool = False
    cosine_loss_scale: float = 64.0

    def validate(self) -> None:
        HeadKind.parse(self.head)
        if self.num_parts < 1:
            raise ConfigError(f"need num_parts >= 1, got {self.num_parts}")
        if self.ctx_len < 1:
            raise ConfigError(f"need ctx_len >= 1, got {self.ctx_len}")
        if self.scale <= 0:
            raise ConfigError(f"need scale > 0, got {self.scale}")
        if self.feat_dim < 1 or self.word_dim < 1:
            raise ConfigError(f"need positive dims, got {self.feat_dim}, {self.word_dim}")
        if self.proj_dim is not None and self.proj_dim < 1:
            raise ConfigError(f"need proj_dim >= 1, got {self.proj_dim}")
        if self.head_hidden is not None and self.head_hidden < 1:
            raise ConfigError(f"need head_hidden >= 1, got {self.head_hidden}")
        if self.epochs < 1:
            raise ConfigError(f"need epochs >= 1, got {self.epochs}")
        if self.lr0 <= 0:
            raise ConfigError(f"need lr0 > 0, got {self.lr0}")
        if self.weight_decay < 0:
            raise ConfigError(f"need weight_decay >= 0, got {self.weight_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"need momentum in [0, 1), got {self.momentum}")
        if self.batch_size < 2:
            raise ConfigError(f"batch norm needs batch_size >= 2, got {self.batch_size}")
        if self.shots < 1:
            raise ConfigError(f"need shots >= 1, got {self.shots}")
        for name in ("seed_data", "seed_model", "encoder_seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"need {name} >= 0, got {getattr(self, name)}")
        if self.cosine_loss_scale <= 0:
            raise ConfigError(f"need cosine_loss_scale > 0, got {self.cosine_loss_scale}")
        if self.prompt_mode not in ("learned", "manual"):
            raise ConfigError(f"prompt_mode must be 'learned' or 'manual', got {self.prompt_mode!r}")
        if self.prompt_mode == "manual" and not self.prompt_file:
            raise ConfigError("manual prompt_mode requires prompt_file")
        if self.data_spec is not None and self.data_file is not None:
            raise ConfigError("data_spec and data_file are mutually exclusive")
        if self.data_spec is not None:
            SyntheticSpec.from_dict(self.data_spec).validate()

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


def config_dataset(config: TrainConfig) -> Dataset:
    """Materialize the dataset the config points at (file or generator spec)."""
    if config.data_file is not None:
        return load_dataset(config.data_file)
    spec = SyntheticSpec.from_dict(config.data_spec) if config.data_spec else SyntheticSpec()
    return generate(spec)


def _seed_stream(seed_model: int, k: int) -> int:
    # disjoint child seeds per module as long as k < 10
    return seed_model * 10 + k


# --- model ---------------------------------------------------------------------


class Model:
    """Frozen encoders + prompt bank + part attention + prediction head."""

    def __init__(
        self,
        config: TrainConfig,
        num_classes: int,
        patch_dim: int,
        text_encoder: FrozenTextEncoder,
        image_encoder: FrozenImageEncoder,
        bank: PromptBank | None,
        manual: PromptFeatures | None,
        attention: PartAttention,
        head,
    ):
        self.config = config
        self.kind = HeadKind.parse(config.head)
        self.num_classes = num_classes
        self.patch_dim = patch_dim
        self.text_encoder = text_encoder
        self.image_encoder = image_encoder
        self.bank = bank
        self.manual = manual
        self.attention = attention
        self.head = head

    def params(self) -> list[Parameter]:
        out = []
        if self.bank is not None:
            out += self.bank.params()
        out += self.attention.params()
        out += self.head.params()
        return out

    def param_count(self) -> int:
        return int(sum(p.tensor.values.size for p in self.params() if not p.frozen))

    def prompt_features(self) -> PromptFeatures | None:
        if self.kind == HeadKind.MLPS:
            return None
        if self.manual is not None:
            return self.manual
        return self.bank.encode(self.text_encoder)

    def logits(self, feats: Tensor, training: bool) -> Tensor:
        """feats (b, tokens, feat_dim) -> logits (b, classes)."""
        v, _ = self.attention.forward(feats, training)
        return self.head.logits(v, self.prompt_features(), training)

    def loss(self, feats: Tensor, labels: np.ndarray, training: bool = True) -> Tensor:
        """Cross-entropy objective.

        Cosine-valued heads (ALIGN, PWCS) are bounded to [-1, 1], so the loss
        applies a fixed temperature to them; reported logits stay plain
        cosines and argmax predictions are unaffected.
        """
        logits = self.logits(feats, training)
        if self.kind in (HeadKind.ALIGN, HeadKind.PWCS):
            logits = logits * self.config.cosine_loss_scale
        return cross_entropy(logits, labels)

    def batch_norms(self) -> dict:
        out = {"attn.bn": self.attention.bn}
        if self.kind == HeadKind.MLPS:
            for i, mlp in enumerate(self.head.mlps):
                out[f"head.part{i}.bn"] = mlp.bn
        elif self.kind not in (HeadKind.ALIGN, HeadKind.PWCS):
            out["head.clf.bn"] = self.head.clf.bn
        return out

    def frozen_checksums(self) -> dict[str, str]:
        import hashlib

        out = {
            "text_encoder": self.text_encoder.checksum(),
            "image_encoder": self.image_encoder.checksum(),
        }
        if self.bank is not None:
            emb = self.bank.class_embeddings.tensor.values
            out["class_embeddings"] = hashlib.sha256(
                np.ascontiguousarray(emb).tobytes()
            ).hexdigest()
        if self.manual is not None:
            out["manual_prompts"] = hashlib.sha256(
                np.ascontiguousarray(self.manual.tensor.values).tobytes()
            ).hexdigest()
        return out


def _assemble(
    config: TrainConfig,
    num_classes: int,
    patch_dim: int,
    class_embeddings: np.ndarray | None,
    manual_values: np.ndarray | None,
) -> Model:
    kind = HeadKind.parse(config.head)
    text_encoder = FrozenTextEncoder(
        config.encoder_seed, config.word_dim, config.feat_dim, config.ctx_len + 1
    )
    image_encoder = FrozenImageEncoder(config.encoder_seed + 1, patch_dim, config.feat_dim)

    bank = None
    manual = None
    if kind != HeadKind.MLPS:
        if manual_values is not None:
            manual_values = np.asarray(manual_values, dtype=np.float64)
            want = (num_classes, config.num_parts, config.feat_dim)
            if manual_values.shape != want:
                raise ConfigError(
                    f"manual prompt features must be {want}, got {manual_values.shape}"
                )
            manual = manual_features(manual_values)
        else:
            if class_embeddings is None:
                raise ConfigError("learned prompt_mode needs class embeddings")
            if class_embeddings.shape[1] != config.word_dim:
                raise ConfigError(
                    f"class embedding dim {class_embeddings.shape[1]} "
                    f"does not match word_dim {config.word_dim}"
                )
            bank = PromptBank(
                class_embeddings,
                config.num_parts,
                config.ctx_len,
                seed=_seed_stream(config.seed_model, 0),
            )

    attention = PartAttention(
        config.feat_dim,
        config.num_parts,
        seed=_seed_stream(config.seed_model, 1),
        proj_dim=config.proj_dim,
        scale=config.scale,
        squared_denominator=config.squared_denominator,
    )
    head = build_head(
        kind,
        num_classes,
        config.num_parts,
        attention.proj_dim,
        seed=_seed_stream(config.seed_model, 2),
        hidden=config.head_hidden,
        normalize_prompts=config.normalize_prompts,
    )
    return Model(
        config, num_classes, patch_dim, text_encoder, image_encoder, bank, manual, attention, head
    )


def build_model(config: TrainConfig, ds: Dataset) -> Model:
    """Assemble a freshly initialized model sized for the dataset."""
    config.validate()
    manual_values = None
    if config.prompt_mode == "manual":
        manual_values, _ = load_features(config.prompt_file)
    return _assemble(
        config,
        ds.num_classes,
        ds.spec.patch_dim,
        np.asarray(ds.class_embeddings, dtype=np.float64),
        manual_values,
    )


# --- text-side helpers -----------------------------------------------------------


def class_name_embeddings(config: TrainConfig, class_embeddings: np.ndarray) -> np.ndarray:
    """Text-encode each bare class name: the embedding tiled over all positions."""
    enc = FrozenTextEncoder(
        config.encoder_seed, config.word_dim, config.feat_dim, config.ctx_len + 1
    )
    emb = np.asarray(class_embeddings, dtype=np.float64)
    seqs = np.repeat(emb[:, None, :], config.ctx_len + 1, axis=1)
    with no_grad():
        return enc.encode(constant(seqs)).values.copy()


def manual_prompt_features(config: TrainConfig, class_embeddings: np.ndarray) -> np.ndarray:
    """Frozen (classes, parts, feat_dim) features: the class-name encoding per part."""
    names = class_name_embeddings(config, class_embeddings)
    return np.repeat(names[:, None, :], config.num_parts, axis=1)


def random_prompt_features(config: TrainConfig, num_classes: int, seed: int = 0) -> np.ndarray:
    """Frozen standard-normal (classes, parts, feat_dim) features, for robustness runs."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, size=(num_classes, config.num_parts, config.feat_dim))


# --- training and evaluation -----------------------------------------------------


@dataclass
class RunReport:
    head: str
    seed_data: int
    seed_model: int
    train_accuracy: float
    test_accuracy: float
    num_train: int
    num_test: int
    param_count: int
    epoch_losses: list[float]
    epoch_lrs: list[float]
    config: dict
    notes: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunReport":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown report keys: {', '.join(unknown)}")
        return cls(**raw)

    def to_json(self) -> str:
        return rpt.json_text(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def predict_logits(model: Model, patches: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Eval-mode logits (n, classes) for raw patch arrays, computed in chunks."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape[0] == 0:
        raise DataError("empty split")
    feats = model.image_encoder.encode(patches)
    outs = []
    with no_grad():
        for start in range(0, feats.shape[0], chunk):
            block = constant(feats[start : start + chunk])
            outs.append(model.logits(block, training=False).values)
    return np.concatenate(outs, axis=0)


def evaluate(model: Model, patches: np.ndarray, labels: np.ndarray, chunk: int = 256) -> float:
    """Argmax-logit accuracy; ties break toward the lowest class index."""
    logits = predict_logits(model, patches, chunk)
    preds = np.argmax(logits, axis=1)
    return float(np.mean(preds == np.asarray(labels)))


def train(config: TrainConfig, dataset: Dataset | None = None) -> tuple[Model, RunReport]:
    """Few-shot training with SGD + cosine schedule; deterministic given seeds."""
    config.validate()
    ds = dataset if dataset is not None else config_dataset(config)
    patches, labels, _ = few_shot_split(ds, config.shots, config.seed_data)
    model = build_model(config, ds)
    before = model.frozen_checksums()

    feats = model.image_encoder.encode(patches)
    n = feats.shape[0]
    notes: list[str] = []
    if n % config.batch_size == 1:
        msg = "dropping singleton tail batch each epoch (batch norm needs >= 2 samples)"
        warnings.warn(msg)
        notes.append(msg)

    params = model.params()
    opt = Sgd(
        lr0=config.lr0,
        weight_decay=config.weight_decay,
        momentum=config.momentum,
        total_epochs=config.epochs,
    )
    shuffle_rng = np.random.default_rng(_seed_stream(config.seed_model, 3))

    losses: list[float] = []
    lrs: list[float] = []
    wall0, cpu0 = time.perf_counter(), time.process_time()
    for epoch in range(config.epochs):
        opt.epoch = epoch
        lrs.append(opt.lr())
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue
            opt.zero_grads(params)
            loss = model.loss(constant(feats[idx]), labels[idx], training=True)
            backward(loss)
            opt.step(params)
            total += float(loss.values) * idx.size
            seen += idx.size
        losses.append(total / seen)
    wall, cpu = time.perf_counter() - wall0, time.process_time() - cpu0

    after = model.frozen_checksums()
    if after != before:
        raise ConfigError("frozen parameters changed during training")

    report = RunReport(
        head=config.head,
        seed_data=config.seed_data,
        seed_model=config.seed_model,
        train_accuracy=evaluate(model, patches, labels),
        test_accuracy=evaluate(model, ds.test_patches, ds.test_labels),
        num_train=int(n),
        num_test=int(ds.test_labels.shape[0]),
        param_count=model.param_count(),
        epoch_losses=losses,
        epoch_lrs=lrs,
        config=config.to_dict(),
        notes=notes,
        timing={"train_wall_seconds": wall, "train_cpu_seconds": cpu},
    )
    return model, report


# --- head comparison ---------------------------------------------------------------


@dataclass
class ComparisonResult:
    kinds: list[str]
    num_seeds: int
    rows: list[dict]
    summary: dict
    reports: list[RunReport]

    CSV_HEADER = ["head", "seed_model", "seed_data", "train_accuracy", "test_accuracy"]

    def csv(self) -> str:
        rows = [
            [r["head"], r["seed_model"], r["seed_data"], r["train_accuracy"], r["test_accuracy"]]
            for r in self.rows
        ]
        for kind in self.kinds:
            s = self.summary[kind]
            rows.append([kind, "mean", "", s["mean_train"], s["mean_test"]])
            rows.append([kind, "std", "", s["std_train"], s["std_test"]])
        return rpt.csv_text(self.CSV_HEADER, rows)

    def to_dict(self) -> dict:
        return {
            "kinds": self.kinds,
            "num_seeds": self.num_seeds,
            "rows": self.rows,
            "summary": self.summary,
        }


def compare_heads(
    config: TrainConfig,
    kinds: list[str],
    num_seeds: int = 5,
    dataset: Dataset | None = None,
) -> ComparisonResult:
    """Train every head kind on identical data, splits, and shared-module seeds.

    Run i uses seed_model + i and seed_data + i, the same pair for every kind,
    so prompt-bank and attention initializations match across kinds.
    """
    kind_names = [HeadKind.parse(k).value for k in kinds]
    if len(kind_names) < 2:
        raise ConfigError(f"need at least 2 head kinds, got {kind_names}")
    if len(set(kind_names)) != len(kind_names):
        raise ConfigError(f"duplicate head kinds: {kind_names}")
    if num_seeds < 1:
        raise ConfigError(f"need num_seeds >= 1, got {num_seeds}")
    ds = dataset if dataset is not None else config_dataset(config)

    # keyed merge: results are collected by (kind, run) and emitted in canonical
    # order, so aggregation does not depend on execution order
    by_key: dict[tuple[str, int], RunReport] = {}
    for kind in kind_names:
        for i in range(num_seeds):
            cfg = replace(
                config,
                head=kind,
                seed_model=config.seed_model + i,
                seed_data=config.seed_data + i,
            )
            _, report = train(cfg, ds)
            by_key[(kind, i)] = report

    rows = []
    summary = {}
    reports = []
    for kind in kind_names:
        train_accs, test_accs = [], []
        for i in range(num_seeds):
            r = by_key[(kind, i)]
            reports.append(r)
            rows.append(
                {
                    "head": kind,
                    "seed_model": r.seed_model,
                    "seed_data": r.seed_data,
                    "train_accuracy": r.train_accuracy,
                    "test_accuracy": r.test_accuracy,
                }
            )
            train_accs.append(r.train_accuracy)
            test_accs.append(r.test_accuracy)
        summary[kind] = {
            "mean_train": float(np.mean(train_accs)),
            "std_train": float(np.std(train_accs)),
            "mean_test": float(np.mean(test_accs)),
            "std_test": float(np.std(test_accs)),
        }
    return ComparisonResult(kind_names, num_seeds, rows, summary, reports)


# --- prompt-count sweep --------------------------------------------------------------


@dataclass
class SweepResult:
    parts: list[int]
    rows: list[dict]
    flags: dict

    CSV_HEADER = ["num_parts", "train_accuracy", "test_accuracy", "is_default"]

    def csv(self) -> str:
        rows = [
            [r["num_parts"], r["train_accuracy"], r["test_accuracy"], int(r["is_default"])]
            for r in self.rows
        ]
        return rpt.csv_text(self.CSV_HEADER, rows)

    def svg(self) -> str:
        xs = [float(r["num_parts"]) for r in self.rows]
        series = {
            "train": [r["train_accuracy"] for r in self.rows],
            "test": [r["test_accuracy"] for r in self.rows],
        }
        return rpt.svg_lines(xs, series, "accuracy vs part count", "parts", "accuracy")

    def to_dict(self) -> dict:
        return {"parts": self.parts, "rows": self.rows, "flags": self.flags}


def sweep_parts(
    config: TrainConfig, parts: list[int], dataset: Dataset | None = None
) -> SweepResult:
    """One train/eval per part count with shared seeds; records CPU runtime."""
    parts = [int(s) for s in parts]
    if not parts:
        raise ConfigError("need at least one part count")
    for s in parts:
        if s < 1:
            raise ConfigError(f"part counts must be >= 1, got {s}")
    if len(set(parts)) != len(parts):
        raise ConfigError(f"duplicate part counts: {parts}")
    ds = dataset if dataset is not None else config_dataset(config)

    by_key: dict[int, RunReport] = {}
    for s in parts:
        cfg = replace(config, num_parts=s)
        _, report = train(cfg, ds)
        by_key[s] = report

    rows = []
    for s in parts:
        r = by_key[s]
        rows.append(
            {
                "num_parts": s,
                "train_accuracy": r.train_accuracy,
                "test_accuracy": r.test_accuracy,
                "is_default": s == 4,
                "train_cpu_seconds": r.timing["train_cpu_seconds"],
            }
        )

    ordered = sorted(rows, key=lambda r: r["num_parts"])
    runtimes = [r["train_cpu_seconds"] for r in ordered]
    best = max(rows, key=lambda r: (r["test_accuracy"], -r["num_parts"]))
    default_rows = [r for r in rows if r["num_parts"] == 4]
    flags = {
        "runtime_monotone": bool(
            all(a < b for a, b in zip(runtimes, runtimes[1:]))
        ),
        "best_parts": int(best["num_parts"]),
        "best_test_accuracy": float(best["test_accuracy"]),
        "default_within_one_point": (
            bool(best["test_accuracy"] - default_rows[0]["test_accuracy"] <= 0.01 + 1e-12)
            if default_rows
            else None
        ),
    }
    return SweepResult(parts, rows, flags)


# --- embedding analyses --------------------------------------------------------------


def analyze_embeddings(embeddings: np.ndarray, bins: int = 10) -> dict:
    """Nearest-neighbor distance structure of row vectors (classes, dim)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise DataError(f"embeddings must be 2-d, got shape {emb.shape}")
    if emb.shape[0] < 2:
        raise DataError(f"need at least 2 embeddings, got {emb.shape[0]}")
    if bins < 1:
        raise DataError(f"need bins >= 1, got {bins}")
    diff = emb[:, None, :] - emb[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    min_d = np.sqrt(np.min(d2, axis=1))
    counts, edges = np.histogram(min_d, bins=bins)
    return {
        "min_distances": min_d,
        "counts": counts,
        "edges": edges,
        "mean": float(np.mean(min_d)),
        "median": float(np.median(min_d)),
    }


def project_2d(embeddings: np.ndarray) -> np.ndarray:
    """Top-2 principal-component coordinates (classes, 2).

    Rank-deficient input pads missing components with zeros.  Sign convention:
    within each component the largest-magnitude coordinate is positive.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 3:
        raise DataError(f"need at least 3 embeddings (rows), got shape {emb.shape}")
    centered = emb - emb.mean(axis=0, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    k = min(2, s.size)
    coords = np.zeros((emb.shape[0], 2))
    coords[:, :k] = u[:, :k] * s[:k]
    for j in range(2):
        pivot = np.argmax(np.abs(coords[:, j]))
        if coords[pivot, j] < 0:
            coords[:, j] = -coords[:, j]
    return coords


# --- attention export ------------------------------------------------------------------


def export_attention(
    model: Model, patches: np.ndarray, part_ids: np.ndarray, limit: int | None = None
) -> list[dict]:
    """Eval-mode attention rows per sample: weights (tokens, parts + 1) + truth."""
    patches = np.asarray(patches, dtype=np.float64)
    part_ids = np.asarray(part_ids)
    if patches.shape[0] == 0:
        raise DataError("empty split")
    if limit is not None:
        patches = patches[:limit]
        part_ids = part_ids[:limit]
    feats = model.image_encoder.encode(patches)
    with no_grad():
        _, weights = model.attention.forward(constant(feats), training=False)
        logits = predict_logits(model, patches)
    preds = np.argmax(logits, axis=1)
    return [
        {
            "index": int(i),
            "weights": weights.values[i].copy(),
            "part_ids": part_ids[i].copy(),
            "prediction": int(preds[i]),
        }
        for i in range(patches.shape[0])
    ]


def mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """MI in nats between two integer label arrays of equal length."""
    x = np.asarray(x, dtype=np.int64).ravel()
    y = np.asarray(y, dtype=np.int64).ravel()
    if x.shape != y.shape or x.size == 0:
        raise DataError(f"labels must be equal-length and nonempty, got {x.shape}, {y.shape}")
    joint = np.zeros((int(x.max()) + 1, int(y.max()) + 1))
    np.add.at(joint, (x, y), 1.0)
    p = joint / x.size
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (px @ py)[nz])))


def attention_alignment(samples: list[dict], seed: int = 0) -> dict:
    """Dominant-slot vs ground-truth part id MI, against a permuted baseline."""
    if not samples:
        raise DataError("no samples")
    dominant = np.concatenate([np.argmax(s["weights"], axis=1) for s in samples])
    truth = np.concatenate([np.asarray(s["part_ids"]) for s in samples])
    rng = np.random.default_rng(seed)
    permuted = rng.permutation(truth)
    return {
        "mutual_information": mutual_information(dominant, truth),
        "permuted_mutual_information": mutual_information(dominant, permuted),
    }


# --- model persistence --------------------------------------------------------------


def save_model(dir_path: str, model: Model, report: RunReport | None = None) -> None:
    """Write params.xrvp + config.json (+ report.json) into dir_path."""
    os.makedirs(dir_path, exist_ok=True)
    w = Writer(MODEL_MAGIC, MODEL_VERSION)
    arrays: list[tuple[str, np.ndarray]] = [
        (p.name, p.tensor.values) for p in model.params()
    ]
    if model.manual is not None:
        arrays.append(("prompts.manual", model.manual.tensor.values))
    for name, bn in sorted(model.batch_norms().items()):
        state = bn.state()
        arrays.append((f"{name}.running_mean", state["running_mean"]))
        arrays.append((f"{name}.running_var", state["running_var"]))
    w.u32(len(arrays))
    for name, values in arrays:
        w.tagged_array(name, values, np.float64)
    w.metadata(
        {
            "num_classes": model.num_classes,
            "patch_dim": model.patch_dim,
            "head": model.config.head,
        }
    )
    rpt.write_atomic_bytes(os.path.join(dir_path, PARAMS_FILE), w.bytes())
    rpt.write_atomic(os.path.join(dir_path, CONFIG_FILE), rpt.json_text(model.config.to_dict()))
    if report is not None:
        rpt.write_atomic(os.path.join(dir_path, REPORT_FILE), report.to_json())


def load_model(dir_path: str) -> tuple[Model, RunReport | None]:
    """Rebuild a model from a save_model directory."""
    config = TrainConfig.from_json_file(os.path.join(dir_path, CONFIG_FILE))
    with open(os.path.join(dir_path, PARAMS_FILE), "rb") as f:
        r = Reader(f.read())
    r.magic(MODEL_MAGIC)
    r.version(MODEL_VERSION)
    count = r.u32("array count")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name, values = r.tagged_array("model array")
        arrays[name] = values
    meta = r.metadata()
    r.done()
    for key in ("num_classes", "patch_dim"):
        if key not in meta:
            raise FormatError(f"model metadata missing {key!r}", offset=0)

    model = _assemble(
        config,
        int(meta["num_classes"]),
        int(meta["patch_dim"]),
        arrays.get("prompts.class_embeddings"),
        arrays.get("prompts.manual"),
    )
    for p in model.params():
        if p.name not in arrays:
            raise DataError(f"model file missing parameter {p.name!r}")
        stored = arrays[p.name]
        if stored.shape != p.tensor.values.shape:
            raise DataError(
                f"parameter {p.name!r} has shape {stored.shape}, "
                f"expected {p.tensor.values.shape}"
            )
        p.tensor.values = stored.astype(np.float64).copy()
    for name, bn in model.batch_norms().items():
        mean_key, var_key = f"{name}.running_mean", f"{name}.running_var"
        if mean_key not in arrays or var_key not in arrays:
            raise DataError(f"model file missing batch-norm state for {name!r}")
        bn.load_state({"running_mean": arrays[mean_key], "running_var": arrays[var_key]})

    report = None
    report_path = os.path.join(dir_path, REPORT_FILE)
    if os.path.exists(report_path):
        with open(report_path, encoding="utf-8") as f:
            report = RunReport.from_json(f.read())
    return model, report
