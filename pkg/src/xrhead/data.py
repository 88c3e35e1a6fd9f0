"""Synthetic fine-grained benchmark.

Images are bags of patch vectors.  Every patch is the sum of a part anchor
(shared by all classes, it identifies which part a patch belongs to), a class
prototype for that part, and gaussian noise.  Token order is round-robin over
part slots with slot 0 reserved for background, so ground-truth part ids are
known.  Classes group into superclasses that share prototype structure, which
keeps the problem fine-grained: telling siblings apart is the hard part.

cross_structure makes sibling classes use permutations of one shared
prototype set, so siblings differ only in which part carries which pattern.
When enough rotation-inequivalent permutations exist, each image additionally
draws a random cyclic style shift applied to every part jointly; the per-part
pattern marginals then match exactly across siblings and only the joint
part-to-pattern pairing identifies the class.  With too few permutations
(e.g. true_parts 2) the assignment stays deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .container import Reader, Writer
from .errors import DataError, FormatError

DATASET_MAGIC = b"XRVD"
DATASET_VERSION = 1


@dataclass
class SyntheticSpec:
    num_classes: int = 20
    num_superclasses: int = 5
    true_parts: int = 4
    tokens_per_image: int = 16
    patch_dim: int = 24
    noise: float = 0.3
    train_per_class: int = 32
    test_per_class: int = 64
    embed_dim: int = 32
    cross_structure: bool = False
    anchor_scale: float = 1.0
    pattern_scale: float = 1.0
    offset_scale: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        w, g, s = self.num_classes, self.num_superclasses, self.true_parts
        if w < 2:
            raise DataError(f"need at least 2 classes, got {w}")
        if g < 1 or w % g != 0:
            raise DataError(f"num_classes {w} must be a positive multiple of num_superclasses {g}")
        if s < 1:
            raise DataError(f"need true_parts >= 1, got {s}")
        if self.cross_structure and s < 2:
            raise DataError("cross_structure needs true_parts >= 2")
        if s > 8:
            raise DataError(f"true_parts {s} too large; permutation pools are enumerated")
        if self.tokens_per_image < s + 1:
            raise DataError(
                f"tokens_per_image {self.tokens_per_image} cannot cover {s} parts plus background"
            )
        if self.noise < 0:
            raise DataError(f"noise must be >= 0, got {self.noise}")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise DataError("need at least one sample per class in each split")
        if self.patch_dim < 1 or self.embed_dim < 1:
            raise DataError("patch_dim and embed_dim must be positive")
        siblings = w // g
        if self.cross_structure and math.factorial(s) < siblings:
            raise DataError(
                f"{siblings} sibling classes need {siblings} distinct assignments "
                f"but only {math.factorial(s)} permutations of {s} parts exist"
            )

    def num_styles(self) -> int:
        """Style shifts per image in cross mode; 1 when classes must stay fixed."""
        if not self.cross_structure:
            return 1
        siblings = self.num_classes // self.num_superclasses
        return self.true_parts if math.factorial(self.true_parts - 1) >= siblings else 1

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown dataset spec keys: {sorted(unknown)}")
        spec = cls(**raw)
        spec.validate()
        return spec


@dataclass
class Dataset:
    spec: SyntheticSpec
    train_patches: np.ndarray  # (n_train, tokens, patch_dim)
    train_labels: np.ndarray  # (n_train,)
    train_part_ids: np.ndarray  # (n_train, tokens), 0 = background
    test_patches: np.ndarray
    test_labels: np.ndarray
    test_part_ids: np.ndarray
    class_embeddings: np.ndarray  # (classes, embed_dim)
    superclass_of: np.ndarray  # (classes,)
    templates: np.ndarray  # (classes, styles, true_parts + 1, patch_dim), noise-free token means
    prototypes: np.ndarray  # (classes, true_parts, patch_dim), class part components at style 0
    base_perms: np.ndarray  # (classes, true_parts) pattern index per part, style 0
    class_names: list[str] = field(default_factory=list)
    part_names: list[str] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes


def _select_perms(rng: np.random.Generator, true_parts: int, count: int, rotation_free: bool):
    """Distinct part-to-pattern assignments; optionally one per rotation orbit."""
    perms = list(itertools.permutations(range(true_parts)))
    if rotation_free:
        pool = []
        for p in perms:
            orbit = [tuple((x + r) % true_parts for x in p) for r in range(true_parts)]
            if min(orbit) == p:
                pool.append(p)
    else:
        pool = perms
    if len(pool) < count:
        raise DataError(f"only {len(pool)} usable assignments for {count} sibling classes")
    picked = rng.permutation(len(pool))[:count]
    return [pool[i] for i in picked]


def generate(spec: SyntheticSpec) -> Dataset:
    """Build a dataset deterministically from the spec (including its seed)."""
    spec.validate()
    w, g, s = spec.num_classes, spec.num_superclasses, spec.true_parts
    n, d = spec.tokens_per_image, spec.patch_dim
    siblings = w // g
    styles = spec.num_styles()
    rng = np.random.default_rng(spec.seed)

    # structural draws first, then sampling, so layouts stay reproducible
    anchors = rng.normal(0.0, 1.0, size=(s + 1, d)) * spec.anchor_scale  # slot 0 = background
    patterns = rng.normal(0.0, 1.0, size=(g, s, d)) * spec.pattern_scale
    offsets = rng.normal(0.0, 1.0, size=(w, s, d)) * spec.offset_scale
    proj = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, spec.embed_dim))

    base_perms = np.zeros((w, s), dtype=np.int64)
    if spec.cross_structure:
        for sc in range(g):
            for j, perm in enumerate(_select_perms(rng, s, siblings, styles > 1)):
                base_perms[sc * siblings + j] = perm
    else:
        base_perms[:] = np.arange(s)

    superclass_of = np.arange(w) // siblings
    templates = np.zeros((w, styles, s + 1, d))
    prototypes = np.zeros((w, s, d))
    for c in range(w):
        sc = superclass_of[c]
        for p in range(s):
            prototypes[c, p] = patterns[sc, base_perms[c, p]]
            if not spec.cross_structure:
                prototypes[c, p] += offsets[c, p]
        for r in range(styles):
            templates[c, r, 0] = anchors[0]
            for p in range(s):
                pattern_id = (base_perms[c, p] + r) % s
                templates[c, r, 1 + p] = anchors[1 + p] + patterns[sc, pattern_id]
                if not spec.cross_structure:
                    templates[c, r, 1 + p] += offsets[c, p]

    class_means = templates[:, 0, 1:, :].mean(axis=1)  # (w, d)
    class_embeddings = class_means @ proj

    slots = np.arange(n) % (s + 1)  # round-robin part assignment, 0 = background

    def sample(count: int):
        patches = np.zeros((w * count, n, d))
        labels = np.zeros(w * count, dtype=np.int64)
        part_ids = np.tile(slots, (w * count, 1)).astype(np.int64)
        for c in range(w):
            chosen = rng.integers(0, styles, size=count)
            noise = rng.normal(0.0, spec.noise, size=(count, n, d)) if spec.noise > 0 else 0.0
            block = templates[c][chosen][:, slots, :] + noise
            patches[c * count : (c + 1) * count] = block
            labels[c * count : (c + 1) * count] = c
        return patches, labels, part_ids

    train_patches, train_labels, train_part_ids = sample(spec.train_per_class)
    test_patches, test_labels, test_part_ids = sample(spec.test_per_class)

    return Dataset(
        spec=spec,
        train_patches=train_patches,
        train_labels=train_labels,
        train_part_ids=train_part_ids,
        test_patches=test_patches,
        test_labels=test_labels,
        test_part_ids=test_part_ids,
        class_embeddings=class_embeddings,
        superclass_of=superclass_of,
        templates=templates,
        prototypes=prototypes,
        base_perms=base_perms,
        class_names=[f"class_{i:03d}" for i in range(w)],
        part_names=["background"] + [f"part_{i}" for i in range(s)],
    )


def few_shot_split(ds: Dataset, shots: int, seed: int):
    """Pick `shots` train samples per class without replacement.

    Returns (patches, labels, part_ids) in class-major order.
    """
    if shots < 1 or shots > ds.spec.train_per_class:
        raise DataError(
            f"shots must lie in [1, {ds.spec.train_per_class}], got {shots}"
        )
    rng = np.random.default_rng(seed)
    rows = []
    per = ds.spec.train_per_class
    for c in range(ds.num_classes):
        pick = rng.permutation(per)[:shots]
        rows.append(c * per + np.sort(pick))
    rows = np.concatenate(rows)
    return ds.train_patches[rows], ds.train_labels[rows], ds.train_part_ids[rows]


def nearest_prototype_accuracy(ds: Dataset, split: str = "test") -> float:
    """Oracle matcher: nearest noise-free template over (class, style).

    Uses ground-truth part ids; with noise 0 and distinct templates this
    reaches 1.0, which bounds what any classifier can hope for.
    """
    patches = ds.test_patches if split == "test" else ds.train_patches
    labels = ds.test_labels if split == "test" else ds.train_labels
    part_ids = ds.test_part_ids if split == "test" else ds.train_part_ids
    w, styles = ds.templates.shape[0], ds.templates.shape[1]
    hits = 0
    for i in range(patches.shape[0]):
        expected = ds.templates[:, :, part_ids[i], :]  # (w, styles, tokens, d)
        dist = ((patches[i][None, None] - expected) ** 2).sum(axis=(2, 3))
        best = np.unravel_index(np.argmin(dist), (w, styles))[0]
        hits += int(best == labels[i])
    return hits / patches.shape[0]


# --- dataset files ------------------------------------------------------------


def save_dataset(path: str, ds: Dataset) -> None:
    w = Writer(DATASET_MAGIC, DATASET_VERSION)
    arrays = [
        ("train_patches", ds.train_patches, "<f8"),
        ("train_labels", ds.train_labels, "<i8"),
        ("train_part_ids", ds.train_part_ids, "<i8"),
        ("test_patches", ds.test_patches, "<f8"),
        ("test_labels", ds.test_labels, "<i8"),
        ("test_part_ids", ds.test_part_ids, "<i8"),
        ("class_embeddings", ds.class_embeddings, "<f8"),
        ("superclass_of", ds.superclass_of, "<i8"),
        ("templates", ds.templates, "<f8"),
        ("prototypes", ds.prototypes, "<f8"),
        ("base_perms", ds.base_perms, "<i8"),
    ]
    w.u32(len(arrays))
    for name, values, dtype in arrays:
        w.tagged_array(name, values, np.dtype(dtype))
    w.metadata(
        {
            "spec": asdict(ds.spec),
            "class_names": ds.class_names,
            "part_names": ds.part_names,
        }
    )
    with open(path, "wb") as f:
        f.write(w.bytes())


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as f:
        data = f.read()
    r = Reader(data)
    r.magic(DATASET_MAGIC)
    r.version(DATASET_VERSION)
    count = r.u32("array count")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name, values = r.tagged_array("array")
        arrays[name] = values
    meta = r.metadata()
    r.done()
    needed = {
        "train_patches",
        "train_labels",
        "train_part_ids",
        "test_patches",
        "test_labels",
        "test_part_ids",
        "class_embeddings",
        "superclass_of",
        "templates",
        "prototypes",
        "base_perms",
    }
    missing = needed - set(arrays)
    if missing:
        raise FormatError(f"dataset file missing arrays: {sorted(missing)}")
    try:
        spec = SyntheticSpec.from_dict(meta.get("spec", {}))
    except (DataError, TypeError) as e:
        raise FormatError(f"dataset metadata has an invalid spec: {e}") from None
    ds = Dataset(
        spec=spec,
        class_names=list(meta.get("class_names", [])),
        part_names=list(meta.get("part_names", [])),
        **{k: arrays[k] for k in needed},
    )
    n, t = spec.num_classes * spec.train_per_class, spec.tokens_per_image
    if ds.train_patches.shape != (n, t, spec.patch_dim):
        raise FormatError(
            f"train_patches shape {ds.train_patches.shape} does not match spec"
        )
    if ds.test_patches.shape[0] != spec.num_classes * spec.test_per_class:
        raise FormatError("test_patches row count does not match spec")
    return ds
