"""Factorized synthetic data with independent generative factors.

Observations are built from uniformly drawn, mutually independent factors:
a task label, zero or more sensitive attributes, and an optional nuisance
(discrete or continuous-uniform). Each discrete factor occupies its own
block of signed-code dimensions (+/-1 bits of the class index, padded with
+1), blocks are optionally mixed by a fixed orthogonal matrix, and optional
isotropic Gaussian noise is added last. With zero noise the factor tuple ->
observation map is injective, so reference answers for information checks
are known exactly. Generation is a pure function of (spec, n): reruns are
bit-identical, and ablation regenerates the same stream with one attribute's
encoding pinned to class 0 while the recorded labels stay untouched.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ContainerChecksumError,
    ContainerFormatError,
    ContainerTruncationError,
    ContainerVersionError,
    InvariantError,
)

DATASET_FORMAT_VERSION = 1
SPLIT_FRACTIONS = (0.7, 0.15, 0.15)

_MIXINGS = ("identity", "orthogonal")
_NUISANCE_KINDS = ("discrete", "uniform")


def _code_bits(cardinality: int) -> int:
    return max(1, math.ceil(math.log2(cardinality)))


def _signed_code(labels: np.ndarray, cardinality: int, width: int) -> np.ndarray:
    """Encode class indices as +/-1 bit patterns padded with +1."""
    bits = _code_bits(cardinality)
    out = np.ones((labels.size, width), dtype=np.float64)
    for j in range(bits):
        out[:, j] = (((labels >> j) & 1) * 2 - 1).astype(np.float64)
    return out


@dataclass(frozen=True)
class GeneratorSpec:
    """Complete description of a synthetic dataset; the seed fixes everything."""

    task_classes: int
    sensitive_classes: tuple[int, ...]
    nuisance_kind: str = "discrete"
    nuisance_classes: int = 0
    nuisance_dim: int = 0
    embed_dim_per_factor: int = 1
    mixing: str = "identity"
    mixing_seed: int = 0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "sensitive_classes", tuple(int(k) for k in self.sensitive_classes)
        )
        self._validate()

    def _validate(self):
        if self.task_classes < 2:
            raise ConfigurationError(
                f"task_classes must be >= 2, got {self.task_classes}"
            )
        for i, k in enumerate(self.sensitive_classes):
            if k < 2:
                raise ConfigurationError(
                    f"sensitive_classes[{i}] must be >= 2, got {k}"
                )
        if self.nuisance_kind not in _NUISANCE_KINDS:
            raise ConfigurationError(
                f"nuisance_kind must be one of {_NUISANCE_KINDS}, got {self.nuisance_kind!r}"
            )
        if self.nuisance_classes < 0 or self.nuisance_classes == 1:
            raise ConfigurationError(
                f"nuisance_classes must be 0 (absent) or >= 2, got {self.nuisance_classes}"
            )
        if self.nuisance_dim < 0:
            raise ConfigurationError(
                f"nuisance_dim must be >= 0, got {self.nuisance_dim}"
            )
        if self.nuisance_kind == "discrete" and self.nuisance_dim != 0:
            raise ConfigurationError(
                "nuisance_dim applies to uniform nuisance only; set it to 0 for discrete"
            )
        if self.nuisance_kind == "uniform" and self.nuisance_classes != 0:
            raise ConfigurationError(
                "nuisance_classes applies to discrete nuisance only; set it to 0 for uniform"
            )
        needed = max(
            _code_bits(k) for k in self._coded_cardinalities()
        )
        if self.embed_dim_per_factor < needed:
            raise ConfigurationError(
                f"embed_dim_per_factor must be >= {needed} for injective factor codes, "
                f"got {self.embed_dim_per_factor}"
            )
        if self.mixing not in _MIXINGS:
            raise ConfigurationError(
                f"mixing must be one of {_MIXINGS}, got {self.mixing!r}"
            )
        if not self.noise_std >= 0.0:
            raise ConfigurationError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    def _coded_cardinalities(self) -> list[int]:
        cards = [self.task_classes, *self.sensitive_classes]
        if self.nuisance_kind == "discrete" and self.nuisance_classes >= 2:
            cards.append(self.nuisance_classes)
        return cards

    @property
    def n_sensitive(self) -> int:
        return len(self.sensitive_classes)

    @property
    def has_nuisance(self) -> bool:
        if self.nuisance_kind == "discrete":
            return self.nuisance_classes >= 2
        return self.nuisance_dim >= 1

    @property
    def nuisance_block_width(self) -> int:
        if not self.has_nuisance:
            return 0
        if self.nuisance_kind == "discrete":
            return self.embed_dim_per_factor
        return self.nuisance_dim

    @property
    def observation_dim(self) -> int:
        return (
            self.embed_dim_per_factor * (1 + self.n_sensitive)
            + self.nuisance_block_width
        )

    def block_slices(self) -> dict[str, slice]:
        """Named slices of the unmixed observation: task, each attribute, nuisance."""
        w = self.embed_dim_per_factor
        blocks = {"task": slice(0, w)}
        for i in range(self.n_sensitive):
            blocks[f"sensitive_{i}"] = slice((1 + i) * w, (2 + i) * w)
        if self.has_nuisance:
            start = (1 + self.n_sensitive) * w
            blocks["nuisance"] = slice(start, start + self.nuisance_block_width)
        return blocks

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensitive_classes"] = list(self.sensitive_classes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        try:
            return cls(**{k: (tuple(v) if k == "sensitive_classes" else v) for k, v in d.items()})
        except TypeError as exc:
            raise ContainerFormatError(f"bad generator spec in header: {exc}") from exc


def mixing_matrix(spec: GeneratorSpec) -> np.ndarray | None:
    """The fixed orthogonal mixing matrix, or None for identity mixing."""
    if spec.mixing != "orthogonal":
        return None
    d = spec.observation_dim
    rng = np.random.default_rng(spec.mixing_seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    return q


@dataclass(frozen=True)
class FactorSample:
    features: np.ndarray
    task_label: int
    sensitive_labels: tuple[int, ...]
    nuisance: object = None


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/validation/test index sets covering the dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)

    def check(self, n: int) -> None:
        merged = np.concatenate([self.train, self.validation, self.test])
        if merged.size != n or not np.array_equal(np.sort(merged), np.arange(n)):
            raise InvariantError("split parts must be disjoint and cover all indices")

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(),
            "validation": self.validation.tolist(),
            "test": self.test.tolist(),
        }


def _default_split(n: int) -> SplitIndices:
    n_train = int(SPLIT_FRACTIONS[0] * n)
    n_val = int(SPLIT_FRACTIONS[1] * n)
    n_train = max(1, n_train) if n >= 1 else 0
    idx = np.arange(n)
    return SplitIndices(
        train=idx[:n_train],
        validation=idx[n_train : n_train + n_val],
        test=idx[n_train + n_val :],
    )


@dataclass(frozen=True)
class FactorDataset:
    """Generated samples plus the spec and split that produced them."""

    spec: GeneratorSpec
    features: np.ndarray
    task_labels: np.ndarray
    sensitive_labels: np.ndarray
    nuisance: np.ndarray | None
    split: SplitIndices
    ablated: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "ablated", tuple(int(i) for i in self.ablated))
        n = self.features.shape[0]
        if self.task_labels.shape != (n,) or self.sensitive_labels.shape != (
            n,
            self.spec.n_sensitive,
        ):
            raise InvariantError("label arrays do not match the feature count")
        if self.features.shape[1] != self.spec.observation_dim:
            raise InvariantError("feature width does not match the spec")
        self.split.check(n)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_sensitive(self) -> int:
        return self.spec.n_sensitive

    @property
    def observation_dim(self) -> int:
        return int(self.features.shape[1])

    def sample(self, i: int) -> FactorSample:
        nuis = None
        if self.nuisance is not None:
            row = self.nuisance[i]
            nuis = int(row) if self.nuisance.ndim == 1 else row.copy()
        return FactorSample(
            features=self.features[i].copy(),
            task_label=int(self.task_labels[i]),
            sensitive_labels=tuple(int(v) for v in self.sensitive_labels[i]),
            nuisance=nuis,
        )


def generate_dataset(spec: GeneratorSpec, n: int, _ablated: tuple[int, ...] = ()) -> FactorDataset:
    """Draw n samples; a pure, bit-reproducible function of (spec, n).

    Factors are uniform and independent. `_ablated` is internal plumbing for
    ablate_sensitive: listed attribute indices are encoded as the constant
    class 0 while their recorded labels are kept.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    for i in _ablated:
        if not 0 <= i < spec.n_sensitive:
            raise ValueError(f"attribute index {i} out of range")

    rng = np.random.default_rng(spec.seed)
    task = rng.integers(0, spec.task_classes, size=n)
    sensitive = np.empty((n, spec.n_sensitive), dtype=np.int64)
    for j, k in enumerate(spec.sensitive_classes):
        sensitive[:, j] = rng.integers(0, k, size=n)
    nuisance = None
    if spec.has_nuisance:
        if spec.nuisance_kind == "discrete":
            nuisance = rng.integers(0, spec.nuisance_classes, size=n)
        else:
            nuisance = rng.uniform(-1.0, 1.0, size=(n, spec.nuisance_dim))

    w = spec.embed_dim_per_factor
    u = np.empty((n, spec.observation_dim), dtype=np.float64)
    u[:, 0:w] = _signed_code(task, spec.task_classes, w)
    for j, k in enumerate(spec.sensitive_classes):
        col = np.zeros(n, dtype=np.int64) if j in _ablated else sensitive[:, j]
        u[:, (1 + j) * w : (2 + j) * w] = _signed_code(col, k, w)
    if spec.has_nuisance:
        start = (1 + spec.n_sensitive) * w
        if spec.nuisance_kind == "discrete":
            u[:, start : start + w] = _signed_code(nuisance, spec.nuisance_classes, w)
        else:
            u[:, start : start + spec.nuisance_dim] = nuisance

    q = mixing_matrix(spec)
    x = u @ q.T if q is not None else u
    if spec.noise_std > 0.0:
        x = x + spec.noise_std * rng.standard_normal((n, spec.observation_dim))

    if nuisance is not None:
        nuisance = (
            nuisance.astype(np.int32)
            if spec.nuisance_kind == "discrete"
            else nuisance.astype(np.float32)
        )
    return FactorDataset(
        spec=spec,
        features=x.astype(np.float32),
        task_labels=task.astype(np.int32),
        sensitive_labels=sensitive.astype(np.int32),
        nuisance=nuisance,
        split=_default_split(n),
        ablated=tuple(sorted(_ablated)),
    )


def ablate_sensitive(dataset: FactorDataset, attribute_index: int) -> FactorDataset:
    """Regenerate the dataset with one attribute's encoding pinned to class 0.

    Same seed, same factor draws, same noise; only the selected attribute
    stops influencing the observations. Recorded labels are preserved, so
    downstream probes can still ask how recoverable the attribute is.
    """
    if not 0 <= attribute_index < dataset.n_sensitive:
        raise ValueError(f"attribute index {attribute_index} out of range")
    ablated = tuple(sorted(set(dataset.ablated) | {int(attribute_index)}))
    return generate_dataset(dataset.spec, len(dataset), _ablated=ablated)


def _payload_bytes(dataset: FactorDataset) -> bytes:
    parts = [dataset.features.astype("<f4").tobytes(order="C")]
    parts.append(dataset.task_labels.astype("<i4").tobytes())
    for j in range(dataset.n_sensitive):
        parts.append(dataset.sensitive_labels[:, j].astype("<i4").tobytes())
    if dataset.nuisance is not None:
        kind = dataset.spec.nuisance_kind
        parts.append(
            dataset.nuisance.astype("<i4" if kind == "discrete" else "<f4").tobytes(order="C")
        )
    return b"".join(parts)


def dataset_checksum(dataset: FactorDataset) -> str:
    return hashlib.sha256(_payload_bytes(dataset)).hexdigest()


def _expected_payload_size(spec: GeneratorSpec, n: int) -> int:
    size = 4 * n * spec.observation_dim + 4 * n + 4 * n * spec.n_sensitive
    if spec.has_nuisance:
        size += 4 * n * (1 if spec.nuisance_kind == "discrete" else spec.nuisance_dim)
    return size


def save_dataset(dataset: FactorDataset, path) -> str:
    """Write meta.json + data.bin into a directory; returns the checksum."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    payload = _payload_bytes(dataset)
    checksum = hashlib.sha256(payload).hexdigest()
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "kind": "factor_dataset",
        "n": len(dataset),
        "observation_dim": dataset.observation_dim,
        "spec": dataset.spec.to_dict(),
        "ablated": list(dataset.ablated),
        "split": dataset.split.to_dict(),
        "payload_bytes": len(payload),
        "payload_sha256": checksum,
    }
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    (root / "data.bin").write_bytes(payload)
    return checksum


def load_dataset(path) -> FactorDataset:
    """Load a dataset directory, verifying version, size and checksum."""
    root = Path(path)
    try:
        meta = json.loads((root / "meta.json").read_text())
    except json.JSONDecodeError as exc:
        raise ContainerFormatError(f"{root}: unreadable meta.json: {exc}") from exc
    if not isinstance(meta, dict):
        raise ContainerFormatError(f"{root}: meta.json is not an object")
    for key in ("format_version", "n", "spec", "split", "payload_sha256"):
        if key not in meta:
            raise ContainerFormatError(f"{root}: meta.json missing {key!r}")
    if meta["format_version"] != DATASET_FORMAT_VERSION:
        raise ContainerVersionError(
            f"{root}: unsupported dataset format_version {meta['format_version']!r}"
        )
    spec = GeneratorSpec.from_dict(meta["spec"])
    n = int(meta["n"])
    payload = (root / "data.bin").read_bytes()
    expected = _expected_payload_size(spec, n)
    if len(payload) < expected:
        raise ContainerTruncationError(
            f"{root}: payload truncated; header n={n} expects {expected} bytes, "
            f"found {len(payload)}"
        )
    if len(payload) > expected:
        raise ContainerFormatError(
            f"{root}: {len(payload) - expected} unexpected trailing bytes"
        )
    if hashlib.sha256(payload).hexdigest() != meta["payload_sha256"]:
        raise ContainerChecksumError(f"{root}: payload checksum mismatch")

    d = spec.observation_dim
    offset = 0

    def take(count, dtype):
        nonlocal offset
        width = count * 4
        arr = np.frombuffer(payload[offset : offset + width], dtype=dtype)
        offset += width
        return arr

    features = take(n * d, "<f4").reshape(n, d).copy()
    task = take(n, "<i4").copy()
    sensitive = np.empty((n, spec.n_sensitive), dtype=np.int32)
    for j in range(spec.n_sensitive):
        sensitive[:, j] = take(n, "<i4")
    nuisance = None
    if spec.has_nuisance:
        if spec.nuisance_kind == "discrete":
            nuisance = take(n, "<i4").copy()
        else:
            nuisance = take(n * spec.nuisance_dim, "<f4").reshape(n, spec.nuisance_dim).copy()

    split_d = meta["split"]
    split = SplitIndices(
        train=np.asarray(split_d["train"], dtype=np.int64),
        validation=np.asarray(split_d["validation"], dtype=np.int64),
        test=np.asarray(split_d["test"], dtype=np.int64),
    )
    return FactorDataset(
        spec=spec,
        features=features,
        task_labels=task,
        sensitive_labels=sensitive,
        nuisance=nuisance,
        split=split,
        ablated=tuple(meta.get("ablated", [])),
    )
