"""Post-hoc measurement: attack accuracy, task utility, cost accounting.

Efficacy is measured by an attacker trained from scratch to recover a
sensitive attribute from the frozen representation; utility is plain top-1
task accuracy on the held-out test split. Parameter and MAC counters and a
small timing helper support efficiency reporting. Timings are recorded,
never asserted: they describe the machine, not the method.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContainerVersionError
from .mi_estimators import default_hidden
from .nn import MLP, make_optimizer, train_network
from .synthgen import FactorDataset, mixing_matrix
from .trainer import AuxiliaryHead, SplitModel

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AttackerConfig:
    hidden: tuple[int, ...] | None = None
    steps: int = 800
    learning_rate: float = 0.01
    seed: int = 0
    train_fraction: float = 1.0
    batch_size: int | None = None
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigurationError(
                f"train_fraction must be in (0, 1], got {self.train_fraction}"
            )
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")


@dataclass
class AttackerModel:
    front: object
    classifier: MLP
    attribute_index: int
    n_classes: int
    accuracy: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        h = _apply_front(self.front, x)
        return np.argmax(self.classifier.forward(h), axis=1)


def _apply_front(front, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if isinstance(front, SplitModel):
        return front.forward_front(x)
    if isinstance(front, MLP):
        return front.forward(x)
    if callable(front):
        return np.asarray(front(x), dtype=np.float64)
    raise ConfigurationError(f"cannot extract representations from {type(front).__name__}")


def train_attacker(
    front,
    dataset: FactorDataset,
    attribute_index: int,
    config: AttackerConfig | None = None,
) -> AttackerModel:
    """Fit a fresh classifier from representations to one sensitive column.

    Trains on (a prefix of) the train split, reports accuracy on the test
    split. The front is frozen: only representations flow in.
    """
    config = config if config is not None else AttackerConfig()
    if not 0 <= attribute_index < dataset.n_sensitive:
        raise ValueError(
            f"attribute_index {attribute_index} out of range for "
            f"{dataset.n_sensitive} sensitive attributes"
        )
    tr = dataset.split.train
    budget = max(1, int(round(config.train_fraction * tr.size)))
    tr = tr[:budget]
    labels = dataset.sensitive_labels[tr, attribute_index].astype(np.int64)
    n_classes = int(dataset.spec.sensitive_classes[attribute_index])
    if np.unique(labels).size < 2:
        raise ValueError(
            "attacker training labels are degenerate (single class); "
            "accuracy would not measure leakage"
        )
    h_train = _apply_front(front, dataset.features[tr])
    hidden = config.hidden if config.hidden is not None else default_hidden(h_train.shape[1])
    rng = np.random.default_rng(config.seed)
    clf = MLP((h_train.shape[1], *hidden, n_classes), rng=rng, zero_output_layer=True)
    train_network(
        clf,
        h_train,
        labels,
        loss="cross_entropy",
        steps=config.steps,
        optimizer=make_optimizer(config.optimizer, config.learning_rate),
        batch_size=config.batch_size,
        rng=np.random.default_rng(config.seed + 1),
    )
    attacker = AttackerModel(
        front=front,
        classifier=clf,
        attribute_index=attribute_index,
        n_classes=n_classes,
        accuracy=0.0,
    )
    attacker.accuracy = measure_efficacy(attacker, dataset)
    return attacker


def measure_efficacy(attacker: AttackerModel, dataset: FactorDataset) -> float:
    """Attacker accuracy on the test split; higher means more leakage."""
    te = dataset.split.test
    if te.size == 0:
        raise ValueError("dataset has an empty test split")
    truth = dataset.sensitive_labels[te, attacker.attribute_index]
    pred = attacker.predict(dataset.features[te])
    return float(np.mean(pred == truth))


def measure_utility(model: SplitModel, dataset: FactorDataset) -> float:
    """Top-1 task accuracy on the test split."""
    te = dataset.split.test
    if te.size == 0:
        raise ValueError("dataset has an empty test split")
    pred = model.predict(dataset.features[te].astype(np.float64))
    return float(np.mean(pred == dataset.task_labels[te]))


def chance_level(dataset: FactorDataset, attribute_index: int) -> float:
    return 1.0 / float(dataset.spec.sensitive_classes[attribute_index])


def count_params(obj) -> int:
    """Trainable scalar count for any of the model objects used here."""
    if isinstance(obj, (SplitModel, AuxiliaryHead, MLP)):
        return obj.param_count
    raise ConfigurationError(f"cannot count parameters of {type(obj).__name__}")


def count_macs(obj, input_dim: int | None = None) -> int:
    """Multiply-accumulate operations for one forward pass of one sample.

    Dense layers only: a layer from a to b units costs a*b. Biases and
    activations are not counted.
    """
    if isinstance(obj, (SplitModel, AuxiliaryHead, MLP)):
        if input_dim is not None:
            actual = obj.front.input_dim if isinstance(obj, SplitModel) else (
                obj.decoder.input_dim if isinstance(obj, AuxiliaryHead) else obj.input_dim
            )
            if actual != input_dim:
                raise ConfigurationError(
                    f"input_dim {input_dim} does not match model input {actual}"
                )
        return obj.macs
    raise ConfigurationError(f"cannot count MACs of {type(obj).__name__}")


def time_inference(model, x: np.ndarray, repeats: int = 3) -> float:
    """Median wall-clock seconds for a full forward pass over x."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    forward = model.forward if hasattr(model, "forward") else model
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        forward(x)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def median_epoch_seconds(trace) -> float | None:
    if trace is None or not trace.records:
        return None
    return float(np.median([r.seconds for r in trace.records]))


def efficiency_report(traces: dict, models: dict) -> dict:
    """Per-model cost summary plus parameter overhead of the auxiliary branch.

    traces maps name -> TrainTrace or None; models maps name -> model object
    (auxiliary heads may be listed under "<name>_auxiliary").
    """
    out = {}
    for name, model in models.items():
        out[name] = {
            "train_seconds_per_epoch": median_epoch_seconds(traces.get(name)),
            "params": count_params(model),
            "macs": count_macs(model),
        }
    if "baseline" in models and "unlearned" in models:
        delta = out["unlearned"]["params"] - out["baseline"]["params"]
        aux = models.get("unlearned_auxiliary")
        if aux is not None:
            delta += count_params(aux)
        out["params_delta"] = delta
    return out


def reconstruction_probe(front, dataset: FactorDataset, config=None) -> dict:
    """Per-factor-block squared error of a decoder trained on representations.

    Decodes in the unmixed coordinate system (the generator's block layout)
    so each block's error isolates one factor. Lower error on a block means
    the representation still carries that factor.
    """
    from .mi_estimators import EstimatorConfig, fit_reconstruction

    config = config if config is not None else EstimatorConfig()
    q = mixing_matrix(dataset.spec)
    feats = dataset.features.astype(np.float64)
    unmixed = feats if q is None else feats @ q
    tr = dataset.split.train
    te = dataset.split.test
    if te.size == 0:
        raise ValueError("dataset has an empty test split")
    h_train = _apply_front(front, dataset.features[tr])
    est = fit_reconstruction(h_train, unmixed[tr], config)
    h_test = _apply_front(front, dataset.features[te])
    resid = est.reconstruct(h_test) - unmixed[te]
    out = {}
    for name, sl in dataset.spec.block_slices().items():
        block = resid[:, sl]
        out[name] = float(np.mean(block * block)) if block.size else 0.0
    return out


@dataclass
class EvaluationReport:
    """Flat, JSON-serializable summary of one unlearning-vs-baseline run."""

    efficacy: float
    baseline_efficacy: float
    utility: float
    baseline_utility: float
    chance_level: float
    params_main: int
    params_with_auxiliary: int
    macs_per_sample: int
    train_seconds_per_epoch: float | None
    inference_seconds_per_epoch: float
    machine: str = field(default_factory=platform.platform)
    config: dict = field(default_factory=dict)
    seed: int = 0
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EvaluationReport":
        d = json.loads(Path(path).read_text())
        version = d.get("format_version")
        if version != REPORT_FORMAT_VERSION:
            raise ContainerVersionError(
                f"report format version {version!r} is not {REPORT_FORMAT_VERSION}"
            )
        return cls(**d)
