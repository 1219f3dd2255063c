"""Trainable information estimators on intermediate features.

Two estimator families, matching how the surrogate loss consumes them:

- a decoder whose held-out reconstruction error stands in for how much of
  the observation survives in the features (the negated error is a monotone
  score, never calibrated mutual information);
- label classifiers giving the variational lower bound
  label_entropy - held_out_cross_entropy (nats) on the information the
  features carry about the task label or a sensitive attribute.

Fits are deterministic under a fixed config seed. The 80/20 held-out split
keeps the bound honest: a classifier can never report more than the label
entropy, and on independent inputs the estimate hovers near zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .containers import blob_to_params, params_to_blob, read_container, write_container
from .errors import ContainerFormatError, NotFittedError
from .nn import MLP, make_optimizer, mean_squared_error, softmax_cross_entropy, train_network


@dataclass(frozen=True)
class EstimatorConfig:
    hidden: tuple[int, ...] | None = None
    steps: int = 600
    learning_rate: float = 0.01
    seed: int = 0
    holdout_fraction: float = 0.2
    optimizer: str = "adam"
    batch_size: int | None = None
    eval_every: int = 25


def default_hidden(feature_dim: int) -> tuple[int, int]:
    """Two hidden layers of width max(32, 4 * feature dim)."""
    w = max(32, 4 * int(feature_dim))
    return (w, w)


def label_entropy(labels, n_classes: int) -> float:
    """Plug-in entropy of an integer label column, in nats."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _check_pairs(features, targets) -> tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2 or features.shape[1] < 1:
        raise ValueError("features must be a 2-D array with at least 2 rows")
    targets = np.asarray(targets)
    if targets.shape[0] != features.shape[0]:
        raise ValueError(
            f"feature/target length mismatch: {features.shape[0]} vs {targets.shape[0]}"
        )
    return features, targets


def _holdout_split(n: int, config: EstimatorConfig, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_hold = min(n - 1, max(1, round(config.holdout_fraction * n)))
    return perm[n_hold:], perm[:n_hold]


def _fit_with_selection(net, fit_x, fit_t, hold_x, hold_t, loss, config, rng):
    """Train in chunks, keeping the parameters with the best held-out loss.

    Without this, a flexible network fitting pure noise drives the held-out
    loss above its floor and the reported value stops meaning anything. The
    untrained network is a candidate too (zero-init heads start at the
    uninformed loss), so reported losses never exceed that baseline.
    """
    def evaluate() -> float:
        out = net.forward(hold_x)
        if loss == "cross_entropy":
            return softmax_cross_entropy(out, hold_t)[0]
        return mean_squared_error(out, hold_t)[0]

    optimizer = make_optimizer(config.optimizer, config.learning_rate)
    best = evaluate()
    best_flat = net.get_flat()
    done = 0
    while done < config.steps:
        chunk = min(max(1, config.eval_every), config.steps - done)
        train_network(
            net, fit_x, fit_t,
            loss=loss,
            steps=chunk,
            optimizer=optimizer,
            batch_size=config.batch_size,
            rng=rng,
        )
        done += chunk
        current = evaluate()
        if current < best:
            best = current
            best_flat = net.get_flat()
    net.set_flat(best_flat)
    return float(best)


@dataclass
class ReconstructionEstimator:
    """Decoder from features back to observations, scored by held-out MSE."""

    decoder: MLP
    fitted_error: float | None = None
    loss_kind: str = "squared_error"

    def reconstruct(self, features: np.ndarray) -> np.ndarray:
        return self.decoder.forward(features)


def fit_reconstruction(features, targets, config: EstimatorConfig = EstimatorConfig()) -> ReconstructionEstimator:
    """Fit the decoder and record its held-out mean squared error."""
    features, targets = _check_pairs(features, targets)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ValueError("reconstruction targets must be 2-D")
    rng = np.random.default_rng(config.seed)
    fit_idx, hold_idx = _holdout_split(features.shape[0], config, rng)
    hidden = config.hidden if config.hidden is not None else default_hidden(features.shape[1])
    decoder = MLP(
        (features.shape[1], *hidden, targets.shape[1]),
        activation="tanh",
        rng=rng,
        zero_output_layer=True,
    )
    err = _fit_with_selection(
        decoder,
        features[fit_idx],
        targets[fit_idx],
        features[hold_idx],
        targets[hold_idx],
        "squared_error",
        config,
        rng,
    )
    return ReconstructionEstimator(decoder=decoder, fitted_error=err)


def reconstruction_score(estimator: ReconstructionEstimator) -> float:
    """Negated held-out reconstruction error.

    Higher means more of the observation survives in the features. This is
    a monotone proxy used inside the surrogate, not mutual information.
    """
    if estimator.fitted_error is None:
        raise NotFittedError("reconstruction estimator has not been fitted")
    return -float(estimator.fitted_error)


@dataclass
class ClassifierEstimator:
    """Variational bound estimate = label_entropy - held-out cross-entropy."""

    classifier: MLP | None
    n_classes: int
    label_entropy: float
    fitted_cross_entropy: float
    estimate: float
    degenerate: bool = False

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        if self.classifier is None:
            raise NotFittedError("degenerate classifier estimator has no network")
        logits = self.classifier.forward(features)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1)


def fit_classifier(
    features,
    labels,
    config: EstimatorConfig = EstimatorConfig(),
    n_classes: int | None = None,
) -> ClassifierEstimator:
    """Fit a label classifier and report the lower-bound information estimate."""
    features, labels = _check_pairs(features, labels)
    labels = labels.astype(np.int64)
    if labels.min() < 0:
        raise ValueError("labels must be nonnegative integers")
    k = int(n_classes) if n_classes is not None else int(labels.max()) + 1
    if labels.max() >= k:
        raise ValueError(f"labels exceed declared cardinality {k}")

    h_label = label_entropy(labels, k)
    if h_label == 0.0:
        warnings.warn(
            "single-class labels: information estimate forced to 0", stacklevel=2
        )
        return ClassifierEstimator(
            classifier=None,
            n_classes=k,
            label_entropy=0.0,
            fitted_cross_entropy=0.0,
            estimate=0.0,
            degenerate=True,
        )

    rng = np.random.default_rng(config.seed)
    fit_idx, hold_idx = _holdout_split(features.shape[0], config, rng)
    hidden = config.hidden if config.hidden is not None else default_hidden(features.shape[1])
    net = MLP(
        (features.shape[1], *hidden, k),
        activation="tanh",
        rng=rng,
        zero_output_layer=True,
    )
    ce = _fit_with_selection(
        net,
        features[fit_idx],
        labels[fit_idx],
        features[hold_idx],
        labels[hold_idx],
        "cross_entropy",
        config,
        rng,
    )
    return ClassifierEstimator(
        classifier=net,
        n_classes=k,
        label_entropy=h_label,
        fitted_cross_entropy=ce,
        estimate=h_label - ce,
    )


def save_estimator(estimator, path) -> None:
    if isinstance(estimator, ReconstructionEstimator):
        net = estimator.decoder
        header = {
            "widths": list(net.widths),
            "activation": net.activation,
            "fitted_error": estimator.fitted_error,
        }
        write_container(path, "reconstruction_estimator", header, params_to_blob(net.params))
        return
    if isinstance(estimator, ClassifierEstimator):
        header = {
            "n_classes": estimator.n_classes,
            "label_entropy": estimator.label_entropy,
            "fitted_cross_entropy": estimator.fitted_cross_entropy,
            "estimate": estimator.estimate,
            "degenerate": estimator.degenerate,
        }
        if estimator.classifier is not None:
            net = estimator.classifier
            header["widths"] = list(net.widths)
            header["activation"] = net.activation
            blob = params_to_blob(net.params)
        else:
            blob = b""
        write_container(path, "classifier_estimator", header, blob)
        return
    raise TypeError(f"cannot save {type(estimator).__name__}")


def _net_from_header(header: dict, blob: bytes) -> MLP:
    net = MLP(tuple(header["widths"]), activation=header["activation"], zero_output_layer=True)
    shapes = [p.shape for p in net.params]
    for p, loaded in zip(net.params, blob_to_params(blob, shapes)):
        p[...] = loaded
    return net


def load_estimator(path):
    header, blob = read_container(path)
    kind = header["kind"]
    if kind == "reconstruction_estimator":
        return ReconstructionEstimator(
            decoder=_net_from_header(header, blob),
            fitted_error=header["fitted_error"],
        )
    if kind == "classifier_estimator":
        net = _net_from_header(header, blob) if "widths" in header else None
        return ClassifierEstimator(
            classifier=net,
            n_classes=header["n_classes"],
            label_entropy=header["label_entropy"],
            fitted_cross_entropy=header["fitted_cross_entropy"],
            estimate=header["estimate"],
            degenerate=header["degenerate"],
        )
    raise ContainerFormatError(f"{path}: not an estimator container ({kind!r})")
