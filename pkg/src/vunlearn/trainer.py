"""Two-branch split-network training with detachment.

A front network maps observations to an intermediate representation at a
configurable split point and a task branch continues to logits. During
unlearning an auxiliary branch (decoder + task head + one head per
sensitive attribute) tracks the representation; per batch the main update
descends

    task CE + lambda1 * reconstruction MSE + lambda2 * task-head CE
            + sum_i alpha*gamma_i * uniform-target CE(attribute head_i)

so the front keeps observation/task information while the reversed
attribute branch removes sensitive information: each attribute head keeps
minimizing its label cross-entropy while the front drives that head's
output toward uniform (an adversarial min-max). Per-epoch surrogate
breakdowns and the information gap bound are logged from held-out
estimates.

Sequential mode is the bit-deterministic reference. Parallel mode computes
the main-branch gradients and the auxiliary refresh concurrently from the
same batch state; both read shared parameters without mutating them, so the
two modes produce identical updates and differ only in wall-clock.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import blob_to_params, params_to_blob, read_container, write_container
from .detachment_loss import (
    CoefficientSet,
    LossBreakdown,
    derive_coefficients,
    surrogate_gap_bound,
    surrogate_loss,
)
from .errors import ConfigurationError, TrainingDivergedError
from .mi_estimators import default_hidden, label_entropy
from .nn import MLP, mean_squared_error, softmax_cross_entropy, softmax_uniform_cross_entropy
from .synthgen import FactorDataset


@dataclass(frozen=True)
class ModelSpec:
    """Widths and nonlinearity of the split network.

    The split index counts layer boundaries: the representation is the
    activated output of layer `split_index`, so 1 <= split_index < number
    of layers. None picks the middle boundary.
    """

    input_dim: int
    hidden: tuple[int, ...]
    n_classes: int
    activation: str = "tanh"
    split_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be >= 2, got {self.n_classes}")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ConfigurationError(
                "hidden must name at least one positive layer width"
            )
        if self.activation not in ("tanh", "relu"):
            raise ConfigurationError(f"unsupported activation {self.activation!r}")
        s = self.resolved_split
        if not 1 <= s < self.n_layers:
            raise ConfigurationError(
                f"split_index must satisfy 1 <= s < {self.n_layers}, got {s}"
            )

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.n_classes)

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def resolved_split(self) -> int:
        if self.split_index is not None:
            return int(self.split_index)
        return max(1, self.n_layers // 2)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "n_classes": self.n_classes,
            "activation": self.activation,
            "split_index": self.resolved_split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden=tuple(d["hidden"]),
            n_classes=int(d["n_classes"]),
            activation=d["activation"],
            split_index=d.get("split_index"),
        )


class SplitModel:
    """Front (observations -> representation) and back (representation -> logits)."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        rng = rng if rng is not None else np.random.default_rng(0)
        s = spec.resolved_split
        widths = spec.widths
        self.front = MLP(
            widths[: s + 1],
            activation=spec.activation,
            output_activation=spec.activation,
            rng=rng,
        )
        self.back = MLP(widths[s:], activation=spec.activation, rng=rng)

    @property
    def h_dim(self) -> int:
        return self.front.output_dim

    @property
    def param_count(self) -> int:
        return self.front.param_count + self.back.param_count

    @property
    def macs(self) -> int:
        return self.front.macs + self.back.macs

    def forward_front(self, x: np.ndarray) -> np.ndarray:
        return self.front.forward(x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.back.forward(self.front.forward(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def save(self, path) -> None:
        blob = params_to_blob(self.front.params + self.back.params)
        write_container(path, "split_model", {"model_spec": self.spec.to_dict()}, blob)

    @classmethod
    def load(cls, path) -> "SplitModel":
        header, blob = read_container(path, kind="split_model")
        model = cls(ModelSpec.from_dict(header["model_spec"]))
        params = model.front.params + model.back.params
        for p, loaded in zip(params, blob_to_params(blob, [p.shape for p in params])):
            p[...] = loaded
        return model


@dataclass
class AuxiliaryHead:
    """Decoder plus task head plus one classifier per sensitive attribute."""

    decoder: MLP
    task_head: MLP
    sensitive_heads: tuple[MLP, ...]

    @classmethod
    def build(
        cls,
        h_dim: int,
        obs_dim: int,
        task_classes: int,
        sensitive_cards,
        hidden: tuple[int, ...] | None = None,
        rng: np.random.Generator | None = None,
    ) -> "AuxiliaryHead":
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = hidden if hidden is not None else default_hidden(h_dim)
        decoder = MLP((h_dim, *hidden, obs_dim), rng=rng, zero_output_layer=True)
        task_head = MLP((h_dim, *hidden, task_classes), rng=rng, zero_output_layer=True)
        heads = tuple(
            MLP((h_dim, *hidden, int(k)), rng=rng, zero_output_layer=True)
            for k in sensitive_cards
        )
        return cls(decoder=decoder, task_head=task_head, sensitive_heads=heads)

    def nets(self) -> list[MLP]:
        return [self.decoder, self.task_head, *self.sensitive_heads]

    @property
    def param_count(self) -> int:
        return sum(net.param_count for net in self.nets())

    @property
    def macs(self) -> int:
        return sum(net.macs for net in self.nets())

    def save(self, path) -> None:
        header = {
            "decoder_widths": list(self.decoder.widths),
            "task_widths": list(self.task_head.widths),
            "sensitive_widths": [list(net.widths) for net in self.sensitive_heads],
        }
        blob = params_to_blob([p for net in self.nets() for p in net.params])
        write_container(path, "auxiliary_head", header, blob)

    @classmethod
    def load(cls, path) -> "AuxiliaryHead":
        header, blob = read_container(path, kind="auxiliary_head")
        decoder = MLP(tuple(header["decoder_widths"]))
        task_head = MLP(tuple(header["task_widths"]))
        heads = tuple(MLP(tuple(w)) for w in header["sensitive_widths"])
        obj = cls(decoder=decoder, task_head=task_head, sensitive_heads=heads)
        params = [p for net in obj.nets() for p in net.params]
        for p, loaded in zip(params, blob_to_params(blob, [p.shape for p in params])):
            p[...] = loaded
        return obj


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    alpha: float = 1.0
    beta: float = 1.0
    gamma: object = 0.0
    batch_size: int = 64
    lr_main: float = 0.1
    lr_front: float | None = None
    lr_aux: float = 0.25
    seed: int = 0
    mode: str = "sequential"
    refresh_period: int = 1
    aux_inner_steps: int = 3
    aux_hidden: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.refresh_period < 1:
            raise ConfigurationError(
                f"refresh_period must be >= 1, got {self.refresh_period}"
            )
        if self.aux_inner_steps < 1:
            raise ConfigurationError(
                f"aux_inner_steps must be >= 1, got {self.aux_inner_steps}"
            )
        if self.mode not in ("sequential", "parallel"):
            raise ConfigurationError(
                f"mode must be 'sequential' or 'parallel', got {self.mode!r}"
            )

    @property
    def front_learning_rate(self) -> float:
        return self.lr_main if self.lr_front is None else self.lr_front


@dataclass
class EpochRecord:
    epoch: int
    task_loss: float
    seconds: float
    surrogate: LossBreakdown | None = None
    gap_bound: float | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "task_loss": self.task_loss,
            "seconds": self.seconds,
            "surrogate": None if self.surrogate is None else self.surrogate.to_dict(),
            "gap_bound": self.gap_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochRecord":
        surrogate = d.get("surrogate")
        return cls(
            epoch=int(d["epoch"]),
            task_loss=float(d["task_loss"]),
            seconds=float(d["seconds"]),
            surrogate=None if surrogate is None else LossBreakdown.from_dict(surrogate),
            gap_bound=d.get("gap_bound"),
        )


@dataclass
class TrainTrace:
    """Per-epoch records; serialized as JSON lines, one record per epoch."""

    records: list[EpochRecord] = field(default_factory=list)

    def to_jsonl(self, path) -> None:
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def from_jsonl(cls, path) -> "TrainTrace":
        records = []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                records.append(EpochRecord.from_dict(json.loads(line)))
        return cls(records=records)

    def core_dicts(self) -> list[dict]:
        """Record dicts with the timing field removed, for determinism checks."""
        out = []
        for r in self.records:
            d = r.to_dict()
            d.pop("seconds")
            out.append(d)
        return out


def _check_consistent(dataset: FactorDataset, model_spec: ModelSpec) -> None:
    if model_spec.input_dim != dataset.observation_dim:
        raise ConfigurationError(
            f"model input_dim {model_spec.input_dim} != dataset observation dim "
            f"{dataset.observation_dim}"
        )
    if model_spec.n_classes != dataset.spec.task_classes:
        raise ConfigurationError(
            f"model n_classes {model_spec.n_classes} != dataset task_classes "
            f"{dataset.spec.task_classes}"
        )


def _broadcast_gamma(gamma, k: int) -> tuple[float, ...]:
    if np.isscalar(gamma):
        return (float(gamma),) * k
    gammas = tuple(float(g) for g in gamma)
    if len(gammas) != k:
        raise ConfigurationError(
            f"gamma has {len(gammas)} entries but the dataset has {k} sensitive attributes"
        )
    return gammas


def _sgd(params, grads, lr: float) -> None:
    for p, g in zip(params, grads):
        p -= lr * g


def _main_branch_grads(model: SplitModel, aux: AuxiliaryHead, h_cache, xb, yb, zb, coeffs: CoefficientSet):
    """Gradients of the composite objective for the front and back networks.

    Auxiliary parameters are read, never written: safe to run concurrently
    with the auxiliary refresh for the same batch.
    """
    h = h_cache[-1]
    back_cache = model.back.forward_cache(h)
    task_loss, dlogits = softmax_cross_entropy(back_cache[-1], yb)
    back_grads, dh = model.back.backward(back_cache, dlogits)

    if coeffs.lambda1 != 0.0:
        dec_cache = aux.decoder.forward_cache(h)
        _, dxhat = mean_squared_error(dec_cache[-1], xb)
        _, dh_dec = aux.decoder.backward(dec_cache, dxhat)
        dh = dh + coeffs.lambda1 * dh_dec
    if coeffs.lambda2 != 0.0:
        ty_cache = aux.task_head.forward_cache(h)
        _, dlog_y = softmax_cross_entropy(ty_cache[-1], yb)
        _, dh_ty = aux.task_head.backward(ty_cache, dlog_y)
        dh = dh + coeffs.lambda2 * dh_ty
    for i, head in enumerate(aux.sensitive_heads):
        weight = coeffs.alpha * coeffs.gammas[i]
        if weight == 0.0:
            continue
        # Reversed branch: the head minimizes label CE, the front minimizes
        # uniform-target CE. Ascending the label CE instead stalls as soon
        # as the head saturates, since its logit gradient scales with 1 - p.
        z_cache = head.forward_cache(h)
        _, dlog_z = softmax_uniform_cross_entropy(z_cache[-1])
        _, dh_z = head.backward(z_cache, dlog_z)
        dh = dh + weight * dh_z

    front_grads, _ = model.front.backward(h_cache, dh)
    return front_grads, back_grads, task_loss


def _aux_branch_updates(aux: AuxiliaryHead, h, xb, yb, zb, lr: float, inner_steps: int):
    """Inner SGD steps for every auxiliary net, computed on copies.

    Returns the refreshed parameter arrays per net without touching the live
    ones, so installation can happen after the main gradients are taken.
    """
    targets = [(xb, "squared_error"), (yb, "cross_entropy")] + [
        (zb[:, i], "cross_entropy") for i in range(len(aux.sensitive_heads))
    ]
    new_params = []
    for net, (target, loss_kind) in zip(aux.nets(), targets):
        work = net.copy()
        for _ in range(inner_steps):
            cache = work.forward_cache(h)
            if loss_kind == "cross_entropy":
                _, dout = softmax_cross_entropy(cache[-1], target)
            else:
                _, dout = mean_squared_error(cache[-1], target)
            grads, _ = work.backward(cache, dout)
            _sgd(work.params, grads, lr)
        new_params.append(work.params)
    return new_params


def _install_aux(aux: AuxiliaryHead, new_params) -> None:
    for net, params in zip(aux.nets(), new_params):
        for p, q in zip(net.params, params):
            p[...] = q


def _epoch_diagnostics(model, aux, x_val, y_val, z_val, coeffs, task_classes, sensitive_cards):
    h = model.front.forward(x_val)
    mse, _ = mean_squared_error(aux.decoder.forward(h), x_val)
    info_x = -mse
    h_y = label_entropy(y_val, task_classes)
    ce_y, _ = softmax_cross_entropy(aux.task_head.forward(h), y_val)
    info_y = h_y - ce_y
    info_z = []
    for i, head in enumerate(aux.sensitive_heads):
        h_z = label_entropy(z_val[:, i], int(sensitive_cards[i]))
        ce_z, _ = softmax_cross_entropy(head.forward(h), z_val[:, i])
        info_z.append(h_z - ce_z)
    breakdown = surrogate_loss(coeffs, info_x, info_y, info_z)
    # With a noiseless injective generator the observation determines the
    # task label, so I(x, y) reduces to the plug-in label entropy.
    gap = surrogate_gap_bound(coeffs, h_y, info_y, info_z)
    return breakdown, gap


def train_baseline(dataset: FactorDataset, model_spec: ModelSpec, config: TrainConfig):
    """Task cross-entropy only; returns (model, trace)."""
    config.validate()
    _check_consistent(dataset, model_spec)
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    model = SplitModel(model_spec, np.random.default_rng(seeds[0]))
    shuffle_rng = np.random.default_rng(seeds[1])

    idx = dataset.split.train
    x = dataset.features[idx].astype(np.float64)
    y = dataset.task_labels[idx].astype(np.int64)
    n = idx.size
    trace = TrainTrace()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            sel = order[start : start + config.batch_size]
            h_cache = model.front.forward_cache(x[sel])
            back_cache = model.back.forward_cache(h_cache[-1])
            loss, dlogits = softmax_cross_entropy(back_cache[-1], y[sel])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite task loss in epoch {epoch}", trace=trace
                )
            back_grads, dh = model.back.backward(back_cache, dlogits)
            front_grads, _ = model.front.backward(h_cache, dh)
            _sgd(model.back.params, back_grads, config.lr_main)
            _sgd(model.front.params, front_grads, config.front_learning_rate)
            losses.append(loss)
        trace.records.append(
            EpochRecord(
                epoch=epoch,
                task_loss=float(np.mean(losses)),
                seconds=time.perf_counter() - t0,
            )
        )
    return model, trace


def train_unlearn(dataset: FactorDataset, model_spec: ModelSpec, config: TrainConfig):
    """Detachment training; returns (model, auxiliary_head, trace).

    Coefficients are validated before any work happens. Every batch: the
    front computes the representation, the main-branch gradients and the
    auxiliary refresh are computed from the same parameter state (in
    parallel mode concurrently), then both updates are applied.
    """
    config.validate()
    _check_consistent(dataset, model_spec)
    if dataset.n_sensitive < 1:
        raise ConfigurationError("unlearning requires at least one sensitive attribute")
    gammas = _broadcast_gamma(config.gamma, dataset.n_sensitive)
    coeffs = derive_coefficients(config.alpha, config.beta, gammas)

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    model = SplitModel(model_spec, np.random.default_rng(seeds[0]))
    shuffle_rng = np.random.default_rng(seeds[1])
    aux = AuxiliaryHead.build(
        h_dim=model.h_dim,
        obs_dim=dataset.observation_dim,
        task_classes=dataset.spec.task_classes,
        sensitive_cards=dataset.spec.sensitive_classes,
        hidden=config.aux_hidden,
        rng=np.random.default_rng(seeds[2]),
    )

    tr = dataset.split.train
    x = dataset.features[tr].astype(np.float64)
    y = dataset.task_labels[tr].astype(np.int64)
    z = dataset.sensitive_labels[tr].astype(np.int64)
    val = dataset.split.validation if dataset.split.validation.size else tr
    x_val = dataset.features[val].astype(np.float64)
    y_val = dataset.task_labels[val].astype(np.int64)
    z_val = dataset.sensitive_labels[val].astype(np.int64)

    n = tr.size
    trace = TrainTrace()
    executor = ThreadPoolExecutor(max_workers=2) if config.mode == "parallel" else None
    batch_index = 0
    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(n)
            losses = []
            for start in range(0, n, config.batch_size):
                sel = order[start : start + config.batch_size]
                xb, yb, zb = x[sel], y[sel], z[sel]
                h_cache = model.front.forward_cache(xb)
                refresh = batch_index % config.refresh_period == 0
                if executor is not None:
                    main_fut = executor.submit(
                        _main_branch_grads, model, aux, h_cache, xb, yb, zb, coeffs
                    )
                    aux_fut = (
                        executor.submit(
                            _aux_branch_updates,
                            aux, h_cache[-1], xb, yb, zb,
                            config.lr_aux, config.aux_inner_steps,
                        )
                        if refresh
                        else None
                    )
                    front_grads, back_grads, task_loss = main_fut.result()
                    new_aux = aux_fut.result() if aux_fut is not None else None
                else:
                    front_grads, back_grads, task_loss = _main_branch_grads(
                        model, aux, h_cache, xb, yb, zb, coeffs
                    )
                    new_aux = (
                        _aux_branch_updates(
                            aux, h_cache[-1], xb, yb, zb,
                            config.lr_aux, config.aux_inner_steps,
                        )
                        if refresh
                        else None
                    )
                if not np.isfinite(task_loss):
                    raise TrainingDivergedError(
                        f"non-finite task loss in epoch {epoch}", trace=trace
                    )
                _sgd(model.back.params, back_grads, config.lr_main)
                _sgd(model.front.params, front_grads, config.front_learning_rate)
                if new_aux is not None:
                    _install_aux(aux, new_aux)
                losses.append(task_loss)
                batch_index += 1
            breakdown, gap = _epoch_diagnostics(
                model, aux, x_val, y_val, z_val, coeffs,
                dataset.spec.task_classes, dataset.spec.sensitive_classes,
            )
            trace.records.append(
                EpochRecord(
                    epoch=epoch,
                    task_loss=float(np.mean(losses)),
                    seconds=time.perf_counter() - t0,
                    surrogate=breakdown,
                    gap_bound=gap,
                )
            )
    finally:
        if executor is not None:
            executor.shutdown()
    return model, aux, trace


def _composite_objective(model: SplitModel, aux: AuxiliaryHead, xb, yb, zb, coeffs: CoefficientSet) -> float:
    h = model.front.forward(xb)
    loss, _ = softmax_cross_entropy(model.back.forward(h), yb)
    mse, _ = mean_squared_error(aux.decoder.forward(h), xb)
    ce_y, _ = softmax_cross_entropy(aux.task_head.forward(h), yb)
    loss += coeffs.lambda1 * mse + coeffs.lambda2 * ce_y
    for i, head in enumerate(aux.sensitive_heads):
        ce_u, _ = softmax_uniform_cross_entropy(head.forward(h))
        loss += coeffs.alpha * coeffs.gammas[i] * ce_u
    return loss


def _all_nets(model: SplitModel, aux: AuxiliaryHead) -> list[MLP]:
    return [model.front, model.back, *aux.nets()]


def gradient_check(
    model: SplitModel,
    aux: AuxiliaryHead,
    batch,
    coeffs: CoefficientSet,
    n_params: int = 100,
    step: float = 1e-4,
    seed: int = 0,
) -> dict:
    """Analytic vs central-finite-difference gradients of the composite objective.

    The objective is exactly what the main branch descends (task CE plus the
    weighted reconstruction, task-head and uniform-target attribute terms);
    analytic gradients cover front, back and auxiliary parameters. Relative
    errors use a 1e-3 floor so finite-difference noise on near-zero
    coordinates does not read as failure. Returns {"max_rel_error", "checked"}.
    """
    xb, yb, zb = batch
    xb = np.asarray(xb, dtype=np.float64)
    yb = np.asarray(yb, dtype=np.int64)
    zb = np.asarray(zb, dtype=np.int64)
    if xb.size == 0:
        raise ValueError("gradient check needs a non-empty batch")
    if not np.all(np.isfinite(xb)):
        raise ValueError("gradient check needs finite inputs")

    # Analytic gradients: the main-branch pass gives front/back; the
    # auxiliary terms are differentiated with their objective weights.
    h_cache = model.front.forward_cache(xb)
    h = h_cache[-1]
    front_grads, back_grads, _ = _main_branch_grads(model, aux, h_cache, xb, yb, zb, coeffs)
    analytic = list(front_grads) + list(back_grads)

    dec_cache = aux.decoder.forward_cache(h)
    _, dxhat = mean_squared_error(dec_cache[-1], xb)
    dec_grads, _ = aux.decoder.backward(dec_cache, dxhat)
    analytic += [coeffs.lambda1 * g for g in dec_grads]

    ty_cache = aux.task_head.forward_cache(h)
    _, dlog_y = softmax_cross_entropy(ty_cache[-1], yb)
    ty_grads, _ = aux.task_head.backward(ty_cache, dlog_y)
    analytic += [coeffs.lambda2 * g for g in ty_grads]

    for i, head in enumerate(aux.sensitive_heads):
        z_cache = head.forward_cache(h)
        _, dlog_z = softmax_uniform_cross_entropy(z_cache[-1])
        z_grads, _ = head.backward(z_cache, dlog_z)
        analytic += [coeffs.alpha * coeffs.gammas[i] * g for g in z_grads]

    nets = _all_nets(model, aux)
    flat_analytic = np.concatenate([g.ravel() for g in analytic])
    flat_params = np.concatenate([net.get_flat() for net in nets])
    total = flat_params.size

    def set_all(vec):
        k = 0
        for net in nets:
            size = net.get_flat().size
            net.set_flat(vec[k : k + size])
            k += size

    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_params, total), replace=False)
    rel_errors = np.zeros(chosen.size)
    base = flat_params.copy()
    try:
        for j, idx in enumerate(chosen):
            probe = base.copy()
            probe[idx] = base[idx] + step
            set_all(probe)
            up = _composite_objective(model, aux, xb, yb, zb, coeffs)
            probe[idx] = base[idx] - step
            set_all(probe)
            down = _composite_objective(model, aux, xb, yb, zb, coeffs)
            fd = (up - down) / (2 * step)
            a = flat_analytic[idx]
            rel_errors[j] = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
    finally:
        set_all(base)
    return {"max_rel_error": float(rel_errors.max()), "checked": int(chosen.size)}
