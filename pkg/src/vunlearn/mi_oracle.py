"""Exact entropy and mutual information on finite discrete systems.

Dense plug-in computations in nats over explicit joint tables, plus the
factored Markov systems (independent generative factors, an observation
channel, a representation channel) on which the detachment inequality

    I(repr, sensitive) + I(repr, nuisance) <= I(repr, obs) - I(repr, task)

is checked exactly. Tables are materialized in full with a hard cell cap:
this module is a verification oracle at desk scale, not an estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .containers import read_container, write_container
from .errors import InvariantError, OracleSizeError

MASS_TOL = 1e-12
ZERO_FLOOR = 1e-15
MAX_CELLS = 1_000_000

FACTOR_AXES = ("task", "nuisance", "sensitive", "attribute")
OBS_AXIS = "obs"
REPR_AXIS = "repr"
CHAIN_AXES = FACTOR_AXES + (OBS_AXIS, REPR_AXIS)


def nats_to_bits(value: float) -> float:
    return float(value) / float(np.log(2.0))


def _plugin_entropy(probs: np.ndarray) -> float:
    # 0 * log 0 = 0; entries below ZERO_FLOOR are treated as exact zeros.
    p = probs.ravel()
    p = p[p > ZERO_FLOOR]
    if p.size == 0:
        return 0.0
    h = float(-(p * np.log(p)).sum())
    return h if h > 0.0 else 0.0


@dataclass(frozen=True)
class DiscreteJoint:
    """A dense joint distribution over named finite variables."""

    axes: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", probs)
        if len(set(axes)) != len(axes):
            raise InvariantError("duplicate axis names")
        if probs.ndim != len(axes):
            raise InvariantError(
                f"{len(axes)} axes but the table has {probs.ndim} dimensions"
            )
        if probs.size == 0:
            raise InvariantError("empty probability table")
        if probs.size > MAX_CELLS:
            raise OracleSizeError(
                f"joint table has {probs.size} cells, cap is {MAX_CELLS}"
            )
        if float(probs.min()) < -MASS_TOL:
            raise InvariantError("negative probability entries")
        total = float(probs.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise InvariantError(f"probability mass {total!r} is not 1")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.probs.shape)

    def cardinality(self, name: str) -> int:
        return self.probs.shape[self.axes.index(self._check(name))]

    def _check(self, name: str) -> str:
        if name not in self.axes:
            raise ValueError(f"unknown variable {name!r}; axes are {self.axes}")
        return name

    def resolve(self, variables) -> tuple[str, ...]:
        """Normalize a name or an iterable of names, in table axis order."""
        if isinstance(variables, str):
            variables = (variables,)
        wanted = {self._check(v) for v in variables}
        return tuple(a for a in self.axes if a in wanted)

    def marginal(self, variables) -> "DiscreteJoint":
        keep = self.resolve(variables)
        drop = tuple(i for i, a in enumerate(self.axes) if a not in keep)
        return DiscreteJoint(keep, self.probs.sum(axis=drop))


def entropy(joint: DiscreteJoint, variables) -> float:
    """Plug-in entropy in nats of the marginal over `variables`."""
    names = joint.resolve(variables)
    if not names:
        return 0.0
    return _plugin_entropy(joint.marginal(names).probs)


def mutual_information(joint: DiscreteJoint, a, b) -> float:
    """I(a; b) = H(a) + H(b) - H(a, b), in nats."""
    a_names, b_names = joint.resolve(a), joint.resolve(b)
    if set(a_names) & set(b_names):
        raise ValueError(f"variable sets overlap: {a_names} and {b_names}")
    if not a_names or not b_names:
        raise ValueError("mutual information needs two non-empty variable sets")
    return (
        entropy(joint, a_names)
        + entropy(joint, b_names)
        - entropy(joint, a_names + b_names)
    )


def conditional_mutual_information(joint: DiscreteJoint, a, b, given) -> float:
    """I(a; b | given) via the four-entropy identity, in nats."""
    a_names, b_names = joint.resolve(a), joint.resolve(b)
    g_names = joint.resolve(given) if given else ()
    sets = [set(a_names), set(b_names), set(g_names)]
    if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
        raise ValueError("variable sets must be pairwise disjoint")
    if not a_names or not b_names:
        raise ValueError("conditional MI needs two non-empty variable sets")
    return (
        entropy(joint, a_names + g_names)
        + entropy(joint, b_names + g_names)
        - entropy(joint, a_names + b_names + g_names)
        - (entropy(joint, g_names) if g_names else 0.0)
    )


@dataclass(frozen=True)
class DiscreteChannel:
    """Row-stochastic transition table P(output | input)."""

    transition: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "transition", t)
        if t.ndim != 2 or t.size == 0:
            raise InvariantError("transition table must be a non-empty matrix")
        if float(t.min()) < -MASS_TOL:
            raise InvariantError("negative transition entries")
        rows = t.sum(axis=1)
        if float(np.abs(rows - 1.0).max()) > MASS_TOL:
            raise InvariantError("transition rows must each sum to 1")

    @property
    def input_cardinality(self) -> int:
        return self.transition.shape[0]

    @property
    def output_cardinality(self) -> int:
        return self.transition.shape[1]

    @staticmethod
    def identity(k: int) -> "DiscreteChannel":
        return DiscreteChannel(np.eye(k))

    @staticmethod
    def constant(k_in: int, k_out: int, symbol: int = 0) -> "DiscreteChannel":
        t = np.zeros((k_in, k_out))
        t[:, symbol] = 1.0
        return DiscreteChannel(t)

    @staticmethod
    def from_map(mapping, k_out: int) -> "DiscreteChannel":
        """Deterministic channel sending input i to mapping[i]."""
        mapping = np.asarray(mapping, dtype=np.int64)
        t = np.zeros((mapping.size, k_out))
        t[np.arange(mapping.size), mapping] = 1.0
        return DiscreteChannel(t)

    @staticmethod
    def random(rng: np.random.Generator, k_in: int, k_out: int) -> "DiscreteChannel":
        return DiscreteChannel(rng.dirichlet(np.ones(k_out), size=k_in))


@dataclass(frozen=True)
class FactorSystem:
    """Generative factors with observation and representation channels.

    `factor_joint` is over the axes ("task", "nuisance", "sensitive",
    "attribute"); task, nuisance and the (attribute, sensitive) pair must be
    mutually independent, with the sensitive variable a channel applied to
    the attribute. `obs_channel` maps the C-order-flattened (task, nuisance,
    sensitive) index to observations; `repr_channel` maps observations to
    representations, so the chain (task, nuisance, sensitive) -> obs -> repr
    is Markov by construction.
    """

    factor_joint: DiscreteJoint
    obs_channel: DiscreteChannel
    repr_channel: DiscreteChannel

    def __post_init__(self):
        if self.factor_joint.axes != FACTOR_AXES:
            raise InvariantError(
                f"factor joint axes must be {FACTOR_AXES}, got {self.factor_joint.axes}"
            )
        kt, kn, ks, _ = self.factor_joint.cardinalities
        if self.obs_channel.input_cardinality != kt * kn * ks:
            raise InvariantError(
                "obs channel input cardinality "
                f"{self.obs_channel.input_cardinality} != task*nuisance*sensitive "
                f"= {kt * kn * ks}"
            )
        if self.repr_channel.input_cardinality != self.obs_channel.output_cardinality:
            raise InvariantError(
                "repr channel input cardinality does not match obs channel output"
            )

    @property
    def cardinalities(self) -> dict:
        kt, kn, ks, ka = self.factor_joint.cardinalities
        return {
            "task": kt,
            "nuisance": kn,
            "sensitive": ks,
            "attribute": ka,
            "obs": self.obs_channel.output_cardinality,
            "repr": self.repr_channel.output_cardinality,
        }

    def validate(self, tol: float = 1e-9) -> None:
        """Check factor independence; raises InvariantError on violation."""
        p = self.factor_joint.probs
        p_tn = p.sum(axis=(2, 3))
        p_sa = p.sum(axis=(0, 1))
        recon = np.einsum("tn,sa->tnsa", p_tn, p_sa)
        if float(np.abs(p - recon).max()) > tol:
            raise InvariantError(
                "(task, nuisance) is not independent of (sensitive, attribute)"
            )
        p_t = p_tn.sum(axis=1)
        p_n = p_tn.sum(axis=0)
        if float(np.abs(p_tn - np.outer(p_t, p_n)).max()) > tol:
            raise InvariantError("task and nuisance are not independent")


def compose_markov_chain(system: FactorSystem) -> DiscreteJoint:
    """Full joint over (task, nuisance, sensitive, attribute, obs, repr).

    The representation depends on the rest only through the observation:
    P(repr | obs, anything) = P(repr | obs).
    """
    kt, kn, ks, ka = system.factor_joint.cardinalities
    kx = system.obs_channel.output_cardinality
    kh = system.repr_channel.output_cardinality
    cells = kt * kn * ks * ka * kx * kh
    if cells > MAX_CELLS:
        raise OracleSizeError(f"composed chain would need {cells} cells, cap is {MAX_CELLS}")
    obs_t = system.obs_channel.transition.reshape(kt, kn, ks, kx)
    full = np.einsum(
        "tnsa,tnsx,xh->tnsaxh",
        system.factor_joint.probs,
        obs_t,
        system.repr_channel.transition,
    )
    return DiscreteJoint(CHAIN_AXES, full)


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    slack: float
    holds: bool


def verify_detachment_inequality(system: FactorSystem, tol: float = 1e-10) -> InequalityCheck:
    """Exactly evaluate both sides of the detachment inequality.

    lhs = I(repr, sensitive) + I(repr, nuisance), rhs = I(repr, obs) -
    I(repr, task). For a valid system the Markov structure and factor
    independence force lhs <= rhs; `slack` = rhs - lhs is reported unclamped.
    """
    system.validate()
    joint = compose_markov_chain(system)
    lhs = mutual_information(joint, REPR_AXIS, "sensitive") + mutual_information(
        joint, REPR_AXIS, "nuisance"
    )
    rhs = mutual_information(joint, REPR_AXIS, OBS_AXIS) - mutual_information(
        joint, REPR_AXIS, "task"
    )
    slack = rhs - lhs
    return InequalityCheck(lhs=lhs, rhs=rhs, slack=slack, holds=bool(slack >= -tol))


def make_factor_system(
    p_task,
    p_nuisance,
    p_attribute,
    attribute_to_sensitive: DiscreteChannel,
    obs_channel: DiscreteChannel,
    repr_channel: DiscreteChannel,
) -> FactorSystem:
    """Assemble a FactorSystem from marginals and channels."""
    p_t = np.asarray(p_task, dtype=np.float64)
    p_n = np.asarray(p_nuisance, dtype=np.float64)
    p_a = np.asarray(p_attribute, dtype=np.float64)
    joint = np.einsum("t,n,a,as->tnsa", p_t, p_n, p_a, attribute_to_sensitive.transition)
    return FactorSystem(
        factor_joint=DiscreteJoint(FACTOR_AXES, joint),
        obs_channel=obs_channel,
        repr_channel=repr_channel,
    )


def random_factor_system(rng: np.random.Generator, max_cardinality: int = 4) -> FactorSystem:
    """Sample a random valid system; useful as a property-test fixture."""

    def card() -> int:
        return int(rng.integers(2, max_cardinality + 1))

    kt, kn, ka, ks = card(), card(), card(), card()
    kx, kh = card(), card()
    return make_factor_system(
        p_task=rng.dirichlet(np.ones(kt)),
        p_nuisance=rng.dirichlet(np.ones(kn)),
        p_attribute=rng.dirichlet(np.ones(ka)),
        attribute_to_sensitive=DiscreteChannel.random(rng, ka, ks),
        obs_channel=DiscreteChannel.random(rng, kt * kn * ks, kx),
        repr_channel=DiscreteChannel.random(rng, kx, kh),
    )


def empirical_joint(columns, cardinalities, axes=None) -> DiscreteJoint:
    """Plug-in joint from aligned integer label columns (one per variable)."""
    cols = [np.asarray(c, dtype=np.int64) for c in columns]
    cards = tuple(int(k) for k in cardinalities)
    if len(cols) != len(cards) or not cols:
        raise ValueError("need one cardinality per label column")
    n = cols[0].size
    if n == 0 or any(c.size != n for c in cols):
        raise ValueError("label columns must be non-empty and equally long")
    for c, k in zip(cols, cards):
        if c.min() < 0 or c.max() >= k:
            raise ValueError(f"labels out of range for cardinality {k}")
    if axes is None:
        axes = tuple(f"var{i}" for i in range(len(cols)))
    counts = np.zeros(cards, dtype=np.float64)
    np.add.at(counts, tuple(cols), 1.0)
    return DiscreteJoint(tuple(axes), counts / n)


def save_factor_system(system: FactorSystem, path) -> None:
    header = {"cardinalities": system.cardinalities}
    blob_parts = [
        system.factor_joint.probs,
        system.obs_channel.transition,
        system.repr_channel.transition,
    ]
    from .containers import params_to_blob

    write_container(path, "factor_system", header, params_to_blob(blob_parts))


def load_factor_system(path) -> FactorSystem:
    """Load a fixture; float32 storage is renormalized back to valid tables."""
    header, blob = read_container(path, kind="factor_system")
    cards = header["cardinalities"]
    kt, kn, ks, ka = (cards[k] for k in ("task", "nuisance", "sensitive", "attribute"))
    kx, kh = cards["obs"], cards["repr"]
    from .containers import blob_to_params

    factor, obs_t, repr_t = blob_to_params(
        blob, [(kt, kn, ks, ka), (kt * kn * ks, kx), (kx, kh)]
    )
    factor = np.clip(factor, 0.0, None)
    factor /= factor.sum()
    # float32 noise breaks factor independence at validate() tolerance;
    # rebuild from marginals so the product structure is exact again
    p_t = factor.sum(axis=(1, 2, 3))
    p_n = factor.sum(axis=(0, 2, 3))
    p_sa = factor.sum(axis=(0, 1))
    factor = np.einsum("t,n,sa->tnsa", p_t, p_n, p_sa)
    obs_t = np.clip(obs_t, 0.0, None)
    obs_t /= obs_t.sum(axis=1, keepdims=True)
    repr_t = np.clip(repr_t, 0.0, None)
    repr_t /= repr_t.sum(axis=1, keepdims=True)
    return FactorSystem(
        factor_joint=DiscreteJoint(FACTOR_AXES, factor),
        obs_channel=DiscreteChannel(obs_t),
        repr_channel=DiscreteChannel(repr_t),
    )
