"""Coefficient algebra and assembly of the detachment surrogate loss.

The detachment objective asks an intermediate representation to keep
observation and task information while shedding nuisance and sensitive
information. Its tractable surrogate is the weighted sum

    surrogate = -lambda1 * info_x - lambda2 * info_y - sum_i sigma_i * info_z[i]

with lambda1 = alpha*(1-beta), lambda2 = alpha*beta and
sigma_i = alpha*(beta - gamma_i), admissible only when alpha >= 0,
0 <= gamma_i <= beta <= 1. This module derives and validates the weights,
assembles the surrogate from estimates, evaluates the underlying objective
exactly on oracle systems, and computes the surrogate-vs-objective gap
bound alpha*beta*(I(x,y) - info_y - sum info_z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoefficientError
from .mi_oracle import (
    OBS_AXIS,
    REPR_AXIS,
    FactorSystem,
    compose_markov_chain,
    mutual_information,
)


@dataclass(frozen=True)
class CoefficientSet:
    """Validated weights; construct via derive_coefficients."""

    alpha: float
    beta: float
    gammas: tuple[float, ...]
    lambda1: float
    lambda2: float
    sigmas: tuple[float, ...]

    @property
    def n_attributes(self) -> int:
        return len(self.gammas)


def derive_coefficients(alpha: float, beta: float, gammas) -> CoefficientSet:
    """Validate (alpha, beta, gamma_i) and derive the surrogate weights.

    gammas may be a scalar (single attribute) or a sequence with one entry
    per sensitive attribute.
    """
    alpha = float(alpha)
    beta = float(beta)
    if np.isscalar(gammas):
        gammas = (float(gammas),)
    else:
        gammas = tuple(float(g) for g in gammas)
    if not gammas:
        raise CoefficientError("at least one gamma is required")
    if not alpha >= 0.0:
        raise CoefficientError(f"alpha must be >= 0, got {alpha}")
    if not beta >= 0.0:
        raise CoefficientError(f"beta must be >= 0, got {beta}")
    if beta > 1.0:
        raise CoefficientError(
            f"beta must be <= 1 so the observation weight alpha*(1-beta) stays "
            f"nonnegative, got {beta}"
        )
    for i, g in enumerate(gammas):
        if not g >= 0.0:
            raise CoefficientError(f"gamma[{i}] must be >= 0, got {g}")
        if g > beta:
            raise CoefficientError(
                f"admissibility requires beta >= gamma for every attribute; "
                f"got beta={beta}, gamma[{i}]={g}"
            )
    return CoefficientSet(
        alpha=alpha,
        beta=beta,
        gammas=gammas,
        lambda1=alpha * (1.0 - beta),
        lambda2=alpha * beta,
        sigmas=tuple(alpha * (beta - g) for g in gammas),
    )


@dataclass(frozen=True)
class LossBreakdown:
    """Surrogate value with its inputs and per-term weighted contributions."""

    info_x: float
    info_y: float
    info_z: tuple[float, ...]
    term_x: float
    term_y: float
    term_z: tuple[float, ...]
    surrogate_total: float

    def to_dict(self) -> dict:
        return {
            "info_x": self.info_x,
            "info_y": self.info_y,
            "info_z": list(self.info_z),
            "term_x": self.term_x,
            "term_y": self.term_y,
            "term_z": list(self.term_z),
            "surrogate_total": self.surrogate_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossBreakdown":
        return cls(
            info_x=d["info_x"],
            info_y=d["info_y"],
            info_z=tuple(d["info_z"]),
            term_x=d["term_x"],
            term_y=d["term_y"],
            term_z=tuple(d["term_z"]),
            surrogate_total=d["surrogate_total"],
        )


def surrogate_loss(coeffs: CoefficientSet, info_x: float, info_y: float, info_z) -> LossBreakdown:
    """Assemble the surrogate from information estimates.

    The value is linear in the estimates: the gradient with respect to
    (info_x, info_y, info_z[i]) is exactly (-lambda1, -lambda2, -sigma_i).
    """
    info_z = tuple(float(v) for v in np.atleast_1d(info_z))
    if len(info_z) != coeffs.n_attributes:
        raise ValueError(
            f"expected {coeffs.n_attributes} attribute estimates, got {len(info_z)}"
        )
    term_x = -coeffs.lambda1 * float(info_x)
    term_y = -coeffs.lambda2 * float(info_y)
    term_z = tuple(-s * v for s, v in zip(coeffs.sigmas, info_z))
    return LossBreakdown(
        info_x=float(info_x),
        info_y=float(info_y),
        info_z=info_z,
        term_x=term_x,
        term_y=term_y,
        term_z=term_z,
        surrogate_total=term_x + term_y + sum(term_z),
    )


def surrogate_gradients(coeffs: CoefficientSet) -> tuple[float, float, tuple[float, ...]]:
    """d(surrogate_total)/d(info_x, info_y, info_z[i]); constant by linearity."""
    return -coeffs.lambda1, -coeffs.lambda2, tuple(-s for s in coeffs.sigmas)


def exact_detachment_loss(system: FactorSystem, coeffs: CoefficientSet) -> float:
    """The underlying objective evaluated exactly on an oracle system:

    alpha * (-I(repr, obs) + beta * I(repr, nuisance) + gamma * I(repr, sensitive)).
    """
    if coeffs.n_attributes != 1:
        raise ValueError("oracle systems carry a single sensitive attribute")
    system.validate()
    joint = compose_markov_chain(system)
    i_obs = mutual_information(joint, REPR_AXIS, OBS_AXIS)
    i_nuis = mutual_information(joint, REPR_AXIS, "nuisance")
    i_sens = mutual_information(joint, REPR_AXIS, "sensitive")
    return coeffs.alpha * (-i_obs + coeffs.beta * i_nuis + coeffs.gammas[0] * i_sens)


def exact_surrogate_on_system(system: FactorSystem, coeffs: CoefficientSet) -> LossBreakdown:
    """Surrogate assembled from the system's exact information values."""
    if coeffs.n_attributes != 1:
        raise ValueError("oracle systems carry a single sensitive attribute")
    system.validate()
    joint = compose_markov_chain(system)
    return surrogate_loss(
        coeffs,
        info_x=mutual_information(joint, REPR_AXIS, OBS_AXIS),
        info_y=mutual_information(joint, REPR_AXIS, "task"),
        info_z=(mutual_information(joint, REPR_AXIS, "attribute"),),
    )


def surrogate_gap_bound(coeffs: CoefficientSet, info_xy: float, info_hy: float, info_hz) -> float:
    """Upper bound on (surrogate - objective): alpha*beta*(I(x,y) - info_y - sum info_z).

    Valid when the observation determines the task label; useful as a
    training diagnostic for how loose the surrogate may be.
    """
    total_hz = float(np.sum(np.atleast_1d(info_hz)))
    return coeffs.alpha * coeffs.beta * (float(info_xy) - float(info_hy) - total_hz)
