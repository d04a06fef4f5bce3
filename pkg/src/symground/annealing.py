"""Temperature-scaled grounding distributions and cooling schedules.

The grounding distribution over a feasible set is a Boltzmann distribution
whose energies are the negative model log-probabilities and whose temperature
controls how sharply it concentrates on the most likely states.  All
probability arithmetic happens in natural-log space with max-subtraction so
that temperatures as small as 1e-3 do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFault, UnsatisfiableError

SCHEDULE_KINDS = ("logarithmic", "exponential", "linear")

# exp() overflows float64 above this exponent; beyond it tau is +inf and the
# accept rule nu <= tau is unaffected.
_EXP_OVERFLOW = 709.0


@dataclass(frozen=True)
class Temperature:
    """Sharpness parameter of the grounding distribution.

    ``gamma`` is strictly positive during annealed sampling and exactly zero
    only in the final hard-filter phase, which never calls the sampler.
    """

    gamma: float
    floor: float = 1e-3

    def __post_init__(self) -> None:
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.gamma}")
        if not math.isfinite(self.floor) or self.floor <= 0:
            raise ValueError(f"temperature floor must be positive, got {self.floor}")


@dataclass(frozen=True)
class CoolingSchedule:
    """Non-increasing temperature sequence, clamped from below at ``floor``.

    kinds:
      * ``logarithmic``: gamma0 / ln(t + e), so the value at step 0 is exactly
        gamma0 and the sequence is strictly decreasing (the textbook
        gamma0/log(1+t) is undefined at t = 0).
      * ``exponential``: gamma0 * alpha**t.
      * ``linear``: gamma0 - alpha * t.
    """

    kind: str
    gamma0: float = 1.0
    alpha: float = 0.995
    floor: float = 1e-3

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}, expected one of {SCHEDULE_KINDS}")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "exponential" and self.alpha > 1:
            raise ValueError("exponential decay rate must be <= 1")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


def gamma_at(schedule: CoolingSchedule, step: int) -> Temperature:
    """Temperature emitted by ``schedule`` at a non-negative step index."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if schedule.kind == "logarithmic":
        value = schedule.gamma0 / math.log(step + math.e)
    elif schedule.kind == "exponential":
        value = schedule.gamma0 * schedule.alpha**step
    else:
        value = schedule.gamma0 - schedule.alpha * step
    return Temperature(max(value, schedule.floor), floor=schedule.floor)


def acceptance_ratio(logp_new: float, logp_old: float, gamma: Temperature) -> float:
    """Metropolis acceptance ratio for jumping between two feasible states.

    Returns the unclamped ratio ``(P(new)/P(old)) ** (1/gamma)`` computed as
    ``exp((logp_new - logp_old)/gamma)``; the caller accepts when a uniform
    draw is <= the returned value, so results above 1 always accept.
    """
    if not (math.isfinite(logp_new) and math.isfinite(logp_old)):
        raise NumericalFault(
            f"non-finite log-probability from the perception model: new={logp_new}, old={logp_old}"
        )
    if gamma.gamma <= 0:
        raise ValueError("acceptance ratio requires a strictly positive temperature")
    exponent = (logp_new - logp_old) / gamma.gamma
    if exponent > _EXP_OVERFLOW:
        return math.inf
    return math.exp(exponent)


def closed_form_grounding(logps, gamma: Temperature) -> np.ndarray:
    """Optimal grounding distribution over an enumerated feasible set.

    Given model log-probabilities of every feasible state, the entropy-softened
    objective is minimized in closed form by probabilities proportional to
    ``P(state) ** (1/gamma)``, i.e. a softmax of ``logps / gamma``.
    """
    logps = np.asarray(logps, dtype=float)
    if logps.size == 0:
        raise UnsatisfiableError("empty feasible set has no grounding distribution")
    if not np.all(np.isfinite(logps)):
        raise NumericalFault("non-finite log-probability in grounding support")
    if gamma.gamma <= 0:
        raise ValueError("closed-form grounding requires a strictly positive temperature")
    scaled = logps / gamma.gamma
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()
    return probs


@dataclass(frozen=True)
class StateEnergy:
    """Energy of a state under the sign convention energy = -logp."""

    energy: float

    @classmethod
    def from_logp(cls, logp: float) -> "StateEnergy":
        return cls(energy=-logp)


@dataclass
class GroundingDistribution:
    """An enumerated feasible set with model scores and a temperature.

    Only meaningful for small instances where exhaustive enumeration is
    possible; used as the exact reference that sampled chains are tested
    against.
    """

    support: list
    logps: np.ndarray
    gamma: Temperature

    def __post_init__(self) -> None:
        self.logps = np.asarray(self.logps, dtype=float)
        if len(self.support) != self.logps.shape[0]:
            raise ValueError("support and logps must be aligned")

    def probs(self) -> np.ndarray:
        return closed_form_grounding(self.logps, self.gamma)

    def energies(self) -> list[StateEnergy]:
        return [StateEnergy.from_logp(lp) for lp in self.logps]
