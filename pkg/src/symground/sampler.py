"""Per-example Markov chains over constrained symbol spaces.

Each training example owns a persistent chain whose state is always feasible.
A step projects the state to a lower-dimensional space, mutates one component
there, completes the result back to a full feasible state with the task's
inverse-projection solver, and accepts or rejects by the temperature-scaled
ratio of model probabilities.  Completions that do not exist count as
rejections and still consume the step budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annealing import Temperature, acceptance_ratio
from .errors import UnsatisfiableError

_CHAIN_STREAM = 404

ACCEPTED = "accepted"
REJECTED_BY_RATIO = "rejected_by_ratio"
REJECTED_UNSAT = "rejected_unsat"
_OUTCOME_KINDS = (ACCEPTED, REJECTED_BY_RATIO, REJECTED_UNSAT)


@dataclass(frozen=True)
class Projection:
    """Index partition of state components into kept and dropped."""

    total_dim: int
    dropped: tuple[int, ...]
    kept: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        dropped = tuple(sorted(set(int(i) for i in self.dropped)))
        if dropped and not (0 <= dropped[0] and dropped[-1] < self.total_dim):
            raise ValueError("dropped index out of range")
        kept = tuple(i for i in range(self.total_dim) if i not in set(dropped))
        if not kept:
            raise ValueError("projection must keep at least one component")
        object.__setattr__(self, "dropped", dropped)
        object.__setattr__(self, "kept", kept)

    @property
    def is_identity(self) -> bool:
        return not self.dropped

    def project(self, state):
        """Kept components of ``state``, in index order."""
        if isinstance(state, np.ndarray):
            return state[list(self.kept)]
        return tuple(state[i] for i in self.kept)


def identity_projection(total_dim: int) -> Projection:
    return Projection(total_dim, ())


@dataclass(frozen=True)
class ProposalOutcome:
    kind: str
    proposed: object = None

    def __post_init__(self) -> None:
        if self.kind not in _OUTCOME_KINDS:
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        if (self.proposed is None) != (self.kind == REJECTED_UNSAT):
            raise ValueError("proposed state must be present iff the inversion succeeded")


@dataclass
class GroundingChain:
    """Persistent chain state for one training example.

    ``state`` is feasible at all times; ``logp`` caches the perception
    model's score of ``state`` and is refreshed at the start of every run so
    it never goes stale across model updates.
    """

    example_id: int
    state: object
    initial_state: object
    rng: np.random.Generator
    logp: float | None = None
    steps_taken: int = 0
    escapes: int = 0
    accepted: int = 0
    proposals: int = 0


def _chain_rng(seed, example_id: int) -> np.random.Generator:
    entropy = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    return np.random.default_rng(np.random.SeedSequence((*entropy, _CHAIN_STREAM, example_id)))


def init_chain(instance, task, seed) -> GroundingChain:
    """Start a chain at a solver-produced feasible state.

    Deterministic given ``seed``: the chain's private random stream is derived
    from (seed, example_id), so serial and parallel execution agree.
    """
    rng = _chain_rng(seed, instance.example_id)
    state = task.initial_solution(instance, rng)
    if not task.feasible(instance, state):
        raise UnsatisfiableError(
            f"initial solution for example {instance.example_id} is infeasible"
        )
    return GroundingChain(
        example_id=instance.example_id,
        state=state,
        initial_state=state if not isinstance(state, np.ndarray) else state.copy(),
        rng=rng,
    )


def metropolis_step(chain: GroundingChain, instance, task, projection: Projection,
                    scorer, gamma: Temperature, rng=None) -> ProposalOutcome:
    """One projected random-walk proposal with Metropolis accept/reject.

    The accept rule is ``nu <= tau`` with ``nu ~ Uniform[0,1]``; a proposal
    whose inversion is unsatisfiable is rejected without drawing ``nu``.
    """
    if gamma.gamma <= 0:
        raise ValueError("sampling requires a strictly positive temperature")
    if rng is None:
        rng = chain.rng
    if chain.logp is None:
        chain.logp = scorer.logp(chain.state)
    chain.steps_taken += 1
    chain.proposals += 1
    projected = projection.project(chain.state)
    walked = task.walk_projected(instance, projected, projection, rng)
    proposal = task.invert_projection(instance, walked, projection)
    if proposal is None:
        return ProposalOutcome(REJECTED_UNSAT)
    logp_new = scorer.logp(proposal)
    tau = acceptance_ratio(logp_new, chain.logp, gamma)
    nu = rng.random()
    if nu <= tau:
        chain.state = proposal
        chain.logp = logp_new
        chain.accepted += 1
        if not task.same_state(proposal, chain.initial_state):
            chain.escapes += 1
        return ProposalOutcome(ACCEPTED, proposal)
    return ProposalOutcome(REJECTED_BY_RATIO, proposal)


def run_chain(chain: GroundingChain, instance, task, projection: Projection,
              scorer, gamma: Temperature, steps: int):
    """Advance the chain ``steps`` proposals and return its final state.

    Refreshes the cached state score on entry, so callers may update the
    perception model freely between runs.
    """
    if steps < 0:
        raise ValueError("step count must be >= 0")
    chain.logp = scorer.logp(chain.state)
    for _ in range(steps):
        metropolis_step(chain, instance, task, projection, scorer, gamma)
    return chain.state


def chain_escaped(chain: GroundingChain, task) -> bool:
    return not task.same_state(chain.state, chain.initial_state)


def connectivity_probe(instances, task, projection: Projection, scorer_for,
                       gamma0: Temperature, steps_per_instance: int, seed=0) -> float:
    """Fraction of fresh chains that leave their initial state within a budget.

    A mixing diagnostic: well-chosen projections let most chains jump to a
    different feasible state within one epoch's worth of steps, while
    single-site walks in the full space almost never can.
    """
    if not instances:
        raise ValueError("probe needs at least one instance")
    escaped = 0
    for instance in instances:
        chain = init_chain(instance, task, seed)
        scorer = scorer_for(instance)
        run_chain(chain, instance, task, projection, scorer, gamma0, steps_per_instance)
        escaped += chain_escaped(chain, task)
    return escaped / len(instances)
