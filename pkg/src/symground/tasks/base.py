"""Contract every constraint system implements for the sampler and trainer."""

from __future__ import annotations

import abc

import numpy as np


class Task(abc.ABC):
    """A symbolic constraint system over latent symbol states.

    Implementations provide feasibility checking, an initial feasible
    solution, a random walk in a projected subspace, and the inverse
    projection that completes a projected state back to a full feasible one.
    Everything is pure given (instance, rng), so chains for different
    examples can run concurrently.
    """

    name: str
    kind: str  # "discrete" or "continuous"
    label_offset: int = 0  # state value minus classifier class index

    @abc.abstractmethod
    def state_dim(self, instance) -> int:
        """Number of symbol components in a full state."""

    @abc.abstractmethod
    def feasible(self, instance, state) -> bool:
        """Whether ``state`` satisfies the instance's symbolic constraint."""

    @abc.abstractmethod
    def initial_solution(self, instance, rng):
        """A feasible state to start a chain from; raises UnsatisfiableError."""

    @abc.abstractmethod
    def projection(self, instance, choice: str = "default"):
        """Named projection for this task ("default", "identity", ...)."""

    @abc.abstractmethod
    def walk_projected(self, instance, projected, projection, rng):
        """One symmetric random-walk move in the projected space."""

    @abc.abstractmethod
    def invert_projection(self, instance, projected, projection):
        """First feasible completion agreeing with ``projected`` on kept
        components, or None when no completion exists."""

    def enumerate_feasible(self, instance):
        raise NotImplementedError(f"task {self.name!r} has no exhaustive enumeration")

    # -- metric hooks ------------------------------------------------------

    @abc.abstractmethod
    def gold_state(self, instance):
        """Hidden reference state (metrics and supervised baselines only)."""

    @abc.abstractmethod
    def symbol_accuracy(self, instance, state) -> float:
        """Fraction of components of ``state`` matching the gold state."""

    def output_correct(self, instance, state) -> bool:
        """Whether decoding ``state`` yields the instance's final output."""
        return self.feasible(instance, state)

    def same_state(self, a, b) -> bool:
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            return np.array_equal(a, b)
        return a == b

    # -- discrete-task label mapping (classifier classes <-> state values) ---

    def state_to_labels(self, state):
        if self.label_offset == 0:
            return state
        return tuple(v - self.label_offset for v in state)

    def labels_to_state(self, labels):
        return tuple(int(v) + self.label_offset for v in labels)
