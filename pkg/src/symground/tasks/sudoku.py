"""4x4 Sudoku task: every row, column, and 2x2 block is a permutation of 1..4.

Boards are flat 16-tuples in row-major order.  The constraint is the same for
every instance (board validity); what differs between examples is the hidden
gold board the features are rendered from.  The default projection keeps the
two main-diagonal blocks and drops the anti-diagonal two.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

from ..sampler import Projection
from .base import Task

NUM_CLASSES = 4
DIM = 4

ROWS = tuple(tuple(range(r * 4, r * 4 + 4)) for r in range(4))
COLS = tuple(tuple(range(c, 16, 4)) for c in range(4))
BLOCKS = ((0, 1, 4, 5), (2, 3, 6, 7), (8, 9, 12, 13), (10, 11, 14, 15))
GROUPS = ROWS + COLS + BLOCKS

# anti-diagonal blocks (top-right and bottom-left)
DEFAULT_DROPPED = tuple(sorted(BLOCKS[1] + BLOCKS[2]))

_FULL_SET = frozenset((1, 2, 3, 4))


def sudoku_valid(board) -> bool:
    """True iff every row, column, and block is a permutation of 1..4."""
    if len(board) != 16 or any(not 1 <= v <= 4 for v in board):
        return False
    return all(frozenset(board[i] for i in group) == _FULL_SET for group in GROUPS)


_CELL_GROUPS = tuple(
    tuple(g for g in GROUPS if i in g) for i in range(16)
)


def _placement_ok(board: list, cell: int, value: int) -> bool:
    for group in _CELL_GROUPS[cell]:
        for j in group:
            if j != cell and board[j] == value:
                return False
    return True


def sudoku_complete(board):
    """First valid completion of a partial board (0 marks a hole), or None.

    Search is deterministic: holes are filled in row-major order, candidate
    values ascending.
    """
    work = list(board)
    if any(v != 0 and not 1 <= v <= 4 for v in work):
        raise ValueError("filled cells must be in 1..4")
    holes = [i for i, v in enumerate(work) if v == 0]
    for i, v in enumerate(work):
        if v != 0 and not _placement_ok(work, i, v):
            return None

    def backtrack(k: int) -> bool:
        if k == len(holes):
            return True
        cell = holes[k]
        for value in (1, 2, 3, 4):
            if _placement_ok(work, cell, value):
                work[cell] = value
                if backtrack(k + 1):
                    return True
                work[cell] = 0
        return False

    if not backtrack(0):
        return None
    return tuple(work)


@functools.lru_cache(maxsize=1)
def all_valid_boards() -> tuple[tuple[int, ...], ...]:
    """Exhaustive, duplicate-free enumeration of all valid boards (288)."""
    out = []
    work = [0] * 16

    def backtrack(cell: int) -> None:
        if cell == 16:
            out.append(tuple(work))
            return
        for value in (1, 2, 3, 4):
            if _placement_ok(work, cell, value):
                work[cell] = value
                backtrack(cell + 1)
                work[cell] = 0

    backtrack(0)
    return tuple(out)


def value_permutation(board, rng):
    """Swap every occurrence of two distinct values; validity is preserved.

    This is the full-space random walk of the no-projection baseline: any
    relabeling maps valid boards to valid boards.
    """
    a = int(rng.integers(4)) + 1
    r = int(rng.integers(3)) + 1
    b = r + (r >= a)
    swap = {a: b, b: a}
    return tuple(swap.get(v, v) for v in board)


@dataclass(frozen=True)
class SudokuInstance:
    """One training example: features are rendered from the hidden gold board."""

    example_id: int
    gold: tuple[int, ...]
    feature_seed: int = 0


class SudokuTask(Task):
    name = "sudoku"
    kind = "discrete"
    num_classes = NUM_CLASSES
    label_offset = 1  # board digits 1..4 are classifier classes 0..3

    def __init__(self, walk: str = "block_swap"):
        if walk not in ("block_swap", "value_permutation"):
            raise ValueError(f"unknown sudoku walk {walk!r}")
        self.walk = walk

    def state_dim(self, instance) -> int:
        return 16

    def feasible(self, instance, state) -> bool:
        return sudoku_valid(state)

    def initial_solution(self, instance, rng):
        boards = all_valid_boards()
        return boards[int(rng.integers(len(boards)))]

    def projection(self, instance, choice: str = "default") -> Projection:
        if choice == "default":
            return Projection(16, DEFAULT_DROPPED)
        if choice == "identity":
            return Projection(16, ())
        raise ValueError(f"unknown sudoku projection {choice!r}")

    def walk_projected(self, instance, projected, projection, rng):
        if self.walk == "value_permutation":
            return value_permutation(projected, rng)
        # swap the values of two distinct kept cells; two distinct cells always
        # lie in different rows or different columns
        i = int(rng.integers(len(projected)))
        r = int(rng.integers(len(projected) - 1))
        j = r + (r >= i)
        out = list(projected)
        out[i], out[j] = out[j], out[i]
        return tuple(out)

    def invert_projection(self, instance, projected, projection):
        board = [0] * 16
        for idx, value in zip(projection.kept, projected):
            board[idx] = value
        return sudoku_complete(board)

    def enumerate_feasible(self, instance):
        return list(all_valid_boards())

    def gold_state(self, instance):
        return instance.gold

    def symbol_accuracy(self, instance, state) -> float:
        hits = sum(a == b for a, b in zip(state, instance.gold))
        return hits / 16

    def output_correct(self, instance, state) -> bool:
        return tuple(state) == instance.gold
