"""Formula-evaluation task: fixed-length expressions over digits and +,-,*,/.

States are token vectors alternating digit and operator slots.  Evaluation is
exact rational arithmetic with the usual precedence (* and / bind before + and
-, left-associative within a level); digits are 1..9 so division by zero is
unreachable.  The constraint for an instance is that the expression evaluates
exactly to the instance target.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import UnsatisfiableError
from ..sampler import Projection
from .base import Task

NUM_CLASSES = 13
ADD, SUB, MUL, DIV = 9, 10, 11, 12
OP_CHARS = "+-*/"

# Value bounds for length-7 expressions: every multiplicative term lies in
# (0, 9^4] and at most four terms are added or subtracted, so any attainable
# value has |numerator-form| <= 4 * 9^4 and denominator <= 9^3.  Used to
# short-circuit impossible targets before scanning.
_MAX_DIGITS = 5


def token_char(token: int) -> str:
    return str(token + 1) if token < 9 else OP_CHARS[token - 9]


def tokens_to_str(tokens) -> str:
    return "".join(token_char(t) for t in tokens)


def str_to_tokens(text: str) -> tuple[int, ...]:
    out = []
    for ch in text:
        if ch in "123456789":
            out.append(int(ch) - 1)
        elif ch in OP_CHARS:
            out.append(9 + OP_CHARS.index(ch))
        else:
            raise ValueError(f"unknown symbol {ch!r}")
    return tuple(out)


def is_digit_slot(position: int) -> bool:
    return position % 2 == 0


def is_wellformed(tokens) -> bool:
    if len(tokens) % 2 == 0 or len(tokens) == 0:
        return False
    for j, t in enumerate(tokens):
        if is_digit_slot(j):
            if not 0 <= t < 9:
                return False
        elif not 9 <= t < 13:
            return False
    return True


def _eval_pair(tokens) -> tuple[int, int]:
    """Exact value of a well-formed token vector as (numerator, denominator).

    The denominator is always positive because * and / apply to digit-only
    terms; the result is not reduced (callers compare by cross-multiplying).
    """
    term_num = tokens[0] + 1
    term_den = 1
    total_num = 0
    total_den = 1
    sign = 1
    for j in range(1, len(tokens), 2):
        op = tokens[j]
        d = tokens[j + 1] + 1
        if op == MUL:
            term_num *= d
        elif op == DIV:
            term_den *= d
        else:
            total_num = total_num * term_den + sign * term_num * total_den
            total_den *= term_den
            sign = 1 if op == ADD else -1
            term_num, term_den = d, 1
    total_num = total_num * term_den + sign * term_num * total_den
    total_den *= term_den
    return total_num, total_den


def eval_expr(tokens) -> Fraction:
    """Exact rational value of a well-formed expression token vector."""
    if not is_wellformed(tokens):
        raise ValueError(f"malformed expression {tuple(tokens)!r}")
    return Fraction(*_eval_pair(tokens))


def eval_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exact evaluation of many same-length token vectors.

    Returns (numerator, denominator) int64 arrays; denominators are positive.
    Int64 never overflows here: numerators stay below ~2e10 for length-7
    expressions.
    """
    rows = np.asarray(rows, dtype=np.int64)
    m, length = rows.shape
    term_num = rows[:, 0] + 1
    term_den = np.ones(m, dtype=np.int64)
    total_num = np.zeros(m, dtype=np.int64)
    total_den = np.ones(m, dtype=np.int64)
    sign = np.ones(m, dtype=np.int64)
    for j in range(1, length, 2):
        op = rows[:, j]
        d = rows[:, j + 1] + 1
        mul = op == MUL
        div = op == DIV
        flush = op <= SUB
        new_total_num = np.where(flush, total_num * term_den + sign * term_num * total_den,
                                 total_num)
        new_total_den = np.where(flush, total_den * term_den, total_den)
        sign = np.where(flush, np.where(op == ADD, 1, -1), sign)
        term_num = np.where(mul, term_num * d, np.where(div, term_num, d))
        term_den = np.where(div, term_den * d, np.where(flush, 1, term_den))
        total_num, total_den = new_total_num, new_total_den
    total_num = total_num * term_den + sign * term_num * total_den
    total_den = total_den * term_den
    return total_num, total_den


@functools.lru_cache(maxsize=4)
def _full_space(length: int):
    """All well-formed token vectors of ``length`` with their exact values.

    Row order is the canonical search order: digit assignments vary in the
    outer loops (lexicographically), operator assignments in the inner ones.
    """
    n_digits = (length + 1) // 2
    n_ops = length // 2
    digit_grid = np.stack(
        np.meshgrid(*([np.arange(9)] * n_digits), indexing="ij"), axis=-1
    ).reshape(-1, n_digits)
    op_grid = np.stack(
        np.meshgrid(*([np.arange(4)] * n_ops), indexing="ij"), axis=-1
    ).reshape(-1, n_ops)
    rows = np.empty((digit_grid.shape[0] * op_grid.shape[0], length), dtype=np.int64)
    rows[:, 0::2] = np.repeat(digit_grid, op_grid.shape[0], axis=0)
    rows[:, 1::2] = np.tile(op_grid, (digit_grid.shape[0], 1)) + 9
    num, den = eval_rows(rows)
    return rows.astype(np.int8), num, den


def _target_in_range(target: Fraction, length: int) -> bool:
    n_digits = (length + 1) // 2
    bound = n_digits * 9**n_digits
    return target.denominator <= 9 ** (length // 2) and abs(target) <= bound


def _target_mask(target: Fraction, length: int) -> np.ndarray:
    _, num, den = _full_space(length)
    return num * target.denominator == den * target.numerator


@functools.lru_cache(maxsize=65536)
def first_solution(target: Fraction, length: int = 7):
    """First token vector evaluating to ``target`` in canonical search order,
    or None when the target is unattainable at this length."""
    if length % 2 == 0 or length < 1 or (length + 1) // 2 > _MAX_DIGITS:
        raise ValueError(f"unsupported expression length {length}")
    if not _target_in_range(target, length):
        return None
    rows, _, _ = _full_space(length)
    hits = np.flatnonzero(_target_mask(target, length))
    if hits.size == 0:
        return None
    return tuple(int(t) for t in rows[hits[0]])


def count_solutions(target: Fraction, length: int = 7) -> int:
    if not _target_in_range(target, length):
        return 0
    return int(_target_mask(target, length).sum())


def enumerate_solutions(target: Fraction, length: int = 7) -> list[tuple[int, ...]]:
    """Every token vector evaluating to ``target``, in canonical order."""
    if not _target_in_range(target, length):
        return []
    rows, _, _ = _full_space(length)
    hits = np.flatnonzero(_target_mask(target, length))
    return [tuple(int(t) for t in rows[i]) for i in hits]


def max_attainable(length: int = 7) -> Fraction:
    """Largest value any expression of ``length`` attains (brute force)."""
    _, num, den = _full_space(length)
    values = num / den
    best = int(np.argmax(values))
    return Fraction(int(num[best]), int(den[best]))


def _check_kept_types(projected, kept) -> None:
    for pos, value in zip(kept, projected):
        if is_digit_slot(pos) != (value < 9):
            raise ValueError(f"token {value} is inconsistent with slot {pos}")


@functools.lru_cache(maxsize=1 << 16)
def _invert_scan(projected: tuple, kept: tuple, dropped: tuple,
                 target: Fraction, length: int):
    """Reference inversion: enumerate fillings of the dropped slots in
    position-major, value-ascending order and return the first feasible one."""
    _check_kept_types(projected, kept)
    if not dropped:
        full = np.empty((1, length), dtype=np.int64)
        full[0, list(kept)] = projected
        num, den = eval_rows(full)
        if num[0] * target.denominator == den[0] * target.numerator:
            return tuple(int(t) for t in full[0])
        return None
    slot_values = [range(9) if is_digit_slot(p) else range(9, 13) for p in dropped]
    candidates = np.array(list(itertools.product(*slot_values)), dtype=np.int64)
    rows = np.empty((candidates.shape[0], length), dtype=np.int64)
    rows[:, list(kept)] = projected
    rows[:, list(dropped)] = candidates
    num, den = eval_rows(rows)
    hits = np.flatnonzero(num * target.denominator == den * target.numerator)
    if hits.size == 0:
        return None
    return tuple(int(t) for t in rows[hits[0]])


def _slot_radix(position: int) -> int:
    return 9 if is_digit_slot(position) else 4


def _encode_kept(projected, kept) -> int:
    key = 0
    for pos, value in zip(kept, projected):
        if is_digit_slot(pos):
            key = key * 9 + value
        else:
            key = key * 4 + (value - 9)
    return key


@functools.lru_cache(maxsize=4096)
def _inversion_table(target: Fraction, dropped: tuple, length: int):
    """First-feasible completion, indexed by encoded kept-configuration.

    One vectorized pass over the full expression space yields, for every
    configuration of the kept slots, the row index of its first feasible
    completion in the same position-major, value-ascending candidate order the
    reference scan uses (the full space is enumerated digits-major, so within
    a fixed kept configuration the dropped digit slots vary lexicographically).
    Returns (sorted encoded keys, row indices) for binary-search lookup.
    """
    kept = tuple(i for i in range(length) if i not in set(dropped))
    empty = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))
    if not _target_in_range(target, length):
        return empty
    rows, _, _ = _full_space(length)
    feasible = np.flatnonzero(_target_mask(target, length))
    if feasible.size == 0:
        return empty
    keys = np.zeros(feasible.size, dtype=np.int64)
    for pos in kept:
        column = rows[feasible, pos].astype(np.int64)
        if is_digit_slot(pos):
            keys = keys * 9 + column
        else:
            keys = keys * 4 + (column - 9)
    # np.unique reports the first occurrence, i.e. the lowest feasible row
    unique_keys, first = np.unique(keys, return_index=True)
    return unique_keys, feasible[first].astype(np.int32)


def _invert_by_table(projected: tuple, kept: tuple, dropped: tuple,
                     target: Fraction, length: int):
    _check_kept_types(projected, kept)
    keys, rows_idx = _inversion_table(target, dropped, length)
    if keys.size == 0:
        return None
    key = _encode_kept(projected, kept)
    pos = np.searchsorted(keys, key)
    if pos >= keys.size or keys[pos] != key:
        return None
    rows, _, _ = _full_space(length)
    return tuple(int(t) for t in rows[rows_idx[pos]])


@dataclass(frozen=True)
class HwfInstance:
    """One training example: a target value plus hidden gold tokens."""

    example_id: int
    target: Fraction
    gold: tuple[int, ...]
    feature_seed: int = 0

    @property
    def length(self) -> int:
        return len(self.gold)


class HwfTask(Task):
    name = "hwf"
    kind = "discrete"
    num_classes = NUM_CLASSES

    def state_dim(self, instance: HwfInstance) -> int:
        return instance.length

    def feasible(self, instance: HwfInstance, state) -> bool:
        if not is_wellformed(state):
            return False
        num, den = _eval_pair(state)
        return num * instance.target.denominator == den * instance.target.numerator

    def initial_solution(self, instance: HwfInstance, rng=None):
        solution = first_solution(instance.target, instance.length)
        if solution is None:
            raise UnsatisfiableError(
                f"no length-{instance.length} expression evaluates to {instance.target}"
            )
        return solution

    def projection(self, instance: HwfInstance, choice: str = "default") -> Projection:
        length = instance.length
        if choice == "default":
            # drop the third and fifth symbols (both digit slots)
            dropped = tuple(p for p in (2, 4) if p < length)
        elif choice == "endpoints":
            # drop the first and last digits
            dropped = (0, length - 1)
        elif choice == "identity":
            dropped = ()
        else:
            raise ValueError(f"unknown hwf projection {choice!r}")
        return Projection(length, dropped)

    def walk_projected(self, instance: HwfInstance, projected, projection, rng):
        i = int(rng.integers(len(projected)))
        current = projected[i]
        if is_digit_slot(projection.kept[i]):
            r = int(rng.integers(8))
            new = r + (r >= current)
        else:
            r = int(rng.integers(3))
            new = 9 + r + (r >= current - 9)
        out = list(projected)
        out[i] = new
        return tuple(out)

    def invert_projection(self, instance: HwfInstance, projected, projection):
        return _invert_by_table(tuple(projected), projection.kept, projection.dropped,
                                instance.target, instance.length)

    def enumerate_feasible(self, instance: HwfInstance):
        return enumerate_solutions(instance.target, instance.length)

    def gold_state(self, instance: HwfInstance):
        return instance.gold

    def symbol_accuracy(self, instance: HwfInstance, state) -> float:
        hits = sum(a == b for a, b in zip(state, instance.gold))
        return hits / instance.length
