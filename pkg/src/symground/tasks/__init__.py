"""The three constraint systems behind the trainer."""

from .base import Task
from .hwf import HwfInstance, HwfTask, eval_expr
from .sdsp import SdspInstance, SdspTask, dijkstra, greedy_astar
from .sudoku import SudokuInstance, SudokuTask, sudoku_complete, sudoku_valid

TASK_NAMES = ("hwf", "sudoku", "sdsp")


def get_task(name: str, **kwargs) -> Task:
    if name == "hwf":
        return HwfTask(**kwargs)
    if name == "sudoku":
        return SudokuTask(**kwargs)
    if name == "sdsp":
        return SdspTask(**kwargs)
    raise ValueError(f"unknown task {name!r}")


__all__ = [
    "Task", "get_task", "TASK_NAMES",
    "HwfInstance", "HwfTask", "eval_expr",
    "SudokuInstance", "SudokuTask", "sudoku_valid", "sudoku_complete",
    "SdspInstance", "SdspTask", "dijkstra", "greedy_astar",
]
