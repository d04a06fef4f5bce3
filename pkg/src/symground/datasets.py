"""Dataset generation and the line-delimited example file format.

A dataset file is UTF-8 JSON lines: one meta record (task name plus the
featurizer configuration) followed by one record per example.  Feature
vectors are never stored; each example carries a feature seed from which its
features are regenerated bit-exactly at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import UnsatisfiableError
from .perception import Featurizer
from .tasks import (HwfInstance, SdspInstance, SudokuInstance, get_task)
from .tasks import hwf as hwf_mod
from .tasks import sdsp as sdsp_mod
from .tasks import sudoku as sudoku_mod

_DATA_STREAM = 505
_FORMAT_VERSION = 1
_MAX_SEED = 2**31 - 1


@dataclass
class Dataset:
    """Instances plus the featurizer their raw features are drawn from."""

    task_name: str
    featurizer: Featurizer | None
    instances: list

    def __len__(self) -> int:
        return len(self.instances)

    def features(self, instance) -> np.ndarray:
        if self.task_name == "sdsp":
            return instance.features()
        if self.task_name == "hwf":
            classes = instance.gold
        else:
            classes = tuple(v - 1 for v in instance.gold)
        return self.featurizer.features_for_classes(classes, instance.feature_seed)


def make_featurizer(task_name: str, seed: int, feature_dim: int = 16,
                    prototype_scale: float = 3.0, noise_sigma: float = 0.6) -> Featurizer | None:
    if task_name == "sdsp":
        return None
    num_classes = hwf_mod.NUM_CLASSES if task_name == "hwf" else sudoku_mod.NUM_CLASSES
    return Featurizer(num_classes, feature_dim=feature_dim, scale=prototype_scale,
                      noise_sigma=noise_sigma, seed=seed)


def generate_dataset(task_name: str, size: int, seed: int, *, featurizer: Featurizer | None = None,
                     hwf_length: int = 7, graph_nodes: int = 10, edge_prob: float = 0.35,
                     id_offset: int = 0) -> Dataset:
    """Sample ``size`` satisfiable examples; every example is verified before
    being admitted (a failed verification triggers a bounded regeneration)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, _DATA_STREAM)))
    task = get_task(task_name)
    instances = []
    for k in range(size):
        example_id = id_offset + k
        for attempt in range(50):
            instance = _sample_instance(task_name, example_id, rng,
                                        hwf_length=hwf_length,
                                        graph_nodes=graph_nodes, edge_prob=edge_prob)
            if task.feasible(instance, task.gold_state(instance)):
                break
        else:
            raise UnsatisfiableError(f"could not generate a satisfiable example {example_id}")
        instances.append(instance)
    return Dataset(task_name, featurizer, instances)


def _sample_instance(task_name: str, example_id: int, rng, *, hwf_length: int,
                     graph_nodes: int, edge_prob: float):
    feature_seed = int(rng.integers(_MAX_SEED))
    if task_name == "hwf":
        gold = _random_expression(hwf_length, rng)
        return HwfInstance(example_id=example_id, target=hwf_mod.eval_expr(gold),
                           gold=gold, feature_seed=feature_seed)
    if task_name == "sudoku":
        boards = sudoku_mod.all_valid_boards()
        gold = boards[int(rng.integers(len(boards)))]
        return SudokuInstance(example_id=example_id, gold=gold, feature_seed=feature_seed)
    if task_name == "sdsp":
        adjacency = sdsp_mod.random_connected_graph(graph_nodes, edge_prob, rng)
        # the regressor input carries no endpoint information, so the
        # destination is fixed across the dataset
        destination = 0
        source = int(rng.integers(1, graph_nodes))
        distances = sdsp_mod.dijkstra(adjacency, destination)
        return SdspInstance(example_id=example_id, adjacency=adjacency, source=source,
                            destination=destination, exact_distances=distances,
                            feature_seed=feature_seed)
    raise ValueError(f"unknown task {task_name!r}")


def _random_expression(length: int, rng) -> tuple[int, ...]:
    tokens = []
    for j in range(length):
        if j % 2 == 0:
            tokens.append(int(rng.integers(9)))
        else:
            tokens.append(9 + int(rng.integers(4)))
    return tuple(tokens)


# -- serialization -----------------------------------------------------------


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _instance_record(task_name: str, instance) -> dict:
    record = {"id": instance.example_id, "seed": instance.feature_seed, "task": task_name}
    if task_name == "hwf":
        record["gold"] = list(instance.gold)
        record["target"] = f"{instance.target.numerator}/{instance.target.denominator}"
        record["payload"] = {"length": instance.length}
    elif task_name == "sudoku":
        board = [list(instance.gold[r * 4:r * 4 + 4]) for r in range(4)]
        record["gold"] = board
        record["target"] = None
        record["payload"] = {}
    else:
        record["gold"] = [int(d) for d in instance.exact_distances]
        record["target"] = None
        record["payload"] = {
            "adjacency": instance.adjacency.tolist(),
            "source": instance.source,
            "destination": instance.destination,
        }
    return record


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": _FORMAT_VERSION, "kind": "meta", "task": dataset.task_name}
    if dataset.featurizer is not None:
        f = dataset.featurizer
        meta["featurizer"] = {"classes": f.num_classes, "dim": f.feature_dim,
                              "noise": f.noise_sigma, "scale": f.scale, "seed": f.seed}
    lines = [_dump(meta)]
    lines.extend(_dump(_instance_record(dataset.task_name, inst)) for inst in dataset.instances)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path) -> Dataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty dataset file {path}")
    meta = json.loads(lines[0])
    if meta.get("kind") != "meta":
        raise ValueError(f"{path} does not start with a meta record")
    task_name = meta["task"]
    featurizer = None
    if "featurizer" in meta:
        f = meta["featurizer"]
        featurizer = Featurizer(f["classes"], feature_dim=f["dim"], scale=f["scale"],
                                noise_sigma=f["noise"], seed=f["seed"])
    instances = []
    for line in lines[1:]:
        record = json.loads(line)
        instances.append(_instance_from_record(task_name, record))
    return Dataset(task_name, featurizer, instances)


def _instance_from_record(task_name: str, record: dict):
    if record["task"] != task_name:
        raise ValueError(f"record task {record['task']!r} does not match file task {task_name!r}")
    if task_name == "hwf":
        p, q = record["target"].split("/")
        return HwfInstance(example_id=record["id"], target=Fraction(int(p), int(q)),
                           gold=tuple(record["gold"]), feature_seed=record["seed"])
    if task_name == "sudoku":
        gold = tuple(v for row in record["gold"] for v in row)
        return SudokuInstance(example_id=record["id"], gold=gold, feature_seed=record["seed"])
    payload = record["payload"]
    return SdspInstance(example_id=record["id"],
                        adjacency=np.array(payload["adjacency"], dtype=np.int64),
                        source=payload["source"], destination=payload["destination"],
                        exact_distances=np.array(record["gold"], dtype=np.int64),
                        feature_seed=record["seed"])
