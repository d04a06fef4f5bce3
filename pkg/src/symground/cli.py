"""Config-driven command line: data generation, training, probes, oracle checks.

Every command honors a global ``--seed`` and is byte-for-byte reproducible.
Commands that write into the output directory leave a FAILED marker file when
they abort, so partial outputs are never mistaken for finished runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import datasets, perception, trainer
from .annealing import Temperature
from .errors import SymgroundError
from .sampler import connectivity_probe
from .tasks import get_task
from .tasks.hwf import HwfInstance, str_to_tokens


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _write_failed(output_dir: Path, message: str) -> None:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        (output_dir / "FAILED").write_text(message + "\n", encoding="utf-8")
    except OSError:
        pass


def _clear_failed(output_dir: Path) -> None:
    marker = output_dir / "FAILED"
    if marker.exists():
        marker.unlink()


def cmd_gen_data(cfg) -> int:
    featurizer = datasets.make_featurizer(
        cfg.task, cfg.seed, feature_dim=cfg.data.feature_dim,
        prototype_scale=cfg.data.prototype_scale, noise_sigma=cfg.data.noise_sigma)
    common = dict(featurizer=featurizer, hwf_length=cfg.data.hwf_length,
                  graph_nodes=cfg.data.graph_nodes, edge_prob=cfg.data.edge_prob)
    train_set = datasets.generate_dataset(cfg.task, cfg.train_size, cfg.seed, **common)
    test_set = datasets.generate_dataset(cfg.task, cfg.test_size, cfg.seed + 1,
                                         id_offset=cfg.train_size, **common)
    datasets.write_dataset(train_set, cfg.train_path)
    datasets.write_dataset(test_set, cfg.test_path)
    print(f"wrote {len(train_set)} train examples to {cfg.train_path}")
    print(f"wrote {len(test_set)} test examples to {cfg.test_path}")
    return 0


def _load_split(cfg, path: str) -> datasets.Dataset:
    if not Path(path).exists():
        raise SymgroundError(f"dataset file {path} not found; run gen-data first")
    return datasets.read_dataset(path)


def cmd_train(cfg) -> int:
    train_set = _load_split(cfg, cfg.train_path)
    test_set = _load_split(cfg, cfg.test_path)
    result = trainer.train(cfg, train_set)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    records = [m.to_record(stage=1) for m in result.stage1_metrics]
    records += [m.to_record(stage=2) for m in result.stage2_metrics]
    (out / "metrics.jsonl").write_text(
        "".join(_dump(r) + "\n" for r in records), encoding="utf-8")
    _write_csv(out / "metrics.csv", records)

    perception.save_checkpoint(result.model, out / "checkpoint.npz")

    task, _ = trainer.task_for_config(cfg)
    test_metrics = trainer.evaluate(result.model, test_set, task=task)
    train_metrics = trainer.evaluate(result.model, train_set, task=task)
    summary = {
        "kind": "summary",
        "task": cfg.task,
        "method": cfg.method,
        "seed": cfg.seed,
        "train": train_metrics.to_record(stage=0),
        "test": test_metrics.to_record(stage=0),
    }
    (out / "summary.json").write_text(_dump(summary) + "\n", encoding="utf-8")
    print(f"test symbol accuracy {test_metrics.symbol_accuracy:.4f}, "
          f"output accuracy {test_metrics.output_accuracy:.4f}")
    return 0


def _write_csv(path: Path, records: list[dict]) -> None:
    if not records:
        path.write_text("", encoding="utf-8")
        return
    columns = list(records[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for record in records:
            writer.writerow({k: ("" if v is None else v) for k, v in record.items()})


def cmd_eval(cfg, checkpoint: str | None) -> int:
    test_set = _load_split(cfg, cfg.test_path)
    path = checkpoint or str(Path(cfg.output_dir) / "checkpoint.npz")
    model = perception.load_checkpoint(path)
    task, _ = trainer.task_for_config(cfg)
    metrics = trainer.evaluate(model, test_set, task=task)
    print(_dump(metrics.to_record(stage=0)))
    return 0


def _uniform_scorer_factory(cfg, dataset, task):
    if cfg.task == "sdsp":
        n = dataset.instances[0].n
        return lambda inst: perception.GaussianScorer(np.zeros(n), cfg.model.sigma)
    num_classes = dataset.featurizer.num_classes
    length = len(dataset.instances[0].gold)
    table = np.full((length, num_classes), -math.log(num_classes))
    scorer = perception.DiscreteScorer(table, task.label_offset)
    return lambda inst: scorer


def cmd_probe(cfg) -> int:
    train_set = _load_split(cfg, cfg.train_path)
    task, choice = trainer.task_for_config(cfg)
    scorer_for = _uniform_scorer_factory(cfg, train_set, task)
    gamma0 = Temperature(cfg.schedule.gamma0, floor=cfg.schedule.floor)
    report = {"kind": "probe", "gamma0": cfg.schedule.gamma0, "steps": cfg.sampler.steps}
    for name, projection_choice in (("projected", choice), ("identity", "identity")):
        projection = task.projection(train_set.instances[0], projection_choice)
        report[name] = connectivity_probe(train_set.instances, task, projection, scorer_for,
                                          gamma0, cfg.sampler.steps, seed=cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.json").write_text(_dump(report) + "\n", encoding="utf-8")
    print(_dump(report))
    return 0


def _oracle_toy(seed: int):
    """A tiny enumerable formula instance plus features and a random model."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 909)))
    gold = tuple(int(rng.integers(9)) if j % 2 == 0 else 9 + int(rng.integers(4))
                 for j in range(3))
    from .tasks.hwf import eval_expr
    instance = HwfInstance(example_id=0, target=eval_expr(gold), gold=gold,
                           feature_seed=seed)
    featurizer = perception.Featurizer(13, feature_dim=16, scale=3.0, noise_sigma=0.6,
                                       seed=seed)
    features = featurizer.features_for_classes(gold, seed)
    model = perception.ClassifierModel(16, 32, 13, seed=seed)
    return instance, features, model


def cmd_oracle_check(corrupt_acceptance: bool = False) -> int:
    task = get_task("hwf")
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    worst = 0.0
    for seed in range(20):
        instance, features, model = _oracle_toy(seed)
        worst = max(worst, trainer.ssl_gradient_check(task, instance, features, model))
    report("ssl-gradient-equivalence", worst <= 1e-6, f"max-abs discrepancy {worst:.3e}")

    toy = HwfInstance(example_id=0, target=Fraction(3), gold=str_to_tokens("1*3"),
                      feature_seed=7)
    featurizer = perception.Featurizer(13, seed=7)
    features = featurizer.features_for_classes(toy.gold, 7)
    model = perception.ClassifierModel(16, 32, 13, seed=7)
    projection = task.projection(toy, "default")
    chain_gamma = Temperature(0.2) if corrupt_acceptance else None
    if corrupt_acceptance:
        print("note: acceptance rule deliberately corrupted (chain temperature 0.2 vs oracle 1.0)")
    tv = trainer.chain_oracle_tv(task, toy, features, model, projection, Temperature(1.0),
                                 n_samples=100_000, burn_in=2_000, seed=0,
                                 chain_gamma=chain_gamma)
    report("chain-vs-oracle-tv", tv <= 0.05, f"tv {tv:.4f} over {len(task.enumerate_feasible(toy))} states")

    biases = [trainer.gradient_bias(task, toy, features, model, projection,
                                    Temperature(1.0), steps, n_seeds=20)
              for steps in (1, 10, 100)]
    monotone = biases[0] >= biases[1] >= biases[2]
    report("gradient-bias-decay", monotone,
           "bias at T=1/10/100: " + "/".join(f"{b:.4f}" for b in biases))

    return 1 if failures else 0


def cmd_print_config() -> int:
    sys.stdout.write(config_mod.reference_config())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symground",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, needs_config: bool = True):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="path to a YAML run config")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        return p

    add("gen-data")
    add("train")
    p_eval = add("eval")
    p_eval.add_argument("--checkpoint", default=None, help="model checkpoint to evaluate")
    add("probe")
    p_oracle = add("oracle-check", needs_config=False)
    p_oracle.add_argument("--corrupt-acceptance", action="store_true",
                          help="negative control: corrupt the acceptance rule and expect failure")
    add("print-config", needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "print-config":
        return cmd_print_config()
    if args.command == "oracle-check":
        return cmd_oracle_check(corrupt_acceptance=args.corrupt_acceptance)
    try:
        cfg = config_mod.load_config(args.config, seed=args.seed)
    except (SymgroundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    try:
        _clear_failed(out)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "probe":
            return cmd_probe(cfg)
        raise SymgroundError(f"unknown command {args.command}")
    except Exception as exc:  # noqa: BLE001 - marker + exit code on any failure
        _write_failed(out, f"{args.command} failed: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
