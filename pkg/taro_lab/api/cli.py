"""
Command-line subcommands for taro-lab

Each handler takes the parsed arguments, does its work through the
services layer and returns an exit code. Exceptions propagate to main(),
which maps them to exit codes and a JSON error report.
"""
import argparse
import json
import logging
from pathlib import Path
from typing import Callable, Dict, Optional

from taro_lab import __version__
from taro_lab.config import settings
from taro_lab.schemas.configs import AttackConfig, RunConfig, SyntheticDatasetSpec
from taro_lab.schemas.reports import Checkpoint
from taro_lab.services.data_service import Dataset, generate_clusters, load_dataset, save_dataset
from taro_lab.services.evaluation_service import analyze_targets, evaluate_run, transfer_evaluation
from taro_lab.services.persistence import (
    MetricsWriter,
    dump_json,
    export_embeddings,
    load_checkpoint,
    net_from_checkpoint,
    save_checkpoint,
    write_rows_csv,
)
from taro_lab.services.theory_service import (
    DEFAULT_GRID_N,
    render_table,
    theorem1_experiment,
    theorem2_experiment,
)
from taro_lab.services.training_service import (
    AdversarialTrainer,
    TrainingState,
    load_run_dataset,
    resolve_attacks,
)
from taro_lab.utils.error_handler import EXIT_OK
from taro_lab.utils.seeding import stream

logger = logging.getLogger(__name__)


def _emit(payload: Dict):
    print(json.dumps(payload, indent=2))


def _read_config(path: str) -> RunConfig:
    return RunConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _restore(checkpoint_path: str, data_dir: str):
    checkpoint = load_checkpoint(checkpoint_path)
    net = net_from_checkpoint(checkpoint).without_head()
    dataset = load_dataset(data_dir, net.input_dim)
    return checkpoint, net, dataset


def cmd_gen_data(args) -> int:
    """Generate a synthetic dataset directory from a spec file"""
    spec = SyntheticDatasetSpec.model_validate_json(Path(args.spec).read_text(encoding="utf-8"))
    save_dataset(generate_clusters(spec), args.out)
    logger.info(f"Dataset written to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    """Train, writing checkpoint.json, metrics.jsonl and summary.json into --out"""
    config = _read_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / settings.CHECKPOINT_FILENAME

    resume: Optional[Checkpoint] = load_checkpoint(args.resume) if args.resume else None
    dataset = load_run_dataset(config)
    metrics_file = MetricsWriter(out_dir / settings.METRICS_FILENAME, resume.epoch_records if resume else None)

    def on_epoch(state: TrainingState):
        metrics_file.write(state.records[-1])
        _save_state(state, config, checkpoint_path)

    trainer = AdversarialTrainer(config, dataset.train.features)
    state = trainer.fit(resume=resume, on_epoch=on_epoch)
    if state.epoch == (resume.epoch if resume else 0):
        _save_state(state, config, checkpoint_path)

    evaluation = evaluate_run(state.net, dataset, config)
    summary = {
        "config": config.model_dump(mode="json"),
        "epochs": state.epoch,
        "epoch_losses": [r.loss for r in state.records],
        "clean_acc": evaluation.clean_acc,
        "robust_acc": evaluation.robust_acc,
    }
    dump_json(summary, out_dir / settings.SUMMARY_FILENAME)
    logger.info(
        f"Training finished after {state.epoch} epochs in {state.wall_time:.1f}s: "
        f"clean {evaluation.clean_acc:.2f}%, robust {evaluation.robust_acc:.2f}%"
    )
    return EXIT_OK


def _save_state(state: TrainingState, config: RunConfig, path: Path):
    save_checkpoint(
        state.net, config, path,
        epoch=state.epoch,
        optimizer_state=state.optimizer_state,
        seed_state=state.rng_state,
        epoch_records=state.records,
    )


def _eval_attack(config: RunConfig, dataset: Dataset, eps: Optional[float], steps: Optional[int]) -> AttackConfig:
    _, attack = resolve_attacks(config, dataset.train.features)
    if eps is not None:
        attack = AttackConfig.for_evaluation(eps)
    if steps is not None:
        attack = AttackConfig(**{**attack.model_dump(), "steps": steps})
    return attack


def cmd_eval(args) -> int:
    """Linear (or robust linear) evaluation; prints Metrics JSON"""
    checkpoint, net, dataset = _restore(args.checkpoint, args.data)
    attack = _eval_attack(checkpoint.config, dataset, args.eps, args.steps)
    metrics = evaluate_run(net, dataset, checkpoint.config, robust_head=args.robust_head, eval_attack=attack)
    _emit(metrics.to_file_dict())
    return EXIT_OK


def cmd_transfer(args) -> int:
    """Evaluate a pretrained encoder on another dataset; prints TransferReport JSON"""
    checkpoint, net, dataset = _restore(args.checkpoint, args.data)
    train_attack, eval_attack = resolve_attacks(checkpoint.config, dataset.train.features)
    report = transfer_evaluation(
        net, dataset, train_attack, eval_attack, checkpoint.config.probe, checkpoint.config.seed
    )
    _emit({"linear": report.linear.to_file_dict(), "robust_linear": report.robust_linear.to_file_dict()})
    return EXIT_OK


def cmd_analyze_targets(args) -> int:
    """Write the per-class target histogram as CSV; prints the report JSON"""
    checkpoint, net, dataset = _restore(args.checkpoint, args.data)
    report = analyze_targets(net, dataset.train, checkpoint.config)
    rows = []
    for base in range(report.n_classes):
        for target in range(report.n_classes):
            rows.append([
                base,
                target,
                report.counts[base][target],
                repr(report.mean_probability[base][target]),
                repr(report.base_confusion[base][target]),
                int(target in report.top_confused[base]),
            ])
    write_rows_csv(
        args.out,
        ["base_class", "target_class", "count", "mean_target_probability", "base_probability", "top_confused"],
        rows,
    )
    _emit(report.model_dump(mode="json"))
    return EXIT_OK


def cmd_theory(args) -> int:
    """Run a perturbation-range ensemble; writes JSON and prints a table"""
    experiment = theorem1_experiment if args.which == 1 else theorem2_experiment
    summary = experiment(args.ensemble, args.dim, args.eps, args.seed, args.grid_n)
    dump_json(summary, args.out)
    print(render_table(summary))
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    """Write clean and adversarial encoder features as CSV"""
    checkpoint, net, dataset = _restore(args.checkpoint, args.data)
    split = dataset.test if args.split == "test" else dataset.train
    train_attack, _ = resolve_attacks(checkpoint.config, dataset.train.features)
    export_embeddings(
        net, split, args.out, train_attack,
        attack=args.attack,
        score_config=checkpoint.config.score.model_copy(update={"exclusion": "same_batch"}),
        rng=stream(checkpoint.config.seed, "export"),
    )
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "analyze-targets": cmd_analyze_targets,
    "theory": cmd_theory,
    "export-embeddings": cmd_export_embeddings,
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command"""
    parser = argparse.ArgumentParser(
        prog="taro-lab",
        description="Targeted adversarial attacks for robust self-supervised learning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic cluster dataset")
    gen.add_argument("--spec", required=True, help="SyntheticDatasetSpec JSON file")
    gen.add_argument("--out", required=True, help="output data directory")

    train = sub.add_parser("train", help="adversarial self-supervised pretraining")
    train.add_argument("--config", required=True, help="RunConfig JSON file")
    train.add_argument("--out", required=True, help="output run directory")
    train.add_argument("--resume", default=None, help="checkpoint to continue from")

    ev = sub.add_parser("eval", help="linear / robust linear evaluation")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="data directory")
    ev.add_argument("--robust-head", action="store_true", help="train the probe on PGD examples")
    ev.add_argument("--eps", type=float, default=None, help="evaluation epsilon")
    ev.add_argument("--steps", type=int, default=None, help="evaluation PGD steps")

    transfer = sub.add_parser("transfer", help="evaluate a pretrained encoder on new data")
    transfer.add_argument("--checkpoint", required=True)
    transfer.add_argument("--data", required=True)

    analyze = sub.add_parser("analyze-targets", help="class histogram of selected targets")
    analyze.add_argument("--checkpoint", required=True)
    analyze.add_argument("--data", required=True)
    analyze.add_argument("--out", required=True, help="output CSV")

    theory = sub.add_parser("theory", help="perturbation-range experiment on linear models")
    theory.add_argument("--which", type=int, choices=(1, 2), required=True)
    theory.add_argument("--ensemble", type=int, default=500)
    theory.add_argument("--dim", type=int, default=2)
    theory.add_argument("--eps", type=float, default=0.5)
    theory.add_argument("--seed", type=int, default=0)
    theory.add_argument("--grid-n", type=int, default=DEFAULT_GRID_N)
    theory.add_argument("--out", required=True, help="output JSON report")

    export = sub.add_parser("export-embeddings", help="clean and adversarial encoder features")
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--data", required=True)
    export.add_argument("--out", required=True, help="output CSV")
    export.add_argument("--attack", choices=("untargeted", "targeted"), default="targeted")
    export.add_argument("--split", choices=("train", "test"), default="test")

    return parser


def run_command(args: argparse.Namespace) -> int:
    return COMMANDS[args.command](args)
