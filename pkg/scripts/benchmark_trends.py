"""
Desk-scale trend benchmark for taro-lab

Trains untargeted, random-target and TARO encoders on the synthetic
benchmark for several seeds and checks the directional trends:
- random targets beat untargeted attacks (robust and clean accuracy)
- score-based targets are at least as good as random targets
- TARO encoders transfer more robustly to a shifted dataset
- selected targets fall into the probe's most-confused classes

Writes a JSON report and prints a pass/fail table.
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Tuple

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

import numpy as np

from taro_lab.schemas.configs import RunConfig
from taro_lab.services.data_service import generate_clusters
from taro_lab.services.evaluation_service import analyze_targets, evaluate_run, transfer_evaluation
from taro_lab.services.persistence import dump_json
from taro_lab.services.training_service import representation_spread, resolve_attacks, train_model
from taro_lab.utils.parallel import ordered_map

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ATTACK_MODES = ("untargeted", "random_target", "taro_target")
BENCHMARK_CONFIG = os.path.join(ROOT, "configs", "benchmark.json")
TRANSFER_SHIFT = 1.0
TRANSFER_SEED_OFFSET = 1000


def run_seed(base: RunConfig, attack_mode: str, seed: int) -> Dict:
    """Train one encoder and collect in-domain, transfer and target statistics"""
    config = base.model_copy(update={"attack_mode": attack_mode, "seed": seed})
    dataset = generate_clusters(config.dataset)
    net, metrics = train_model(config, dataset)
    evaluation = evaluate_run(net, dataset, config)

    shifted_spec = config.dataset.model_copy(
        update={"seed": config.dataset.seed + TRANSFER_SEED_OFFSET, "shift": TRANSFER_SHIFT}
    )
    shifted = generate_clusters(shifted_spec)
    train_attack, eval_attack = resolve_attacks(config, shifted.train.features)
    transfer = transfer_evaluation(net, shifted, train_attack, eval_attack, config.probe, seed)

    result = {
        "attack_mode": attack_mode,
        "seed": seed,
        "clean_acc": evaluation.clean_acc,
        "robust_acc": evaluation.robust_acc,
        "transfer_robust_acc": transfer.robust_linear.robust_acc,
        "spread": representation_spread(net, dataset.train.features),
        "epoch_losses": metrics.epoch_losses,
    }
    if attack_mode == "taro_target":
        result["confused_fraction"] = analyze_targets(net, dataset.test, config).confused_fraction
    logger.info(
        f"{attack_mode} seed {seed}: clean {evaluation.clean_acc:.2f}%, robust {evaluation.robust_acc:.2f}%, "
        f"transfer robust {result['transfer_robust_acc']:.2f}%"
    )
    return result


def mean_of(results: List[Dict], attack_mode: str, key: str) -> float:
    return float(np.mean([r[key] for r in results if r["attack_mode"] == attack_mode]))


def check_trends(results: List[Dict]) -> List[Tuple[str, float, float, bool]]:
    """(criterion, observed, required, passed) rows"""
    robust_gain = mean_of(results, "random_target", "robust_acc") - mean_of(results, "untargeted", "robust_acc")
    clean_gain = mean_of(results, "random_target", "clean_acc") - mean_of(results, "untargeted", "clean_acc")
    score_gain = mean_of(results, "taro_target", "robust_acc") - mean_of(results, "random_target", "robust_acc")
    transfer_gain = (
        mean_of(results, "taro_target", "transfer_robust_acc")
        - mean_of(results, "untargeted", "transfer_robust_acc")
    )
    fractions = np.mean([r["confused_fraction"] for r in results if r["attack_mode"] == "taro_target"], axis=0)
    worst_fraction = float(np.min(fractions))

    return [
        ("random vs untargeted robust gain", robust_gain, 5.0, robust_gain >= 5.0),
        ("random vs untargeted clean gain", clean_gain, 3.0, clean_gain >= 3.0),
        ("score vs random robust gain", score_gain, 0.0, score_gain >= 0.0),
        ("transfer robust gain", transfer_gain, 3.0, transfer_gain >= 3.0),
        ("min confused-class fraction", worst_fraction, 0.3, worst_fraction >= 0.3),
    ]


def render(rows: List[Tuple[str, float, float, bool]]) -> str:
    lines = [f"{'criterion':<36}{'observed':>12}{'required':>12}{'':>8}"]
    for name, observed, required, passed in rows:
        lines.append(f"{name:<36}{observed:>12.3f}{required:>12.3f}{'PASS' if passed else 'FAIL':>8}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Directional trend benchmark")
    parser.add_argument("--config", default=BENCHMARK_CONFIG, help="base RunConfig JSON")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=None, help="override the configured epoch count")
    parser.add_argument("--out", default="benchmark_trends.json")
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as handle:
        base = RunConfig.model_validate_json(handle.read())
    if args.epochs is not None:
        base = base.model_copy(update={"epochs": args.epochs})

    jobs = [(mode, seed) for seed in args.seeds for mode in ATTACK_MODES]
    results = ordered_map(lambda job: run_seed(base, *job), jobs)
    rows = check_trends(results)

    dump_json(
        {
            "config": base.model_dump(mode="json"),
            "runs": results,
            "criteria": [
                {"name": name, "observed": observed, "required": required, "passed": passed}
                for name, observed, required, passed in rows
            ],
        },
        args.out,
    )
    print(render(rows))
    return 0 if all(passed for *_, passed in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
