"""
Perturbation-range experiments on linear models with brute-force maximizers

For f(x) = w.x every objective below is piecewise linear (or quadratic) in
the perturbation, so exhaustive grids over the l-infinity ball (small d)
or corner enumeration plus random samples (larger d) recover the maxima.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from taro_lab.schemas.reports import EnsembleSummary, ObjectiveResult, RangeReport
from taro_lab.utils.error_handler import ConfigError
from taro_lab.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], np.ndarray]

EXHAUSTIVE_MAX_DIM = 4
DEFAULT_GRID_N = 41
RANDOM_SAMPLES = 10_000
CORNER_LIMIT = 4096
MIN_ENSEMBLE = 100
# Comparison slack for grid-evaluated objective values
TOLERANCE = 1e-12


@dataclass(frozen=True)
class LinearProblem:
    """
    Linear binary model f(x) = w.x with base, negative and target points

    The target lies outside the epsilon ball around x.
    """
    w: np.ndarray
    x: np.ndarray
    x_neg: np.ndarray
    x_target: np.ndarray
    epsilon: float

    def __post_init__(self):
        for name in ("w", "x", "x_neg", "x_target"):
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.ndim != 1 or not np.all(np.isfinite(value)):
                raise ConfigError(f"{name} must be a finite vector")
            object.__setattr__(self, name, value)
        if not (self.w.shape == self.x.shape == self.x_neg.shape == self.x_target.shape):
            raise ConfigError("w, x, x_neg and x_target must share one dimension")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if np.max(np.abs(self.x_target - self.x)) <= self.epsilon:
            raise ConfigError("x_target must lie outside the epsilon ball around x")

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def f(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) @ self.w

    def satisfies_target_premise(self) -> bool:
        """|f(x') - f(x)| > 2 eps ||w||_1, so every ball point stays closer to x than to x'"""
        gap = abs(float(self.f(self.x_target) - self.f(self.x)))
        return gap > 2.0 * self.epsilon * float(np.sum(np.abs(self.w)))


# Objectives; every closure maps deltas [..., d] to values [...]

def objective_ss(problem: LinearProblem) -> Objective:
    """|f(x) - f(x + delta)|"""
    def fn(delta):
        return np.abs(np.asarray(delta) @ problem.w)
    return fn


def objective_ntxent(problem: LinearProblem) -> Objective:
    """|f(x) - f(x + delta)| - |f(x_neg) - f(x + delta)|"""
    offset = float(problem.f(problem.x_neg) - problem.f(problem.x))

    def fn(delta):
        shift = np.asarray(delta) @ problem.w
        return np.abs(shift) - np.abs(offset - shift)
    return fn


def objective_targeted(problem: LinearProblem) -> Objective:
    """|f(x + delta) - f(x_target)|"""
    offset = float(problem.f(problem.x) - problem.f(problem.x_target))

    def fn(delta):
        return np.abs(offset + np.asarray(delta) @ problem.w)
    return fn


def range_ss(problem: LinearProblem) -> Objective:
    """|f(x) - f(x + delta)|^2"""
    base = objective_ss(problem)
    return lambda delta: base(delta) ** 2


def range_ntxent(problem: LinearProblem) -> Objective:
    """|f(x) - f(x + delta)|^2 + |f(x_neg) - f(x + delta)|^2"""
    offset = float(problem.f(problem.x_neg) - problem.f(problem.x))

    def fn(delta):
        shift = np.asarray(delta) @ problem.w
        return shift ** 2 + (offset - shift) ** 2
    return fn


def range_targeted(problem: LinearProblem) -> Objective:
    """|f(x + delta) - f(x_target)|^2"""
    base = objective_targeted(problem)
    return lambda delta: base(delta) ** 2


OBJECTIVES: Dict[str, Tuple[Callable[[LinearProblem], Objective], Callable[[LinearProblem], Objective]]] = {
    "ss": (objective_ss, range_ss),
    "ntxent": (objective_ntxent, range_ntxent),
    "targeted": (objective_targeted, range_targeted),
}
COMPARED = {1: ("ntxent", "ss"), 2: ("targeted", "ss")}


def _candidates(
    epsilon: float,
    dim: int,
    grid_n: int,
    rng: np.random.Generator,
    random_samples: int
) -> Iterator[np.ndarray]:
    """Origin first, then the grid in lexicographic order (or corners + samples)"""
    yield np.zeros((1, dim))
    if dim <= EXHAUSTIVE_MAX_DIM:
        axis = np.linspace(-epsilon, epsilon, grid_n)
        if dim == 1:
            yield axis[:, None]
            return
        rest = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
        for value in axis:
            yield np.column_stack([np.full(len(rest), value), rest])
        return

    if 2 ** dim <= CORNER_LIMIT:
        yield np.asarray(list(itertools.product((-epsilon, epsilon), repeat=dim)))
    else:
        yield rng.choice(np.array([-epsilon, epsilon]), size=(CORNER_LIMIT, dim))
    yield rng.uniform(-epsilon, epsilon, size=(random_samples, dim))


def brute_force_max(
    objective: Objective,
    epsilon: float,
    dim: int,
    grid_n: int = DEFAULT_GRID_N,
    rng: Optional[np.random.Generator] = None,
    random_samples: int = RANDOM_SAMPLES
) -> Tuple[np.ndarray, float]:
    """
    Maximize an objective over a discretized l-infinity ball

    Candidates are delta = 0, then for dim <= 4 the full grid of grid_n
    values per axis in lexicographic order, otherwise every sign corner
    (or a random subset of them) plus uniform samples. The first
    candidate attaining the maximum wins.

    Args:
        objective: Vectorized map from deltas [N x d] to values [N]
        epsilon: Ball radius
        dim: Dimension of delta
        grid_n: Grid points per axis
        rng: Generator for the sampled regime
        random_samples: Uniform samples when dim > 4

    Returns:
        (delta*, objective value)
    """
    if epsilon < 0 or dim < 1 or grid_n < 2:
        raise ConfigError("brute force needs epsilon >= 0, dim >= 1 and grid_n >= 2")
    rng = rng if rng is not None else np.random.default_rng(0)

    best_delta, best_value = None, -np.inf
    for block in _candidates(epsilon, dim, grid_n, rng, random_samples):
        values = np.broadcast_to(np.asarray(objective(block), dtype=np.float64), (len(block),))
        i = int(np.argmax(values))
        if best_delta is None or values[i] > best_value:
            best_delta, best_value = block[i].copy(), float(values[i])
    return best_delta, best_value


def random_problem(dim: int, epsilon: float, rng: np.random.Generator) -> Tuple[LinearProblem, int]:
    """
    Draw a problem satisfying the target premise

    w, x, x_neg and a target direction are unit Gaussians; the direction is
    stretched until ||x' - x||_inf > eps and |f(x') - f(x)| > 2 eps ||w||_1
    hold with margin. Draws whose direction is (nearly) orthogonal to w
    are redrawn.

    Returns:
        (problem, number of redraws)
    """
    redraws = 0
    while True:
        w, x, x_neg, direction = (rng.normal(size=dim) for _ in range(4))
        gap = float(direction @ w)
        peak = float(np.max(np.abs(direction)))
        if abs(gap) > 1e-9 and peak > 0:
            needed = max(2.0 * epsilon * float(np.sum(np.abs(w))) / abs(gap), epsilon / peak)
            problem = LinearProblem(w, x, x_neg, x + max(1.0, 1.5 * needed) * direction, epsilon)
            if problem.satisfies_target_premise():
                return problem, redraws
        redraws += 1


def solve_instance(problem: LinearProblem, names: Tuple[str, str], grid_n: int, rng: np.random.Generator,
                   index: int = 0) -> RangeReport:
    """Brute-force optima of the compared objectives for one problem"""
    results: Dict[str, ObjectiveResult] = {}
    for name in names:
        objective, range_form = OBJECTIVES[name]
        delta, value = brute_force_max(objective(problem), problem.epsilon, problem.dim, grid_n, rng)
        _, range_value = brute_force_max(range_form(problem), problem.epsilon, problem.dim, grid_n, rng)
        results[name] = ObjectiveResult(
            value=value,
            range_value=range_value,
            displacement=abs(float(delta @ problem.w)),
            delta=delta.tolist(),
            delta_linf=float(np.max(np.abs(delta))),
        )

    pointwise = None
    if "targeted" in names:
        delta_ss = np.asarray(results["ss"].delta)
        moved = abs(float(delta_ss @ problem.w))
        to_target = abs(float(problem.f(problem.x + delta_ss) - problem.f(problem.x_target)))
        pointwise = moved < to_target
    return RangeReport(index=index, objectives=results, pointwise_inequality=pointwise)


def direction_diversity(deltas: List[List[float]]) -> float:
    """1 - length of the mean unit direction (0: all optima point the same way)"""
    units = []
    for delta in deltas:
        delta = np.asarray(delta)
        norm = np.linalg.norm(delta)
        if norm > 0:
            units.append(delta / norm)
    if not units:
        return 0.0
    return float(1.0 - np.linalg.norm(np.mean(units, axis=0)))


def _run_experiment(
    theorem: int,
    ensemble_size: int,
    dim: int,
    epsilon: float,
    seed: int,
    grid_n: int
) -> EnsembleSummary:
    if ensemble_size < MIN_ENSEMBLE:
        raise ConfigError(f"ensemble_size must be at least {MIN_ENSEMBLE}, got {ensemble_size}")
    if dim < 1 or not epsilon > 0:
        raise ConfigError("dim must be >= 1 and epsilon > 0")
    names = COMPARED[theorem]
    children = np.random.SeedSequence(seed).spawn(ensemble_size)

    def run(index: int) -> Tuple[RangeReport, int]:
        rng = np.random.default_rng(children[index])
        problem, redraws = random_problem(dim, epsilon, rng)
        return solve_instance(problem, names, grid_n, rng, index), redraws

    outcomes = ordered_map(run, range(ensemble_size))
    instances = [report for report, _ in outcomes]
    regenerated = sum(redraws for _, redraws in outcomes)

    big, small = names

    def column(name: str, key: str) -> np.ndarray:
        return np.array([getattr(r.objectives[name], key) for r in instances])

    linf = {name: column(name, "delta_linf") for name in names}
    summary = EnsembleSummary(
        theorem=theorem,
        compared=list(names),
        ensemble_size=ensemble_size,
        dim=dim,
        epsilon=epsilon,
        seed=seed,
        grid_n=grid_n,
        fraction_range_ordered=float(np.mean(column(big, "range_value") >= column(small, "range_value") - TOLERANCE)),
        fraction_objective_ordered=float(np.mean(column(big, "value") >= column(small, "value") - TOLERANCE)),
        fraction_linf_strict=float(np.mean(linf[big] > linf[small] + TOLERANCE)),
        linf_ordering_degenerate=bool(all(np.all(np.abs(linf[n] - epsilon) <= TOLERANCE) for n in names)),
        mean_value={n: float(np.mean(column(n, "value"))) for n in names},
        mean_range_value={n: float(np.mean(column(n, "range_value"))) for n in names},
        mean_displacement={n: float(np.mean(column(n, "displacement"))) for n in names},
        mean_linf={n: float(np.mean(linf[n])) for n in names},
        direction_diversity={n: direction_diversity([r.objectives[n].delta for r in instances]) for n in names},
        pointwise_inequality_rate=(
            float(np.mean([r.pointwise_inequality for r in instances])) if theorem == 2 else None
        ),
        regenerated=regenerated,
        instances=instances,
    )
    logger.info(
        f"Theorem {theorem} ensemble ({ensemble_size} x d={dim}, eps={epsilon}): "
        f"range ordered {summary.fraction_range_ordered:.3f}, "
        f"objective ordered {summary.fraction_objective_ordered:.3f}"
    )
    return summary


def theorem1_experiment(
    ensemble_size: int,
    dim: int,
    epsilon: float,
    seed: int,
    grid_n: int = DEFAULT_GRID_N
) -> EnsembleSummary:
    """
    Compare nt-xent and positive-pair perturbation ranges

    Reports the share of instances where the nt-xent range (squared form)
    and the literal nt-xent objective reach at least the ss values.
    """
    return _run_experiment(1, ensemble_size, dim, epsilon, seed, grid_n)


def theorem2_experiment(
    ensemble_size: int,
    dim: int,
    epsilon: float,
    seed: int,
    grid_n: int = DEFAULT_GRID_N
) -> EnsembleSummary:
    """
    Compare targeted and positive-pair perturbation ranges

    Also checks |f(x) - f(x+d)| < |f(x') - f(x+d)| at the ss optimum of every
    instance.
    """
    return _run_experiment(2, ensemble_size, dim, epsilon, seed, grid_n)


def render_table(summary: EnsembleSummary) -> str:
    """Human-readable summary of an ensemble run"""
    big, small = summary.compared
    lines = [
        f"Theorem {summary.theorem}: {big} vs {small} "
        f"(n={summary.ensemble_size}, d={summary.dim}, eps={summary.epsilon}, seed={summary.seed})",
        f"{'quantity':<28}{big:>14}{small:>14}",
    ]
    for label, values in (
        ("mean objective", summary.mean_value),
        ("mean range (squared)", summary.mean_range_value),
        ("mean displacement", summary.mean_displacement),
        ("mean ||delta*||_inf", summary.mean_linf),
        ("direction diversity", summary.direction_diversity),
    ):
        lines.append(f"{label:<28}{values[big]:>14.6f}{values[small]:>14.6f}")
    lines.append(f"{'range ordered':<28}{summary.fraction_range_ordered:>14.3f}")
    lines.append(f"{'objective ordered':<28}{summary.fraction_objective_ordered:>14.3f}")
    lines.append(f"{'linf strictly larger':<28}{summary.fraction_linf_strict:>14.3f}")
    lines.append(f"{'linf ordering degenerate':<28}{str(summary.linf_ordering_degenerate):>14}")
    if summary.pointwise_inequality_rate is not None:
        lines.append(f"{'pointwise inequality':<28}{summary.pointwise_inequality_rate:>14.3f}")
    lines.append(f"{'regenerated':<28}{summary.regenerated:>14d}")
    return "\n".join(lines)
