"""
Named random streams derived from one run seed

Each consumer draws from its own generator so that, e.g., changing the
probe attack never shifts the randomness seen by training.
"""
from typing import Any, Dict

import numpy as np

STREAMS = {
    "init": 0,
    "probe": 1,
    "train": 2,
    "eval_attack": 3,
    "probe_attack": 4,
    "analysis": 5,
    "export": 6,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for one named stream of a run"""
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    return np.random.default_rng([seed, STREAMS[name]])


def generator_state(rng: np.random.Generator) -> Dict[str, Any]:
    return rng.bit_generator.state


def restore_generator(state: Dict[str, Any]) -> np.random.Generator:
    """Rebuild a PCG64 generator from a saved state dict"""
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng
