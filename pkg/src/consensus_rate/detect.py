"""Consensus+innovations distributed detection with Gaussian observations.

Each sensor keeps a running average of log-likelihood ratios, mixed with its
neighbours' through the random averaging matrix at every step, and decides
H1 when its state is positive.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import InvalidInputError
from .graph import Graph
from .simulate import wilson_interval


def llr(y, m: float, sigma2: float):
    """Log-likelihood ratio of N(m, sigma2) against N(0, sigma2)."""
    if sigma2 <= 0:
        raise InvalidInputError("sigma2 must be positive")
    return (m / sigma2) * np.asarray(y, dtype=float) - m * m / (2 * sigma2)


def detector_step(x: np.ndarray, W, L: np.ndarray, k: int) -> np.ndarray:
    """``x_k = W_k ((k-1)/k x_{k-1} + L_k / k)``."""
    if k < 1:
        raise InvalidInputError("step index k starts at 1")
    W = np.asarray(getattr(W, "values", W))
    x, L = np.asarray(x, dtype=float), np.asarray(L, dtype=float)
    if not (W.shape[0] == W.shape[1] == x.shape[-1] == L.shape[-1]):
        raise InvalidInputError("dimension mismatch between W, x and L")
    return W @ ((k - 1) / k * x + L / k)


def unwound_state(Ws: Sequence, Ls: Sequence[np.ndarray]) -> np.ndarray:
    """``x_k = (1/k) sum_t Phi(k, t-1) L_t``, computed directly from the products."""
    Ws = [np.asarray(getattr(W, "values", W)) for W in Ws]
    k = len(Ws)
    n = Ws[0].shape[0]
    x = np.zeros(n)
    tail = np.eye(n)  # Phi(k, t-1) built from the right end backwards
    for t in range(k, 0, -1):
        tail = tail @ Ws[t - 1]
        x += tail @ np.asarray(Ls[t - 1], dtype=float)
    return x / k


def optimality_threshold_gaussian(n: int, m: float, sigma2: float) -> float:
    """Consensus rate above which every sensor matches the centralized error exponent."""
    if sigma2 <= 0:
        raise InvalidInputError("sigma2 must be positive")
    return (n - 1) * n * m * m / (8 * sigma2)


@dataclass(frozen=True)
class DetectionConfig:
    """Link-failure network (Metropolis weights) observing N(m, s2) vs N(0, s2).

    ``link_p`` holds per-edge online probabilities in ``graph.edges`` order.
    ``hypothesis`` selects the truth; ``average_hypotheses`` instead reports
    the mean of the miss and false-alarm probabilities.
    """

    graph: Graph
    link_p: Sequence[float]
    m: float
    sigma2: float
    horizon: int
    trials: int
    seed: int = 0
    hypothesis: str = "H1"
    average_hypotheses: bool = False
    keep_per_sensor: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be positive")
        if self.horizon < 1 or self.trials < 1:
            raise InvalidInputError("horizon and trials must be at least 1")
        if self.hypothesis not in ("H0", "H1"):
            raise InvalidInputError("hypothesis must be 'H0' or 'H1'")
        p = np.asarray(self.link_p, dtype=float)
        if p.shape != (self.graph.m,) or ((p < 0) | (p > 1)).any():
            raise InvalidInputError("link_p needs one probability in [0, 1] per edge")


@dataclass
class DetectionTrace:
    k: np.ndarray
    worst_error: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    per_sensor: np.ndarray | None = None

    def first_k_below(self, level: float) -> int | None:
        hit = np.flatnonzero(self.worst_error <= level)
        return int(self.k[hit[0]]) if hit.size else None


def _error_counts(cfg: DetectionConfig, truth: str, size: int, gen: np.random.Generator) -> np.ndarray:
    """Per-step, per-sensor count of wrong decisions over ``size`` trials."""
    g = cfg.graph
    n, K = g.n, cfg.horizon
    ends = np.array(g.edges, dtype=int).reshape(-1, 2)
    # signed incidence: (y @ D)[e] = y_i - y_j for edge e = (i, j)
    D = np.zeros((n, g.m))
    D[ends[:, 0], np.arange(g.m)] = 1.0
    D[ends[:, 1], np.arange(g.m)] = -1.0
    A = np.abs(D).T
    p = np.asarray(cfg.link_p, dtype=float)
    mean = cfg.m if truth == "H1" else 0.0
    sd = math.sqrt(cfg.sigma2)
    x = np.zeros((size, n))
    errors = np.zeros((K, n), dtype=np.int64)
    for k in range(1, K + 1):
        L = llr(gen.normal(mean, sd, size=(size, n)), cfg.m, cfg.sigma2)
        y = (k - 1) / k * x + L / k
        if g.m:
            on = (gen.random((size, g.m)) < p).astype(float)
            deg = on @ A
            # Metropolis weight on each live link; zero on dead ones
            w = on / (1 + np.maximum(deg[:, ends[:, 0]], deg[:, ends[:, 1]]))
            x = y - (w * (y @ D)) @ D.T
        else:
            x = y
        wrong = x <= 0 if truth == "H1" else x > 0
        errors[k - 1] = wrong.sum(axis=0)
    return errors


def _run_truth(cfg: DetectionConfig, truth: str, key: int) -> np.ndarray:
    sizes = rngmod.chunk_sizes(cfg.trials, 2048)

    def run(c):
        return _error_counts(cfg, truth, sizes[c], rngmod.stream(cfg.seed, key, c))

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]
    return np.sum(parts, axis=0)


def run_detection(cfg: DetectionConfig) -> DetectionTrace:
    """Monte Carlo estimate of ``max_i P(sensor i errs at step k)`` for ``k = 1..horizon``."""
    if cfg.average_hypotheses:
        counts = (_run_truth(cfg, "H1", 1) + _run_truth(cfg, "H0", 0)) / 2.0
    else:
        counts = _run_truth(cfg, cfg.hypothesis, 1 if cfg.hypothesis == "H1" else 0)
    per_sensor = counts / cfg.trials
    worst = per_sensor.argmax(axis=1)
    worst_counts = counts[np.arange(cfg.horizon), worst]
    ci = np.array([wilson_interval(int(round(c)), cfg.trials) for c in worst_counts])
    return DetectionTrace(
        k=np.arange(1, cfg.horizon + 1),
        worst_error=per_sensor.max(axis=1),
        ci_low=ci[:, 0],
        ci_high=ci[:, 1],
        per_sensor=per_sensor if cfg.keep_per_sensor else None,
    )


def single_sensor_error(k: int, m: float, sigma2: float) -> float:
    """Miss probability of an isolated sensor after k samples: ``Q(sqrt(k) m / (2 sigma))``."""
    z = math.sqrt(k) * m / (2 * math.sqrt(sigma2))
    return 0.5 * math.erfc(z / math.sqrt(2))
