"""Generalized simulated annealing over box-constrained continuous variables.

The chain draws candidate steps from the Tsallis heavy-tailed visiting
distribution, cools along the generalized schedule and accepts uphill moves
with the generalized acceptance rule. An optional derivative-free pattern
search refines the incumbent after the chain ends, which suits objectives
that are piecewise constant (the grain-count term of the controller is).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AnnealConfig", "BoxDomain", "AnnealResult", "minimize"]

_TAIL_LIMIT = 1e8


@dataclass(frozen=True)
class AnnealConfig:
    max_iterations: int = 300
    max_evaluations: int = int(1e7)
    initial_temperature: float = 10000.0
    visit_param: float = 2.7        # q_v, heavier tail when larger; (1, 3]
    accept_param: float = -10.0     # q_a, more negative rejects harder; < 1
    seed: int = 0
    local_search: bool = True

    def __post_init__(self):
        if not 1.0 < self.visit_param <= 3.0:
            raise ValueError("visit_param must lie in (1, 3]")
        if self.accept_param >= 1.0:
            raise ValueError("accept_param must be < 1")
        if self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")


@dataclass(frozen=True)
class BoxDomain:
    """Per-dimension (lower, upper) bounds with optional frozen values."""

    lower: np.ndarray
    upper: np.ndarray
    frozen: dict = field(default_factory=dict)   # index -> fixed value

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        for i in self.frozen:
            if not 0 <= i < lo.size:
                raise ValueError(f"frozen index {i} out of range")
        free = [i for i in range(lo.size) if i not in self.frozen]
        if np.any(lo[free] >= hi[free]):
            raise ValueError("lower must be < upper on free dimensions")

    @property
    def dim(self) -> int:
        return self.lower.size

    def free_indices(self) -> np.ndarray:
        return np.array([i for i in range(self.dim) if i not in self.frozen], dtype=int)

    def fill(self, x_free: np.ndarray) -> np.ndarray:
        """Assemble a full vector from free components plus frozen values."""
        x = np.empty(self.dim)
        x[self.free_indices()] = x_free
        for i, v in self.frozen.items():
            x[i] = v
        return x


@dataclass
class AnnealResult:
    best_point: np.ndarray
    best_value: float
    eval_count: int

    def __iter__(self):
        return iter((self.best_point, self.best_value, self.eval_count))


class _VisitSampler:
    """Tsallis visiting-distribution sampler (ratio of deformed Gaussians)."""

    def __init__(self, qv: float, rng: np.random.Generator):
        self.qv = qv
        self.rng = rng
        factor2 = math.exp((4.0 - qv) * math.log(qv - 1.0))
        factor3 = math.exp((2.0 - qv) * math.log(2.0) / (qv - 1.0))
        self._factor4p = math.sqrt(math.pi) * factor2 / (factor3 * (3.0 - qv))
        factor5 = 1.0 / (qv - 1.0) - 0.5
        d1 = 2.0 - factor5
        self._factor6 = (math.pi * (1.0 - factor5)
                         / math.sin(math.pi * (1.0 - factor5))
                         / math.gamma(d1))

    def draw(self, temperature: float, n: int) -> np.ndarray:
        qv = self.qv
        x = self.rng.standard_normal(n)
        y = self.rng.standard_normal(n)
        factor1 = math.exp(math.log(temperature) / (qv - 1.0))
        factor4 = self._factor4p * factor1
        x *= math.exp(-(qv - 1.0) * math.log(self._factor6 / factor4) / (3.0 - qv))
        den = np.exp((qv - 1.0) * np.log(np.abs(y)) / (3.0 - qv))
        step = x / den
        big = np.abs(step) > _TAIL_LIMIT
        if np.any(big):
            step[big] = np.sign(step[big]) * _TAIL_LIMIT * self.rng.uniform(size=int(big.sum()))
        return step


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold points into [lo, hi] by reflection at the walls."""
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lo + y


def _pattern_search(fun, x0, f0, lo, hi, budget, evals):
    """Greedy coordinate search with step halving from the incumbent."""
    x = x0.copy()
    fx = f0
    step = 0.1 * (hi - lo)
    min_step = 1e-9 * (hi - lo)
    n = x.size
    while evals[0] < budget and np.any(step > min_step):
        improved = False
        for k in range(n):
            for sgn in (1.0, -1.0):
                if evals[0] >= budget:
                    break
                trial = x.copy()
                trial[k] = min(max(trial[k] + sgn * step[k], lo[k]), hi[k])
                if trial[k] == x[k]:
                    continue
                ft = fun(trial)
                evals[0] += 1
                if math.isfinite(ft) and ft < fx:
                    x, fx = trial, ft
                    improved = True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def minimize(objective, domain: BoxDomain, config: AnnealConfig = AnnealConfig(),
             callback=None) -> AnnealResult:
    """Minimize a scalar objective over the box with generalized annealing.

    The objective receives the full vector (frozen components included).
    Non-finite objective values reject the candidate but count against the
    evaluation budget. With every dimension frozen, the single admissible
    point is evaluated once and returned. Deterministic for a fixed seed.

    callback, if given, is invoked as callback(x, fx) for every evaluation.
    """
    free = domain.free_indices()
    rng = np.random.default_rng(config.seed)
    evals = [0]

    def fun_free(x_free: np.ndarray) -> float:
        x = domain.fill(x_free)
        v = float(objective(x))
        if callback is not None:
            callback(x, v)
        return v

    if free.size == 0:
        x = domain.fill(np.empty(0))
        v = float(objective(x))
        if callback is not None:
            callback(x, v)
        return AnnealResult(x, v, 1)

    lo = domain.lower[free]
    hi = domain.upper[free]
    qv = config.visit_param
    qa = config.accept_param
    sampler = _VisitSampler(qv, rng)

    x_curr = rng.uniform(lo, hi)
    f_curr = fun_free(x_curr)
    evals[0] += 1
    while not math.isfinite(f_curr) and evals[0] < config.max_evaluations:
        x_curr = rng.uniform(lo, hi)
        f_curr = fun_free(x_curr)
        evals[0] += 1
    x_best, f_best = x_curr.copy(), f_curr

    t1 = 2.0 ** (qv - 1.0) - 1.0
    n = free.size
    stop = False
    for t in range(1, config.max_iterations + 1):
        if stop:
            break
        temperature = config.initial_temperature * t1 / ((1.0 + t) ** (qv - 1.0) - 1.0)
        t_accept = temperature / t
        for j in range(2 * n):
            if evals[0] >= config.max_evaluations:
                stop = True
                break
            if j < n:
                x_new = x_curr + sampler.draw(temperature, n)
            else:
                x_new = x_curr.copy()
                k = j - n
                x_new[k] += sampler.draw(temperature, 1)[0]
            x_new = _reflect(x_new, lo, hi)
            f_new = fun_free(x_new)
            evals[0] += 1
            if not math.isfinite(f_new):
                continue
            de = f_new - f_curr
            if de <= 0.0:
                x_curr, f_curr = x_new, f_new
                if f_new < f_best:
                    x_best, f_best = x_new.copy(), f_new
            else:
                # generalized acceptance: zero probability once the bracket
                # under the (1 - q_a) deformation goes non-positive
                bracket = 1.0 - (1.0 - qa) * de / t_accept
                if bracket > 0.0:
                    p = math.exp(math.log(bracket) / (1.0 - qa))
                    if rng.uniform() <= p:
                        x_curr, f_curr = x_new, f_new

    if config.local_search and evals[0] < config.max_evaluations:
        x_best, f_best = _pattern_search(fun_free, x_best, f_best, lo, hi,
                                         config.max_evaluations, evals)

    return AnnealResult(domain.fill(x_best), f_best, evals[0])
