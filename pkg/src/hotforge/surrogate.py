"""Surrogate network mapping surface-temperature history to microstructure fields.

Input is the last three surface contours (31 channels x 3 time steps) plus a
9-wide strategy vector. Three Conv1D layers mix the contour channels along
the time axis, a GRU reads the 32 resulting channels as a sequence of
3-vectors, and a four-layer MLP head reconstructs the six 21 x 11 fields.
Output values are clamped to the normalized [0, 1] range.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import neuro
from .core import DEFAULT_CONSTANTS, FIELD_NAMES, NormalizationConstants

__all__ = [
    "SurrogateModel", "EvalReport", "ModelFormatError",
    "evaluate", "save_model", "load_model",
]

CONTOUR_LEN = 31
HISTORY_LEN = 3
STRATEGY_LEN = 9
FLAT_GRU = 512          # 32 channels x 16 hidden states
CONCAT_WIDTH = 521      # FLAT_GRU + STRATEGY_LEN
OUTPUT_WIDTH = 1386     # 6 x 21 x 11
MODEL_FORMAT_VERSION = 1
INIT_DESCRIPTOR = "xavier-uniform linear/conv, fan-scaled uniform gru, final bias 0.5"


class ModelFormatError(ValueError):
    """Model file rejected: bad version, header or parameter blob."""


class SurrogateModel:
    """Conv/GRU/MLP surrogate with explicit forward and backward chains."""

    def __init__(self, seed: int | None = 0):
        rng = None if seed is None else np.random.default_rng(seed)
        self.seed = seed
        self.conv = [
            neuro.Conv1D(CONTOUR_LEN, 8, rng=rng),
            neuro.Conv1D(8, 16, rng=rng),
            neuro.Conv1D(16, 32, rng=rng),
        ]
        self.gru = neuro.GRU(3, 16, rng=rng)
        self.head = [
            neuro.Linear(CONCAT_WIDTH, 1024, rng=rng),
            neuro.Linear(1024, 512, rng=rng),
            neuro.Linear(512, 1024, rng=rng),
            neuro.Linear(1024, OUTPUT_WIDTH, rng=rng),
        ]
        if rng is not None:
            # keep initial outputs inside the clamp window
            self.head[-1].b[:] = 0.5
        self.dropout = neuro.Dropout(0.1)
        self.relu = neuro.ReLU()
        assert self.head[0].n_in == FLAT_GRU + STRATEGY_LEN == CONCAT_WIDTH
        assert self.head[-1].n_out == OUTPUT_WIDTH
        self._layers = self.conv + [self.gru] + self.head

    # -- engine protocol ----------------------------------------------------

    def forward(self, inputs: tuple, mode: str = "eval", rng=None) -> np.ndarray:
        contours, strategy = inputs
        contours = np.asarray(contours, dtype=float)
        strategy = np.asarray(strategy, dtype=float)
        if contours.ndim != 3 or contours.shape[1:] != (CONTOUR_LEN, HISTORY_LEN):
            raise neuro.ShapeError(f"contours must be (batch, {CONTOUR_LEN}, {HISTORY_LEN}),"
                                   f" got {contours.shape}")
        if strategy.ndim != 2 or strategy.shape[1] != STRATEGY_LEN:
            raise neuro.ShapeError(f"strategy must be (batch, {STRATEGY_LEN}), got {strategy.shape}")
        self._cache = []
        x = contours
        for conv in self.conv:
            x, c = conv.forward(x, mode, rng)
            x, cr = self.relu.forward(x, mode, rng)
            self._cache.append((c, cr))
        g, c_gru = self.gru.forward(x, mode, rng)        # (batch, 32, 16)
        self._cache.append(c_gru)
        flat = g.reshape(g.shape[0], FLAT_GRU)
        x = np.concatenate([flat, strategy], axis=1)
        for k, lin in enumerate(self.head):
            x, c = lin.forward(x, mode, rng)
            if k < len(self.head) - 1:
                x, cr = self.relu.forward(x, mode, rng)
                x, cd = self.dropout.forward(x, mode, rng)
                self._cache.append((c, cr, cd))
            else:
                self._cache.append((c, None, None))
        self._pre_clamp = x
        return np.clip(x, 0.0, 1.0)

    def backward(self, dloss: np.ndarray) -> None:
        # clamp passes gradient only where the pre-clamp value was interior
        pre = self._pre_clamp
        dy = dloss * ((pre > 0.0) & (pre < 1.0))
        for k in range(len(self.head) - 1, -1, -1):
            c, cr, cd = self._cache.pop()
            if k < len(self.head) - 1:
                dy = self.dropout.backward(dy, cd)
                dy = self.relu.backward(dy, cr)
            dy = self.head[k].backward(dy, c)
        dflat = dy[:, :FLAT_GRU]
        dg = dflat.reshape(dflat.shape[0], 32, 16)
        c_gru = self._cache.pop()
        dx = self.gru.backward(dg, c_gru)
        for conv in reversed(self.conv):
            c, cr = self._cache.pop()
            dx = self.relu.backward(dx, cr)
            dx = conv.backward(dx, c)

    def zero_grads(self) -> None:
        for layer in self._layers:
            layer.zero_grads()

    def parameter_arrays(self) -> list:
        return [p for layer in self._layers for _, p in layer.params()]

    def gradient_arrays(self) -> list:
        return [g for layer in self._layers for g in layer.grads()]

    def layer_specs(self) -> list:
        return [layer.spec() for layer in self._layers]

    # -- prediction ----------------------------------------------------------

    def predict(self, contours: np.ndarray, strategy: np.ndarray) -> np.ndarray:
        """Deterministic single-sample prediction as a (6, 21, 11) tensor."""
        contours = np.asarray(contours, dtype=float)
        if contours.shape == (HISTORY_LEN, CONTOUR_LEN):
            contours = contours.T
        if contours.shape != (CONTOUR_LEN, HISTORY_LEN):
            raise neuro.ShapeError(f"contours must be ({CONTOUR_LEN}, {HISTORY_LEN})"
                                   f" or ({HISTORY_LEN}, {CONTOUR_LEN}), got {contours.shape}")
        out = self.forward((contours[None], np.asarray(strategy, dtype=float)[None]), mode="eval")
        return out[0].reshape(6, 21, 11)


# ---------------------------------------------------------------------------
# evaluation report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-field absolute errors in physical units and as percent of range."""

    mae: dict = field(default_factory=dict)          # field -> (mean, std)
    mae_percent: dict = field(default_factory=dict)  # field -> (mean, std)
    latency_ms: dict = field(default_factory=dict)   # {mean, median, p95}
    n_pairs: int = 0

    def as_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "mae": {k: list(v) for k, v in self.mae.items()},
            "mae_percent": {k: list(v) for k, v in self.mae_percent.items()},
            "latency_ms": self.latency_ms,
        }

    def table(self) -> str:
        lines = [f"{'field':<13}{'MAE':>16}{'MAE % of range':>20}"]
        for name in FIELD_NAMES:
            m, s = self.mae[name]
            mp, sp = self.mae_percent[name]
            lines.append(f"{name:<13}{m:>10.4g} ±{s:<6.3g}{mp:>12.2f} ±{sp:<6.2f}")
        if self.latency_ms:
            lines.append(f"latency/predict: median {self.latency_ms['median']:.3f} ms,"
                         f" p95 {self.latency_ms['p95']:.3f} ms")
        return "\n".join(lines)


def evaluate(model: SurrogateModel, contours: np.ndarray, strategy: np.ndarray,
             targets: np.ndarray, constants: NormalizationConstants = DEFAULT_CONSTANTS,
             time_predictions: bool = True) -> EvalReport:
    """Per-field MAE over a split, denormalized to physical units.

    Means and standard deviations are taken across pairs of the per-pair
    node-averaged absolute error, with the percent twin relative to each
    field's normalization range.
    """
    n = targets.shape[0]
    if n == 0:
        raise ValueError("empty evaluation split")
    report = EvalReport(n_pairs=n)
    preds = model.forward((contours, strategy), mode="eval")
    err = np.abs(preds - targets).reshape(n, 6, 21, 11)
    per_pair = err.mean(axis=(2, 3))                 # (n, 6) in normalized units
    for k, name in enumerate(FIELD_NAMES):
        span = constants.span(name)
        phys = per_pair[:, k] * span
        report.mae[name] = (float(phys.mean()), float(phys.std()))
        pct = per_pair[:, k] * 100.0
        report.mae_percent[name] = (float(pct.mean()), float(pct.std()))
    if time_predictions:
        reps = min(n, 200)
        times = np.empty(reps)
        for i in range(reps):
            t0 = time.perf_counter()
            model.predict(contours[i], strategy[i])
            times[i] = (time.perf_counter() - t0) * 1e3
        report.latency_ms = {"mean": float(times.mean()),
                             "median": float(np.median(times)),
                             "p95": float(np.percentile(times, 95))}
    return report


# ---------------------------------------------------------------------------
# persistence: one JSON header line followed by a little-endian f32 blob
# ---------------------------------------------------------------------------

def save_model(model: SurrogateModel, path) -> None:
    params = model.parameter_arrays()
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "layers": model.layer_specs(),
        "init": INIT_DESCRIPTOR,
        "seed": model.seed,
        "param_count": int(sum(p.size for p in params)),
        "dtype": "<f4",
    }
    blob = np.concatenate([p.reshape(-1) for p in params]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob.tobytes())


def load_model(path) -> SurrogateModel:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from exc
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version "
                               f"{header.get('format_version')!r}, expected {MODEL_FORMAT_VERSION}")
    model = SurrogateModel(seed=header.get("seed"))
    params = model.parameter_arrays()
    expected = sum(p.size for p in params)
    if header.get("param_count") != expected:
        raise ModelFormatError(f"header declares {header.get('param_count')} parameters,"
                               f" model needs {expected}")
    values = np.frombuffer(blob, dtype="<f4")
    if values.size != expected:
        raise ModelFormatError(f"parameter blob holds {values.size} values, expected {expected}")
    offset = 0
    for p in params:
        p[...] = values[offset:offset + p.size].reshape(p.shape).astype(np.float64)
        offset += p.size
    return model
