"""Training-set generation: sample strategies, drive the oracle, persist pairs.

Each simulated run yields 8 input-output pairs (one per snapshot). A pair
holds the three preceding surface contours (zero-filled when absent), a
3 x 3 block of transition descriptors and the normalized target tensor.
Storage is a JSON manifest plus one flat little-endian float32 binary with
fixed-length records, so readers never hard-code offsets.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from .core import (DEFAULT_CONSTANTS, NormalizationConstants, WorkpieceState,
                   extract_contour, state_to_tensor)
from .procsim import (DEFAULT_PARAMS, ForgingStrategy, MaterialParams,
                      STRATEGY_BOUNDS, phase_sequence, run_process)

__all__ = [
    "TrainingPair", "DatasetManifest", "Dataset", "DataFormatError",
    "sample_strategy", "transition_triplets", "build_pairs", "pack_records",
    "generate", "load_dataset",
    "RECORD_FLOATS", "CONTOUR_BLOCK", "STRATEGY_BLOCK", "TARGET_BLOCK",
]

FORMAT_VERSION = 1
CONTOUR_BLOCK = (0, 93)        # 3 time steps x 31 contour values
STRATEGY_BLOCK = (93, 102)     # 3 transition triplets
TARGET_BLOCK = (102, 1488)     # 6 x 21 x 11 normalized fields
RECORD_FLOATS = 1488
PAIRS_PER_RUN = 8

# transition-descriptor event flags
FLAG_PADDING = 0.0
FLAG_IDLE = 0.5
FLAG_STROKE = 1.0
_IDLE_SCALE = 60.0             # seconds; the upper wait-time limit


class DataFormatError(ValueError):
    """Dataset files inconsistent with their manifest."""


@dataclass
class TrainingPair:
    contours: np.ndarray       # (3, 31), slots t-3, t-2, t-1
    strategy_vec: np.ndarray   # (3, 3), transitions ending at t-2, t-1, t
    target: np.ndarray         # (6, 21, 11)

    def validate(self) -> None:
        if self.contours.shape != (3, 31) or self.strategy_vec.shape != (3, 3) \
                or self.target.shape != (6, 21, 11):
            raise ValueError("training pair has wrong block shapes")
        for name, arr in (("contours", self.contours),
                          ("strategy_vec", self.strategy_vec),
                          ("target", self.target)):
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise ValueError(f"{name} outside [0, 1]")


@dataclass
class DatasetManifest:
    seed: int
    run_count: int
    normalization: dict
    splits: dict                     # name -> list of run indices
    format_version: int = FORMAT_VERSION
    pairs_per_run: int = PAIRS_PER_RUN
    record_floats: int = RECORD_FLOATS
    dtype: str = "<f4"
    layout: dict = field(default_factory=lambda: {
        "contours": list(CONTOUR_BLOCK),
        "strategy": list(STRATEGY_BLOCK),
        "target": list(TARGET_BLOCK),
    })
    oracle_params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def sample_strategy(rng: np.random.Generator) -> ForgingStrategy:
    """Draw one strategy uniformly within the admissible component ranges."""
    def u(lo, hi, n=None):
        return lo + (hi - lo) * rng.random(n)

    lo, hi = STRATEGY_BOUNDS["t_oven"]
    t_oven = u(lo, hi)
    lo, hi = STRATEGY_BOUNDS["t_transport"]
    t_transport = u(lo, hi)
    lo, hi = STRATEGY_BOUNDS["wait"]
    wait = tuple(u(lo, hi, 3))
    lo, hi = STRATEGY_BOUNDS["upsetting"]
    upsetting = tuple(u(lo, hi, 3))
    return ForgingStrategy(t_oven, t_transport, wait, upsetting)


def transition_triplets(strategy: ForgingStrategy,
                        params: MaterialParams = DEFAULT_PARAMS) -> np.ndarray:
    """Descriptor triplet per phase: (idle duration / 60, upsetting, flag).

    Idle phases (transport, waits, quench) carry their duration and the idle
    flag; strokes carry the range-normalized upsetting time and the stroke
    flag. Padding slots elsewhere are exact zeros.
    """
    lo, hi = STRATEGY_BOUNDS["upsetting"]
    out = np.zeros((PAIRS_PER_RUN, 3))
    for k, ph in enumerate(phase_sequence(strategy, params)):
        if ph.kind == "stroke":
            out[k] = (0.0, (ph.duration - lo) / (hi - lo), FLAG_STROKE)
        else:
            out[k] = (min(ph.duration / _IDLE_SCALE, 1.0), 0.0, FLAG_IDLE)
    return out


def build_pairs(snapshots: list, strategy: ForgingStrategy,
                constants: NormalizationConstants = DEFAULT_CONSTANTS,
                params: MaterialParams = DEFAULT_PARAMS) -> list:
    """Assemble the 8 training pairs of one run from its snapshots."""
    if len(snapshots) != PAIRS_PER_RUN:
        raise ValueError(f"expected {PAIRS_PER_RUN} snapshots, got {len(snapshots)}")
    contours = [extract_contour(s, constants).values for s in snapshots]
    triplets = transition_triplets(strategy, params)
    pairs = []
    for t in range(PAIRS_PER_RUN):
        c = np.zeros((3, 31))
        for slot, k in enumerate(range(t - 3, t)):
            if k >= 0:
                c[slot] = contours[k]
        sv = np.zeros((3, 3))
        for slot, k in enumerate(range(t - 2, t + 1)):
            if k >= 0:
                sv[slot] = triplets[k]
        pairs.append(TrainingPair(c, sv, state_to_tensor(snapshots[t], constants)))
    return pairs


def pack_records(pairs: list) -> np.ndarray:
    """Pairs to (n, RECORD_FLOATS) float32 records."""
    out = np.empty((len(pairs), RECORD_FLOATS), dtype="<f4")
    for i, p in enumerate(pairs):
        out[i, CONTOUR_BLOCK[0]:CONTOUR_BLOCK[1]] = p.contours.reshape(-1)
        out[i, STRATEGY_BLOCK[0]:STRATEGY_BLOCK[1]] = p.strategy_vec.reshape(-1)
        out[i, TARGET_BLOCK[0]:TARGET_BLOCK[1]] = p.target.reshape(-1)
    return out


def run_records(strategy: ForgingStrategy, params: MaterialParams = DEFAULT_PARAMS,
                constants: NormalizationConstants = DEFAULT_CONSTANTS):
    """Simulate one run and return (records, snapshots)."""
    snaps = run_process(strategy, params)
    return pack_records(build_pairs(snaps, strategy, constants, params)), snaps


def _rng_for_run(seed: int, run_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run_id]))


_WORKER_STATE: dict = {}


def _worker_init(seed, params_dict, constants_dict):
    _WORKER_STATE["seed"] = seed
    _WORKER_STATE["params"] = MaterialParams(**params_dict)
    _WORKER_STATE["constants"] = NormalizationConstants.from_dict(constants_dict)


def _worker_run(run_id: int):
    rng = _rng_for_run(_WORKER_STATE["seed"], run_id)
    strategy = sample_strategy(rng)
    records, _ = run_records(strategy, _WORKER_STATE["params"], _WORKER_STATE["constants"])
    return run_id, records


def default_worker_count() -> int:
    env = os.environ.get("HOTFORGE_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, (os.cpu_count() or 1) - 0)


def generate(out_dir, run_count: int = 500, seed: int = 0,
             params: MaterialParams = DEFAULT_PARAMS,
             constants: NormalizationConstants = DEFAULT_CONSTANTS,
             workers: int | None = None) -> DatasetManifest:
    """Simulate run_count runs and write manifest.json plus data.bin.

    Run i depends only on (seed, i), and records are written in run order,
    so the output bytes are independent of the worker count. Splits are
    80:10:10 by run index to keep correlated snapshots in one split.
    """
    os.makedirs(out_dir, exist_ok=True)
    if workers is None:
        workers = default_worker_count()
    n_train = int(round(run_count * 0.8))
    n_val = int(round(run_count * 0.1))
    manifest = DatasetManifest(
        seed=seed,
        run_count=run_count,
        normalization=constants.as_dict(),
        splits={
            "train": list(range(0, n_train)),
            "val": list(range(n_train, n_train + n_val)),
            "test": list(range(n_train + n_val, run_count)),
        },
        oracle_params=asdict(params),
    )

    results = {}
    if workers > 1 and run_count > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_worker_init,
                      initargs=(seed, asdict(params), constants.as_dict())) as pool:
            for run_id, rec in pool.imap_unordered(_worker_run, range(run_count)):
                results[run_id] = rec
    else:
        _worker_init(seed, asdict(params), constants.as_dict())
        for run_id in range(run_count):
            results[run_id] = _worker_run(run_id)[1]

    data_path = os.path.join(out_dir, "data.bin")
    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        with open(data_path, "wb") as fh:
            for run_id in range(run_count):
                fh.write(results[run_id].tobytes())
        with open(manifest_path, "w") as fh:
            json.dump(manifest.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing dataset under {out_dir}: {exc}") from exc
    return manifest


@dataclass
class Dataset:
    manifest: DatasetManifest
    records: np.ndarray            # (n_pairs, RECORD_FLOATS) float32

    @property
    def constants(self) -> NormalizationConstants:
        return NormalizationConstants.from_dict(self.manifest.normalization)

    def split_run_ids(self, split: str) -> list:
        try:
            return self.manifest.splits[split]
        except KeyError:
            raise KeyError(f"unknown split {split!r}; have {sorted(self.manifest.splits)}") from None

    def split_arrays(self, split: str):
        """(contours (n, 31, 3), strategy (n, 9), targets (n, 1386)) as float64."""
        runs = self.split_run_ids(split)
        ppr = self.manifest.pairs_per_run
        idx = np.concatenate([np.arange(r * ppr, (r + 1) * ppr) for r in runs]) if runs \
            else np.empty(0, dtype=int)
        rec = self.records[idx].astype(np.float64)
        contours = rec[:, CONTOUR_BLOCK[0]:CONTOUR_BLOCK[1]].reshape(-1, 3, 31).transpose(0, 2, 1)
        strategy = rec[:, STRATEGY_BLOCK[0]:STRATEGY_BLOCK[1]]
        targets = rec[:, TARGET_BLOCK[0]:TARGET_BLOCK[1]]
        return np.ascontiguousarray(contours), strategy, targets


def load_dataset(path) -> Dataset:
    """Read a manifest/data.bin pair written by generate()."""
    manifest_path = os.path.join(path, "manifest.json")
    data_path = os.path.join(path, "data.bin")
    try:
        with open(manifest_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read dataset manifest {manifest_path}: {exc}") from exc
    if raw.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported dataset format version {raw.get('format_version')!r}")
    manifest = DatasetManifest(**{k: raw[k] for k in (
        "seed", "run_count", "normalization", "splits", "format_version",
        "pairs_per_run", "record_floats", "dtype", "layout", "oracle_params")})
    n_pairs = manifest.run_count * manifest.pairs_per_run
    expected = n_pairs * manifest.record_floats * 4
    actual = os.path.getsize(data_path)
    if actual != expected:
        raise DataFormatError(f"data.bin holds {actual} bytes, manifest implies {expected}")
    records = np.fromfile(data_path, dtype=manifest.dtype).reshape(n_pairs, manifest.record_floats)
    return Dataset(manifest, records)
