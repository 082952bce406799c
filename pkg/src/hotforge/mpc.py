"""Shrinking-horizon controller for the three-stroke process.

Stage 1 optimizes the full 8-component control vector against surrogate
rollouts, then freezes the oven/transport/first-stroke block; the oracle
(carrying any disturbances) executes up to the end of the first wait and
supplies measured surface contours. Stage 2 re-optimizes the remaining four
components from the measured state, stage 3 the last two. The final grain
field is always taken from the oracle, never from the surrogate.
"""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .anneal import AnnealConfig, BoxDomain, minimize
from .core import (DEFAULT_CONSTANTS, DEFAULT_GRID, NormalizationConstants,
                   contour_node_indices, denormalize_field, extract_contour)
from .dataset import transition_triplets
from .procsim import (DEFAULT_PARAMS, ForgingStrategy, MaterialParams,
                      OracleState, STRATEGY_BOUNDS, apply_stroke, idle_phase)

__all__ = [
    "CONTROL_NAMES", "ControlVector", "RegionOfInterest", "ObjectiveParams",
    "Scenario", "MpcStageResult", "MpcRunResult", "f_thresh", "objective",
    "quantize_waits", "rollout", "run_mpc", "load_scenario",
]

CONTROL_NAMES = ("t_oven", "t_transport", "wait1", "upsetting1",
                 "wait2", "upsetting2", "wait3", "upsetting3")
_WAIT_IDX = (2, 4, 6)
_STAGE_FREEZE = {1: (0, 1, 2, 3), 2: (4, 5), 3: (6, 7)}
_STAGE_SCOPE = {1: tuple(range(8)), 2: (4, 5, 6, 7), 3: (6, 7)}
WAIT_QUANTUM = 5.0


def control_bounds() -> tuple[np.ndarray, np.ndarray]:
    lo = np.empty(8)
    hi = np.empty(8)
    lo[0], hi[0] = STRATEGY_BOUNDS["t_oven"]
    lo[1], hi[1] = STRATEGY_BOUNDS["t_transport"]
    for k in _WAIT_IDX:
        lo[k], hi[k] = STRATEGY_BOUNDS["wait"]
    for k in (3, 5, 7):
        lo[k], hi[k] = STRATEGY_BOUNDS["upsetting"]
    return lo, hi


def quantize_waits(u: np.ndarray, indices=_WAIT_IDX) -> np.ndarray:
    """Round wait components to the nearest 5 s multiple, floored at 5 s."""
    q = np.asarray(u, dtype=float).copy()
    hi = STRATEGY_BOUNDS["wait"][1]
    for k in indices:
        q[k] = min(hi, max(WAIT_QUANTUM, round(q[k] / WAIT_QUANTUM) * WAIT_QUANTUM))
    return q


@dataclass
class ControlVector:
    """The 8 controls u1..u8 plus the free/frozen bookkeeping."""

    values: np.ndarray
    free: np.ndarray      # bool mask, True where the optimizer may move

    @classmethod
    def from_strategy(cls, strategy: ForgingStrategy, free_names=()) -> "ControlVector":
        mask = np.array([name in free_names for name in CONTROL_NAMES])
        return cls(strategy.as_vector(), mask)

    def as_strategy(self) -> ForgingStrategy:
        return ForgingStrategy.from_vector(self.values)


@dataclass(frozen=True)
class RegionOfInterest:
    """Node-index rectangle (inclusive) with a dilation ring as safety margin."""

    row_min: int = 5
    row_max: int = 15
    col_min: int = 0
    col_max: int = 7
    margin: int = 1

    def __post_init__(self):
        ni, nj = DEFAULT_GRID.shape
        if not (0 <= self.row_min <= self.row_max < ni
                and 0 <= self.col_min <= self.col_max < nj):
            raise ValueError("region rectangle outside the grid")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    def core_mask(self, shape=DEFAULT_GRID.shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.row_min:self.row_max + 1, self.col_min:self.col_max + 1] = True
        return m

    def mask(self, shape=DEFAULT_GRID.shape) -> np.ndarray:
        """Region plus margin: rectangle dilated by `margin` nodes."""
        m = np.zeros(shape, dtype=bool)
        m[max(0, self.row_min - self.margin):min(shape[0], self.row_max + self.margin + 1),
          max(0, self.col_min - self.margin):min(shape[1], self.col_max + self.margin + 1)] = True
        return m

    def as_dict(self) -> dict:
        return {"row_min": self.row_min, "row_max": self.row_max,
                "col_min": self.col_min, "col_max": self.col_max, "margin": self.margin}


@dataclass(frozen=True)
class ObjectiveParams:
    threshold: float = 35.0    # um
    wait_weight: float = 0.3   # per second of wait time

    def __post_init__(self):
        if self.threshold <= 0 or self.wait_weight < 0:
            raise ValueError("threshold must be positive and wait_weight non-negative")


def f_thresh(x: float, n: float) -> float:
    """1 when the grain size is within the threshold, 0 above it."""
    return 1.0 if x <= n else 0.0


def violation_count(grain_field: np.ndarray, region: RegionOfInterest,
                    params: ObjectiveParams) -> int:
    return int(np.sum(grain_field[region.mask(grain_field.shape)] > params.threshold))


def objective(grain_field: np.ndarray, region: RegionOfInterest, waits,
              params: ObjectiveParams = ObjectiveParams()) -> float:
    """Violating-node count over region plus margin, plus weighted wait total."""
    return violation_count(grain_field, region, params) + params.wait_weight * float(np.sum(waits))


@dataclass(frozen=True)
class Scenario:
    """Nominal plan, disturbance overrides and controller configuration."""

    nominal: ForgingStrategy
    disturbance: dict = field(default_factory=dict)   # control name -> actual value
    free_names: tuple = ("wait1", "wait2", "wait3")
    region: RegionOfInterest = RegionOfInterest()
    objective_params: ObjectiveParams = ObjectiveParams()
    anneal: AnnealConfig = AnnealConfig(max_iterations=60, seed=7)
    wait_bounds: tuple = (STRATEGY_BOUNDS["wait"][0], STRATEGY_BOUNDS["wait"][1])

    def __post_init__(self):
        self.nominal.validate()
        for name, value in self.disturbance.items():
            if name not in CONTROL_NAMES:
                raise ValueError(f"unknown disturbance target {name!r}")
            k = CONTROL_NAMES.index(name)
            lo, hi = control_bounds()
            if not lo[k] <= value <= hi[k]:
                raise ValueError(f"disturbance {name}={value:g} outside [{lo[k]:g}, {hi[k]:g}]")
        for name in self.free_names:
            if name not in CONTROL_NAMES:
                raise ValueError(f"unknown control name {name!r}")
        lo, hi = STRATEGY_BOUNDS["wait"]
        if not (lo <= self.wait_bounds[0] < self.wait_bounds[1] <= hi):
            raise ValueError(f"wait_bounds must nest inside [{lo:g}, {hi:g}]")

    def applied_value(self, index: int, planned: float) -> float:
        """Actual process value: the disturbance override when present."""
        return float(self.disturbance.get(CONTROL_NAMES[index], planned))


@dataclass
class MpcStageResult:
    stage: int
    controls: np.ndarray           # full plan vector after this stage's optimization
    frozen_names: tuple            # controls frozen once this stage is applied
    predicted_grain: np.ndarray    # surrogate end-state grain field, um
    objective_value: float
    predicted_violations: int
    eval_count: int
    wall_clock: float


@dataclass
class MpcRunResult:
    stages: list
    applied_controls: np.ndarray
    final_grain: np.ndarray        # oracle grain field after quench, um
    verified_violations: int
    verified_feasible: bool
    region: RegionOfInterest

    def trace(self) -> dict:
        """Deterministic run record (wall-clock times are reported separately)."""
        return {
            "stages": [{
                "stage": s.stage,
                "controls": [round(float(v), 10) for v in s.controls],
                "frozen": list(s.frozen_names),
                "objective": round(float(s.objective_value), 10),
                "predicted_violations": s.predicted_violations,
                "eval_count": s.eval_count,
            } for s in self.stages],
            "applied_controls": [round(float(v), 10) for v in self.applied_controls],
            "verified_violations": self.verified_violations,
            "verified_feasible": self.verified_feasible,
            "region": self.region.as_dict(),
        }

    def timings(self) -> dict:
        return {f"stage{s.stage}_seconds": s.wall_clock for s in self.stages}


# ---------------------------------------------------------------------------
# surrogate rollout
# ---------------------------------------------------------------------------

def rollout(model, measured_contours: dict, control_vector: np.ndarray,
            first_snapshot: int, last_snapshot: int = 6,
            params: MaterialParams = DEFAULT_PARAMS,
            current_state: np.ndarray | None = None) -> np.ndarray:
    """Iterate the surrogate from the first unmeasured snapshot to the last.

    measured_contours maps snapshot index to its normalized 31-value contour.
    Each prediction's temperature field is sampled back into a contour and
    fed forward, so one surrogate call covers one remaining snapshot. With
    an empty horizon the previously predicted state passes through.
    """
    if first_snapshot > last_snapshot:
        if current_state is None:
            raise ValueError("empty horizon needs a current predicted state")
        return current_state
    strategy = ForgingStrategy.from_vector(control_vector)
    triplets = transition_triplets(strategy, params)
    contour_idx = contour_node_indices()
    contours = dict(measured_contours)
    pred = current_state
    for k in range(first_snapshot, last_snapshot + 1):
        c = np.zeros((3, 31))
        for slot, j in enumerate(range(k - 3, k)):
            if j >= 0 and j in contours:
                c[slot] = contours[j]
        sv = np.zeros((3, 3))
        for slot, j in enumerate(range(k - 2, k + 1)):
            if j >= 0:
                sv[slot] = triplets[j]
        pred = model.predict(c.T, sv.reshape(-1))
        contours[k] = np.array([pred[0][r, col] for r, col in contour_idx])
    return pred


# ---------------------------------------------------------------------------
# the controller
# ---------------------------------------------------------------------------

def _stage_domain(scenario: Scenario, plan: np.ndarray, stage: int) -> BoxDomain:
    lo, hi = control_bounds()
    for k in _WAIT_IDX:
        lo[k], hi[k] = scenario.wait_bounds
    scope = set(_STAGE_SCOPE[stage])
    free = [CONTROL_NAMES.index(n) for n in scenario.free_names]
    frozen = {k: float(plan[k]) for k in range(8) if k not in scope or k not in free}
    return BoxDomain(lo, hi, frozen)


def run_mpc(scenario: Scenario, model, anneal_config: AnnealConfig | None = None,
            objective_params: ObjectiveParams | None = None,
            params: MaterialParams = DEFAULT_PARAMS,
            constants: NormalizationConstants = DEFAULT_CONSTANTS) -> MpcRunResult:
    """Run the three optimization stages against the (disturbed) oracle.

    The controller only ever sees the oracle through measured contours; the
    returned final grain field and violation count come from the oracle run,
    with the surrogate used for planning alone.
    """
    obj = objective_params or scenario.objective_params
    base_cfg = anneal_config or scenario.anneal
    region = scenario.region
    plan = scenario.nominal.as_vector()

    actual_oven = scenario.applied_value(0, plan[0])
    oracle = OracleState.initial(actual_oven, params)
    measured: dict[int, np.ndarray] = {}
    grain_span = constants.span("grain")
    grain_min = constants.minimum("grain")

    def stage_objective(first_snapshot, free_waits):
        def fn(u):
            uq = quantize_waits(u, free_waits)
            pred = rollout(model, measured, uq, first_snapshot, 6, params)
            grain = denormalize_field(pred[5], constants, "grain")
            return objective(grain, region, uq[list(_WAIT_IDX)], obj)
        return fn

    def execute(phase_kind, *args):
        if phase_kind == "idle":
            idle_phase(oracle, args[0], params)
        elif phase_kind == "quench":
            idle_phase(oracle, args[0], params, quench=True)
        else:
            apply_stroke(oracle, args[0], args[1], params)
        snap_id = len(measured)
        measured[snap_id] = extract_contour(oracle.snapshot(), constants).values

    stages = []
    first_unmeasured = {1: 0, 2: 3, 3: 5}
    for stage in (1, 2, 3):
        cfg = replace(base_cfg, seed=base_cfg.seed + stage - 1)
        domain = _stage_domain(scenario, plan, stage)
        free_waits = tuple(k for k in _WAIT_IDX if k not in domain.frozen)
        t0 = time.perf_counter()
        result = minimize(stage_objective(first_unmeasured[stage], free_waits), domain, cfg)
        wall = time.perf_counter() - t0
        plan = quantize_waits(result.best_point, free_waits)
        pred = rollout(model, measured, plan, first_unmeasured[stage], 6, params)
        pred_grain = denormalize_field(pred[5], constants, "grain")
        stages.append(MpcStageResult(
            stage=stage,
            controls=plan.copy(),
            frozen_names=tuple(CONTROL_NAMES[k] for k in _STAGE_FREEZE[stage]),
            predicted_grain=pred_grain,
            objective_value=float(result.best_value),
            predicted_violations=violation_count(pred_grain, region, obj),
            eval_count=result.eval_count,
            wall_clock=wall,
        ))

        # the oracle applies this stage's controls, with disturbances in force
        if stage == 1:
            execute("idle", scenario.applied_value(1, plan[1]))
            execute("stroke", 1, scenario.applied_value(3, plan[3]))
            execute("idle", scenario.applied_value(2, plan[2]))
            plan[1] = scenario.applied_value(1, plan[1])
            plan[2] = scenario.applied_value(2, plan[2])
            plan[3] = scenario.applied_value(3, plan[3])
        elif stage == 2:
            execute("stroke", 2, scenario.applied_value(5, plan[5]))
            execute("idle", scenario.applied_value(4, plan[4]))
            plan[4] = scenario.applied_value(4, plan[4])
            plan[5] = scenario.applied_value(5, plan[5])
        else:
            execute("stroke", 3, scenario.applied_value(7, plan[7]))
            execute("idle", scenario.applied_value(6, plan[6]))
            execute("quench", params.quench_duration)
            plan[6] = scenario.applied_value(6, plan[6])
            plan[7] = scenario.applied_value(7, plan[7])

    final = oracle.snapshot()
    verified = violation_count(final.grain, region, obj)
    applied = plan.copy()
    applied[0] = actual_oven
    return MpcRunResult(
        stages=stages,
        applied_controls=applied,
        final_grain=final.grain,
        verified_violations=verified,
        verified_feasible=verified == 0,
        region=region,
    )


# ---------------------------------------------------------------------------
# scenario files (ini-style key/value sections)
# ---------------------------------------------------------------------------

def load_scenario(path) -> Scenario:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise OSError(f"cannot read scenario file {path}")
    if "plan" not in cp:
        raise ValueError(f"scenario {path} lacks a [plan] section")
    plan = cp["plan"]
    nominal = ForgingStrategy(
        t_oven=plan.getfloat("oven", 1200.0),
        t_transport=plan.getfloat("transport", 0.0),
        wait=(plan.getfloat("wait1", 10.0), plan.getfloat("wait2", 10.0),
              plan.getfloat("wait3", 10.0)),
        upsetting=(plan.getfloat("upsetting1", 0.1), plan.getfloat("upsetting2", 0.1),
                   plan.getfloat("upsetting3", 0.1)),
    )
    disturbance = {}
    if "disturbance" in cp:
        alias = {"oven": "t_oven", "transport": "t_transport"}
        for key, value in cp["disturbance"].items():
            disturbance[alias.get(key, key)] = float(value)
    free_names = ("wait1", "wait2", "wait3")
    wait_lo, wait_hi = STRATEGY_BOUNDS["wait"]
    if "control" in cp:
        ctl = cp["control"]
        if "free" in ctl:
            free_names = tuple(n.strip() for n in ctl["free"].split(",") if n.strip())
        wait_lo = ctl.getfloat("wait_min", wait_lo)
        wait_hi = ctl.getfloat("wait_max", wait_hi)
    region = RegionOfInterest()
    if "region" in cp:
        rg = cp["region"]
        region = RegionOfInterest(
            row_min=rg.getint("row_min", 5), row_max=rg.getint("row_max", 15),
            col_min=rg.getint("col_min", 0), col_max=rg.getint("col_max", 7),
            margin=rg.getint("margin", 1))
    objective_params = ObjectiveParams()
    if "objective" in cp:
        ob = cp["objective"]
        objective_params = ObjectiveParams(threshold=ob.getfloat("threshold", 35.0),
                                           wait_weight=ob.getfloat("wait_weight", 0.3))
    anneal = AnnealConfig(max_iterations=60, seed=7)
    if "anneal" in cp:
        an = cp["anneal"]
        anneal = AnnealConfig(
            max_iterations=an.getint("max_iterations", 60),
            max_evaluations=an.getint("max_evaluations", int(1e7)),
            initial_temperature=an.getfloat("initial_temperature", 10000.0),
            visit_param=an.getfloat("visit", 2.7),
            accept_param=an.getfloat("accept", -10.0),
            seed=an.getint("seed", 7),
            local_search=an.getboolean("local_search", True))
    return Scenario(nominal=nominal, disturbance=disturbance, free_names=free_names,
                    region=region, objective_params=objective_params, anneal=anneal,
                    wait_bounds=(wait_lo, wait_hi))
