"""Desk-scale physics oracle for the three-stroke hot upsetting process.

Thermal evolution is an explicit finite-volume discretization of axisymmetric
conduction on the deforming 21 x 11 node lattice; upsetting is homogeneous
kinematics with an inhomogeneous equivalent-strain pattern; static
recrystallization follows Avrami kinetics with an effective-time rule and a
power-law growth regime after completion.

Phase sequence per run: oven -> transport -> (stroke, wait) x 3 -> quench,
with a state snapshot after every phase (8 per run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .core import DEFAULT_GRID, Grid, WorkpieceState

__all__ = [
    "MaterialParams",
    "ForgingStrategy",
    "StrategyBoundsError",
    "StabilityError",
    "PhaseEvent",
    "SnapshotSchedule",
    "OracleState",
    "DEFAULT_PARAMS",
    "STRATEGY_BOUNDS",
    "recrystallization_t50",
    "grain_growth_size",
    "avrami_fraction",
    "stability_limit",
    "thermal_step",
    "microstructure_step",
    "apply_stroke",
    "idle_phase",
    "ProcessSimulator",
    "run_process",
    "lattice_volume",
    "cell_volumes",
]

GAS_CONSTANT = 8.314  # J/(mol K)
STEFAN_BOLTZMANN = 5.670374419e-8  # W/(m^2 K^4)
_LN2 = math.log(2.0)

# Table of admissible strategy component ranges.
STRATEGY_BOUNDS = {
    "t_oven": (1100.0, 1300.0),
    "t_transport": (0.0, 30.0),
    "wait": (1.0, 60.0),
    "upsetting": (0.05, 0.15),
}


class StrategyBoundsError(ValueError):
    """Strategy component(s) outside the admissible ranges."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


class StabilityError(ValueError):
    """Requested explicit time step exceeds the diffusion stability limit."""


@dataclass(frozen=True)
class ForgingStrategy:
    """Oven temperature, transport time and per-stroke wait/upsetting times."""

    t_oven: float = 1200.0        # degC
    t_transport: float = 0.0      # s
    wait: tuple = (10.0, 10.0, 10.0)          # s, wait_i follows stroke_i
    upsetting: tuple = (0.1, 0.1, 0.1)        # s per stroke

    def violations(self) -> list[str]:
        msgs = []
        lo, hi = STRATEGY_BOUNDS["t_oven"]
        if not lo <= self.t_oven <= hi:
            msgs.append(f"t_oven {self.t_oven:g} outside [{lo:g}, {hi:g}]")
        lo, hi = STRATEGY_BOUNDS["t_transport"]
        if not lo <= self.t_transport <= hi:
            msgs.append(f"t_transport {self.t_transport:g} outside [{lo:g}, {hi:g}]")
        if len(self.wait) != 3 or len(self.upsetting) != 3:
            msgs.append("wait and upsetting must each hold 3 values")
            return msgs
        lo, hi = STRATEGY_BOUNDS["wait"]
        for k, w in enumerate(self.wait, 1):
            if not lo <= w <= hi:
                msgs.append(f"wait{k} {w:g} outside [{lo:g}, {hi:g}]")
        lo, hi = STRATEGY_BOUNDS["upsetting"]
        for k, u in enumerate(self.upsetting, 1):
            if not lo <= u <= hi:
                msgs.append(f"upsetting{k} {u:g} outside [{lo:g}, {hi:g}]")
        return msgs

    def validate(self) -> "ForgingStrategy":
        msgs = self.violations()
        if msgs:
            raise StrategyBoundsError(msgs)
        return self

    def as_vector(self) -> np.ndarray:
        """Control-vector order: oven, transport, (wait_i, upsetting_i) x 3."""
        return np.array([
            self.t_oven, self.t_transport,
            self.wait[0], self.upsetting[0],
            self.wait[1], self.upsetting[1],
            self.wait[2], self.upsetting[2],
        ])

    @classmethod
    def from_vector(cls, u) -> "ForgingStrategy":
        u = np.asarray(u, dtype=float)
        if u.shape != (8,):
            raise ValueError("control vector must have 8 components")
        return cls(u[0], u[1], (u[2], u[4], u[6]), (u[3], u[5], u[7]))


@dataclass(frozen=True)
class MaterialParams:
    """Thermal and kinetic constants of the stand-in material model.

    The recrystallization / growth constants are calibrated so that
    t50(1200 degC, d0 70 um, strain 0.3, rate 3/s) is about 8 s and growth
    takes 25 um to 30 um in 30 s at 1200 degC, which puts the decisive
    control authority into the 1-60 s wait window.
    """

    # thermal
    conductivity: float = 30.0       # W/(m K)
    density: float = 7850.0          # kg/m^3
    specific_heat: float = 650.0     # J/(kg K)
    h_air: float = 4.5               # W/(m^2 K), free-surface convection
    emissivity: float = 0.02         # effective radiative loss factor
    t_ambient: float = 25.0          # degC
    h_die: float = 5000.0            # W/(m^2 K) during die contact
    t_die: float = 250.0             # degC
    taylor_quinney: float = 0.9
    flow_stress_mpa: float = 150.0
    # recrystallization half-time  t50 = A d^p eps^q rate^s exp(Q/(R T))
    a_t50: float = 5.8e-15           # s / um^2
    t50_d_exp: float = 2.0
    t50_strain_exp: float = -2.0
    t50_rate_exp: float = -0.5
    q_rex: float = 300e3             # J/mol
    avrami_exponent: float = 5.0
    # recrystallized grain size  d_rx = C d^p eps^q, floored at d_rx_min
    c_drx: float = 0.4
    drx_d_exp: float = 0.67
    drx_strain_exp: float = -1.0
    d_rx_min: float = 5.0            # um
    # growth  d^m = d0^m + K dt exp(-Q/(R T)) once rx exceeds the switch
    growth_exponent: float = 7.0
    k_growth: float = 8e22           # um^7 / s
    q_growth: float = 400e3          # J/mol
    rx_growth_switch: float = 0.95
    # process
    d_initial: float = 70.0          # um
    strain_schedule: tuple = (0.3, 0.3, 0.4)
    barrel_coeff: float = 0.35
    freeze_temp: float = 900.0       # degC, kinetics halt below this
    h_quench: float = 2000.0         # W/(m^2 K) forced cooling
    quench_duration: float = 2.0     # s
    micro_dt: float = 0.02           # s, kinetics update interval

    @property
    def diffusivity(self) -> float:
        return self.conductivity / (self.density * self.specific_heat)

    @property
    def volumetric_heat(self) -> float:
        return self.density * self.specific_heat


DEFAULT_PARAMS = MaterialParams()


@dataclass(frozen=True)
class PhaseEvent:
    """One process phase: Transport, Stroke(i), Wait(i) or Quench."""

    kind: str              # "transport" | "stroke" | "wait" | "quench"
    duration: float        # s (for strokes: the upsetting time)
    index: int = 0         # 1..3 for strokes and waits

    def __post_init__(self):
        if self.kind not in ("transport", "stroke", "wait", "quench"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("phase duration must be non-negative")
        if self.kind in ("stroke", "wait") and self.index not in (1, 2, 3):
            raise ValueError("stroke/wait index must be 1..3")


@dataclass(frozen=True)
class SnapshotSchedule:
    """Emission points along the phase sequence; the default emits all 8."""

    emit_after: tuple = (0, 1, 2, 3, 4, 5, 6, 7)

    def __post_init__(self):
        if len(self.emit_after) != 8 or tuple(sorted(self.emit_after)) != tuple(range(8)):
            raise ValueError("schedule must emit exactly once after each of the 8 phases")


def phase_sequence(strategy: ForgingStrategy, params: MaterialParams = DEFAULT_PARAMS) -> list[PhaseEvent]:
    return [
        PhaseEvent("transport", strategy.t_transport),
        PhaseEvent("stroke", strategy.upsetting[0], 1),
        PhaseEvent("wait", strategy.wait[0], 1),
        PhaseEvent("stroke", strategy.upsetting[1], 2),
        PhaseEvent("wait", strategy.wait[1], 2),
        PhaseEvent("stroke", strategy.upsetting[2], 3),
        PhaseEvent("wait", strategy.wait[2], 3),
        PhaseEvent("quench", params.quench_duration),
    ]


# ---------------------------------------------------------------------------
# kinetic formulas (shared by the stepping kernel and by direct evaluation)
# ---------------------------------------------------------------------------

def recrystallization_t50(params: MaterialParams, d_um: float, strain: float,
                          strain_rate: float, temp_c: float) -> float:
    """Half-recrystallization time in seconds for one material point."""
    t_k = temp_c + 273.15
    return (params.a_t50
            * d_um ** params.t50_d_exp
            * strain ** params.t50_strain_exp
            * strain_rate ** params.t50_rate_exp
            * math.exp(params.q_rex / (GAS_CONSTANT * t_k)))


def grain_growth_size(params: MaterialParams, d_um: float, dt: float, temp_c: float) -> float:
    """Grain size after dt seconds of post-recrystallization growth."""
    t_k = temp_c + 273.15
    m = params.growth_exponent
    dm = d_um ** m + params.k_growth * dt * math.exp(-params.q_growth / (GAS_CONSTANT * t_k))
    return dm ** (1.0 / m)


def avrami_fraction(effective_time_ratio: float, exponent: float) -> float:
    """Recrystallized fraction at t_eff/t50 = effective_time_ratio."""
    if effective_time_ratio <= 0.0:
        return 0.0
    return 1.0 - math.exp(-_LN2 * effective_time_ratio ** exponent)


def recrystallized_size(params: MaterialParams, d_um: float, strain: float) -> float:
    d = params.c_drx * d_um ** params.drx_d_exp * strain ** params.drx_strain_exp
    return max(d, params.d_rx_min)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _thermal_kernel(T, n_steps, dt, dr, dz, alpha, rho_c,
                    h_top, t_top, rad_top, h_out, t_out, rad_out, t_amb_k4):
    """Explicit finite-volume conduction steps on the current lattice.

    Boundary fluxes: (h, t_ref, rad) per exposed edge; bottom and axis are
    symmetry planes. Radiative loss uses rad * sigma * (T^4 - T_amb^4).
    """
    ni, nj = T.shape
    sigma = 5.670374419e-8
    # radial cell integrals  w_j = int r dr  over the cell around node j
    wr = np.empty(nj)
    wr[0] = dr * dr / 8.0
    for j in range(1, nj - 1):
        wr[j] = j * dr * dr
    wr[nj - 1] = dr * dr * ((nj - 1) / 2.0 - 0.125)
    r_outer = (nj - 1) * dr

    lap = np.empty_like(T)
    for _ in range(n_steps):
        for i in range(ni):
            for j in range(nj):
                t_ij = T[i, j]
                acc = 0.0
                # radial flux difference, face radii at (j +/- 1/2) dr
                if j + 1 < nj:
                    acc += (j + 0.5) * dr * (T[i, j + 1] - t_ij)
                if j - 1 >= 0:
                    acc -= (j - 0.5) * dr * (t_ij - T[i, j - 1])
                acc /= wr[j] * dr
                # axial flux difference; half cells at the end rows
                az = 0.0
                if i + 1 < ni:
                    az += T[i + 1, j] - t_ij
                if i - 1 >= 0:
                    az -= t_ij - T[i - 1, j]
                wz = 1.0 if 0 < i < ni - 1 else 0.5
                acc += az / (wz * dz * dz)
                lap[i, j] = alpha * acc
        # boundary heat extraction
        for j in range(nj):
            t_ij = T[ni - 1, j]
            tk = t_ij + 273.15
            q = h_top * (t_ij - t_top) + rad_top * sigma * (tk * tk * tk * tk - t_amb_k4)
            lap[ni - 1, j] -= q / rho_c * 2.0 / dz
        for i in range(ni):
            t_ij = T[i, nj - 1]
            tk = t_ij + 273.15
            q = h_out * (t_ij - t_out) + rad_out * sigma * (tk * tk * tk * tk - t_amb_k4)
            lap[i, nj - 1] -= q / rho_c * r_outer / wr[nj - 1]
        for i in range(ni):
            for j in range(nj):
                T[i, j] += dt * lap[i, j]


@njit(cache=True)
def _micro_kernel(T, rx, seff, grain, d_prev, d_rx, growing, eps_drv, dt,
                  eps_rate, a_t50, p_d, p_eps, p_rate, q_rex, n_avrami,
                  k_growth, m_growth, q_growth, switch_rx, freeze_c):
    """Advance recrystallized fraction and grain size by dt at fixed fields."""
    ln2 = 0.6931471805599453
    gas_r = 8.314
    ni, nj = T.shape
    for i in range(ni):
        for j in range(nj):
            if eps_drv[i, j] <= 0.0:
                continue
            tc = T[i, j]
            if tc < freeze_c:
                continue
            tk = tc + 273.15
            if growing[i, j]:
                dm = grain[i, j] ** m_growth + k_growth * dt * math.exp(-q_growth / (gas_r * tk))
                grain[i, j] = dm ** (1.0 / m_growth)
            else:
                t50 = (a_t50 * d_prev[i, j] ** p_d * eps_drv[i, j] ** p_eps
                       * eps_rate ** p_rate * math.exp(q_rex / (gas_r * tk)))
                seff[i, j] += dt / t50
                x = 1.0 - math.exp(-ln2 * seff[i, j] ** n_avrami)
                rx[i, j] = x
                xm = x ** (4.0 / 3.0) * d_rx[i, j] + (1.0 - x) * (1.0 - x) * d_prev[i, j]
                grain[i, j] = xm
                if x > switch_rx:
                    growing[i, j] = True


# ---------------------------------------------------------------------------
# oracle state and operations
# ---------------------------------------------------------------------------

@dataclass
class OracleState:
    """Workpiece fields plus the per-node recrystallization bookkeeping."""

    temperature: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    eqplast: np.ndarray
    rx: np.ndarray
    grain: np.ndarray
    half_height: float
    radius: float
    grid: Grid
    # kinetics bookkeeping for the cycle opened by the last stroke
    seff: np.ndarray = None          # accumulated t_eff / t50
    d_prev: np.ndarray = None        # grain size at the last stroke, um
    d_rx: np.ndarray = None          # recrystallized size of this cycle, um
    eps_drv: np.ndarray = None       # driving strain of this cycle
    growing: np.ndarray = None       # nodes past the growth switch
    eps_rate: float = 1.0            # strain rate of the last stroke, 1/s
    strokes_applied: int = 0

    @classmethod
    def initial(cls, t_oven: float, params: MaterialParams = DEFAULT_PARAMS,
                grid: Grid = DEFAULT_GRID) -> "OracleState":
        shape = grid.shape
        return cls(
            temperature=np.full(shape, float(t_oven)),
            ux=np.zeros(shape),
            uy=np.zeros(shape),
            eqplast=np.zeros(shape),
            rx=np.zeros(shape),
            grain=np.full(shape, params.d_initial),
            half_height=grid.half_height0,
            radius=grid.radius0,
            grid=grid,
            seff=np.zeros(shape),
            d_prev=np.full(shape, params.d_initial),
            d_rx=np.full(shape, params.d_initial),
            eps_drv=np.zeros(shape),
            growing=np.zeros(shape, dtype=np.bool_),
        )

    @property
    def dz(self) -> float:
        """Current axial node spacing in meters."""
        return self.half_height / (self.grid.n_axial - 1) * 1e-3

    @property
    def dr(self) -> float:
        """Current radial node spacing in meters."""
        return self.radius / (self.grid.n_radial - 1) * 1e-3

    def snapshot(self) -> WorkpieceState:
        return WorkpieceState(
            temperature=self.temperature.copy(),
            ux=self.ux.copy(),
            uy=self.uy.copy(),
            eqplast=self.eqplast.copy(),
            rx=self.rx.copy(),
            grain=self.grain.copy(),
            half_height=self.half_height,
            radius=self.radius,
            grid=self.grid,
        )


def stability_limit(state: OracleState, params: MaterialParams) -> float:
    """Largest admissible explicit step, min(dr, dz)^2 / (4 alpha)."""
    h = min(state.dr, state.dz)
    return h * h / (4.0 * params.diffusivity)


def _safe_substep(state: OracleState, params: MaterialParams) -> float:
    # convexity bound including the axis cell (4/dr^2) and end rows (2/dz^2)
    alpha = params.diffusivity
    c = alpha * (4.0 / state.dr ** 2 + 2.0 / state.dz ** 2)
    return 0.9 / c


def _boundary_coeffs(params: MaterialParams, boundary: str, quench: bool = False):
    h_air = params.h_quench if quench else params.h_air
    if boundary == "air":
        return (h_air, params.t_ambient, params.emissivity,
                h_air, params.t_ambient, params.emissivity)
    if boundary == "die":
        return (params.h_die, params.t_die, 0.0,
                params.h_air, params.t_ambient, params.emissivity)
    raise ValueError(f"unknown boundary {boundary!r}")


def _run_thermal(state: OracleState, duration: float, params: MaterialParams,
                 boundary: str, quench: bool = False) -> None:
    if duration <= 0:
        return
    dt_sub = _safe_substep(state, params)
    n = max(1, int(math.ceil(duration / dt_sub)))
    coeffs = _boundary_coeffs(params, boundary, quench)
    t_amb_k4 = (params.t_ambient + 273.15) ** 4
    _thermal_kernel(state.temperature, n, duration / n, state.dr, state.dz,
                    params.diffusivity, params.volumetric_heat, *coeffs, t_amb_k4)


def thermal_step(state: OracleState, dt: float, boundary: str = "air",
                 params: MaterialParams = DEFAULT_PARAMS, quench: bool = False) -> OracleState:
    """One explicit conduction step of length dt (sub-cycled internally).

    Rejects dt beyond the stability limit min(dr, dz)^2 / (4 alpha).
    """
    if not np.all(np.isfinite(state.temperature)):
        raise ValueError("temperature field contains non-finite values")
    limit = stability_limit(state, params)
    if dt > limit * (1.0 + 1e-12):
        raise StabilityError(
            f"dt {dt:g} s exceeds stability limit {limit:g} s for spacing "
            f"({state.dr:g}, {state.dz:g}) m")
    _run_thermal(state, dt, params, boundary)
    return state


def microstructure_step(state: OracleState, dt: float,
                        params: MaterialParams = DEFAULT_PARAMS) -> OracleState:
    """Advance recrystallization / growth by dt at the current temperatures."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0 or state.strokes_applied == 0:
        return state
    _micro_kernel(state.temperature, state.rx, state.seff, state.grain,
                  state.d_prev, state.d_rx, state.growing, state.eps_drv,
                  dt, state.eps_rate,
                  params.a_t50, params.t50_d_exp, params.t50_strain_exp,
                  params.t50_rate_exp, params.q_rex, params.avrami_exponent,
                  params.k_growth, params.growth_exponent, params.q_growth,
                  params.rx_growth_switch, params.freeze_temp)
    return state


def strain_pattern(grid: Grid, barrel_coeff: float) -> np.ndarray:
    """Relative equivalent-strain distribution of one stroke.

    The pattern concentrates strain at the mid-plane surface and starves the
    near-axis mid-plane zone; its volume-weighted mean is exactly 1.
    """
    zn = np.arange(grid.n_axial) / (grid.n_axial - 1)      # z / H
    rn = np.arange(grid.n_radial) / (grid.n_radial - 1)    # r / R
    f = 1.0 - zn[:, None] ** 2
    g = 2.0 * rn[None, :] ** 2 - 1.0
    return 1.0 + barrel_coeff * f * g


def apply_stroke(state: OracleState, stroke_index: int, upsetting_time: float,
                 params: MaterialParams = DEFAULT_PARAMS) -> OracleState:
    """Apply one upsetting stroke: kinematics, strain, adiabatic heat, die chill."""
    if stroke_index not in (1, 2, 3):
        raise ValueError("stroke_index must be 1, 2 or 3")
    lo, hi = STRATEGY_BOUNDS["upsetting"]
    if not lo <= upsetting_time <= hi:
        raise ValueError(f"upsetting_time {upsetting_time:g} outside [{lo:g}, {hi:g}]")

    grid = state.grid
    d_eps = params.strain_schedule[stroke_index - 1]
    lam = math.exp(-d_eps)

    # homogeneous kinematics: height scales by lam, radius by lam^-1/2
    state.half_height *= lam
    state.radius *= lam ** -0.5
    z0 = np.arange(grid.n_axial)[:, None] * grid.dz0
    r0 = np.arange(grid.n_radial)[None, :] * grid.dr0
    state.uy = np.broadcast_to(z0 * (state.half_height / grid.half_height0 - 1.0),
                               grid.shape).copy()
    state.ux = np.broadcast_to(r0 * (state.radius / grid.radius0 - 1.0),
                               grid.shape).copy()

    # inhomogeneous strain increment and adiabatic heating
    d_eps_bar = d_eps * strain_pattern(grid, params.barrel_coeff)
    state.eqplast += d_eps_bar
    state.temperature += (params.taylor_quinney * params.flow_stress_mpa * 1e6
                          * d_eps_bar / params.volumetric_heat)

    # die contact while the press closes
    _run_thermal(state, upsetting_time, params, "die")

    # open a fresh recrystallization cycle; unconsumed strain carries over
    retained = (1.0 - state.rx) * state.eps_drv
    state.eps_drv = d_eps_bar + retained
    state.rx = np.zeros(grid.shape)
    state.seff = np.zeros(grid.shape)
    state.growing = np.zeros(grid.shape, dtype=np.bool_)
    state.d_prev = state.grain.copy()
    state.d_rx = np.maximum(
        params.c_drx * state.d_prev ** params.drx_d_exp * state.eps_drv ** params.drx_strain_exp,
        params.d_rx_min)
    state.eps_rate = d_eps / upsetting_time
    state.strokes_applied += 1
    return state


def idle_phase(state: OracleState, duration: float, params: MaterialParams = DEFAULT_PARAMS,
               quench: bool = False) -> None:
    """Air-cooled dwell with interleaved kinetics updates."""
    t = 0.0
    while t < duration - 1e-12:
        dt_c = min(params.micro_dt, duration - t)
        _run_thermal(state, dt_c, params, "air", quench=quench)
        microstructure_step(state, dt_c, params)
        t += dt_c


class ProcessSimulator:
    """Stateful phase-by-phase driver of one forging run."""

    def __init__(self, strategy: ForgingStrategy, params: MaterialParams = DEFAULT_PARAMS,
                 grid: Grid = DEFAULT_GRID, validate: bool = True):
        if validate:
            strategy.validate()
        self.strategy = strategy
        self.params = params
        self.phases = phase_sequence(strategy, params)
        self.state = OracleState.initial(strategy.t_oven, params, grid)
        self.snapshots: list[WorkpieceState] = []
        self._cursor = 0

    def advance(self, n_phases: int = 1) -> list[WorkpieceState]:
        """Execute the next n phases; returns the snapshots they emitted."""
        out = []
        for _ in range(n_phases):
            if self._cursor >= len(self.phases):
                raise RuntimeError("process already complete")
            ph = self.phases[self._cursor]
            if ph.kind == "stroke":
                apply_stroke(self.state, ph.index, ph.duration, self.params)
            elif ph.kind == "quench":
                idle_phase(self.state, ph.duration, self.params, quench=True)
            else:  # transport / wait
                idle_phase(self.state, ph.duration, self.params)
            snap = self.state.snapshot()
            self.snapshots.append(snap)
            out.append(snap)
            self._cursor += 1
        return out

    @property
    def complete(self) -> bool:
        return self._cursor >= len(self.phases)

    def run_all(self) -> list[WorkpieceState]:
        while not self.complete:
            self.advance()
        return self.snapshots


def run_process(strategy: ForgingStrategy, params: MaterialParams = DEFAULT_PARAMS,
                schedule: SnapshotSchedule = SnapshotSchedule(),
                grid: Grid = DEFAULT_GRID) -> list[WorkpieceState]:
    """Simulate one full run and return its snapshots in schedule order."""
    sim = ProcessSimulator(strategy, params, grid)
    snaps = sim.run_all()
    return [snaps[k] for k in schedule.emit_after]


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def cell_volumes(dr: float, dz: float, shape: tuple[int, int]) -> np.ndarray:
    """Finite-volume cell volumes (per radian) of the node lattice, m^3."""
    ni, nj = shape
    wr = np.empty(nj)
    wr[0] = dr * dr / 8.0
    wr[1:nj - 1] = np.arange(1, nj - 1) * dr * dr
    wr[nj - 1] = dr * dr * ((nj - 1) / 2.0 - 0.125)
    wz = np.ones(ni)
    wz[0] = wz[-1] = 0.5
    return wz[:, None] * dz * wr[None, :]


def lattice_volume(state) -> float:
    """Axisymmetric volume of the deformed node lattice in mm^3.

    Computed from the displaced node positions, independently of the
    kinematic bookkeeping, so it doubles as a conservation audit.
    """
    grid = state.grid
    z0 = np.arange(grid.n_axial)[:, None] * grid.dz0
    r0 = np.arange(grid.n_radial)[None, :] * grid.dr0
    z = z0 + state.uy
    r = r0 + state.ux
    vol = 0.0
    for i in range(grid.n_axial - 1):
        for j in range(grid.n_radial - 1):
            r_in = 0.5 * (r[i, j] + r[i + 1, j])
            r_out = 0.5 * (r[i, j + 1] + r[i + 1, j + 1])
            dz_cell = 0.5 * ((z[i + 1, j] - z[i, j]) + (z[i + 1, j + 1] - z[i, j + 1]))
            vol += math.pi * (r_out ** 2 - r_in ** 2) * dz_cell
    return vol
