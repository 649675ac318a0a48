"""Deterministic simulation of an N-cell li-ion storage pack under load.

Each cell owns a discharge characteristic built from a shared monotone
base curve plus per-cell manufacturing spread (capacity, internal
resistance, a static voltage offset) and a per-cycle drift term.  The
drift is a set of narrow, smooth voltage bumps whose amplitudes take a
bounded random step at every recharge: consecutive cycles always differ
noticeably somewhere, while most of the curve moves very little per
cycle.  That shape is what lets a dynamically refreshed cell model track
the live cell tightly while a frozen model drifts away.

All randomness derives from the pack seed, so identical (seed, config,
operation sequence) reproduce bit-identical trajectories.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, InvalidCellError

__all__ = ["PackConfig", "CellParams", "CellState", "Bess", "create_pack"]

# Nominal operating window; a cycle ends when the loaded voltage hits the floor.
V_MIN = 3.45
V_MAX = 4.00

# Base discharge shape at the nominal operating point (500 mA through a
# 20 mOhm cell).  Knots in (soc, volts) order; interpolated monotonically.
CURVE_KNOTS = ((0.0, 3.45), (0.1, 3.55), (0.4, 3.72), (0.8, 3.92), (1.0, 4.00))
NOMINAL_LOAD_MA = 500.0
NOMINAL_RESISTANCE_MOHM = 20.0

# Minimum pack size; one challenge can reference six distinct cells.
MIN_CELLS = 7

_BASE_CURVE = PchipInterpolator([k[0] for k in CURVE_KNOTS], [k[1] for k in CURVE_KNOTS])
_BASE_SLOPE_AT_EMPTY = float(_BASE_CURVE.derivative()(0.0))


@dataclass(frozen=True)
class PackConfig:
    """Simulation knobs; defaults describe a 2.5 Ah 18650-class cell."""

    nominal_capacity_mah: float = 2500.0
    capacity_variation: float = 0.02        # uniform +/- fraction per cell
    resistance_mohm_min: float = 16.0
    resistance_mohm_max: float = 24.0
    curve_offset_mv: float = 15.0           # uniform +/- per cell, static
    load_ma: float = 500.0
    aging_rate: float = 1e-4                # capacity decay per recharge
    # cycle-to-cycle drift: bounded random-step bumps
    drift_sites: int = 9
    drift_sigma_soc: float = 0.015
    drift_initial_mv: float = 3.5           # uniform +/- initial amplitude
    drift_step_mv_min: float = 2.6
    drift_step_mv_max: float = 5.2

    def validate(self) -> "PackConfig":
        if self.nominal_capacity_mah <= 0:
            raise ConfigError("nominal_capacity_mah must be positive")
        if not 0 <= self.capacity_variation < 1:
            raise ConfigError("capacity_variation must sit in [0, 1)")
        if self.resistance_mohm_min <= 0 or self.resistance_mohm_max < self.resistance_mohm_min:
            raise ConfigError("resistance range must be positive and ordered")
        if self.load_ma <= 0:
            raise ConfigError("load_ma must be positive")
        if not 0 <= self.aging_rate < 0.1:
            raise ConfigError("aging_rate must sit in [0, 0.1)")
        return self


@dataclass(frozen=True)
class CellParams:
    """Static manufacturing draw for one cell."""

    cell_id: int
    rated_capacity: float        # mAh
    internal_resistance: float   # mOhm
    curve_offset: float          # V
    aging_rate: float
    rng_seed: int


@dataclass(frozen=True)
class CellState:
    """Immutable snapshot of one cell."""

    params: CellParams
    cycle_index: int
    charge_drawn: float          # mAh since cycle start
    true_voltage: float          # V under the configured load
    cycle_complete: bool


class Bess:
    """Mutable pack state.  One driver advances the clock; snapshots are
    cheap copies safe to hand to other readers."""

    def __init__(self, seed: int, n_cells: int, config: PackConfig):
        config.validate()
        if n_cells < MIN_CELLS:
            raise ConfigError(f"pack needs at least {MIN_CELLS} cells, got {n_cells}")
        if n_cells > 256:
            raise ConfigError(f"cell ids are 8-bit, {n_cells} cells too many")
        self.seed = int(seed)
        self.n_cells = int(n_cells)
        self.config = config
        self.load_ma = config.load_ma
        self.sim_time = 0.0

        root = np.random.default_rng(np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, 0xB_E55]))
        n = self.n_cells
        cv = config.capacity_variation
        self.rated_capacity = config.nominal_capacity_mah * (1.0 + root.uniform(-cv, cv, n))
        self.resistance_mohm = root.uniform(config.resistance_mohm_min, config.resistance_mohm_max, n)
        self.curve_offset = root.uniform(-config.curve_offset_mv, config.curve_offset_mv, n) * 1e-3

        self.capacity_now = self.rated_capacity.copy()
        self.cycle_index = np.zeros(n, dtype=np.int64)
        self.charge_drawn = np.zeros(n)
        self.cycle_complete = np.zeros(n, dtype=bool)

        # per-cell drift sites: jittered grid, amplitudes seeded per cell
        s = config.drift_sites
        base_pos = np.linspace(0.1, 0.9, s)
        self.drift_pos = base_pos[None, :] + root.uniform(-0.03, 0.03, (n, s))
        self.drift_amp = np.empty((n, s))
        for cid in range(n):
            self.drift_amp[cid] = self._cycle_rng(cid, 0).uniform(
                -config.drift_initial_mv, config.drift_initial_mv, s) * 1e-3

        self.true_voltage = np.empty(n)
        self._refresh_voltage(np.arange(n))

    # -- randomness ---------------------------------------------------------

    def _cycle_rng(self, cell_id: int, cycle: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, int(cell_id), int(cycle)]))

    # -- voltage model ------------------------------------------------------

    def _loaded_voltage(self, idx: np.ndarray, charge: np.ndarray) -> np.ndarray:
        """Voltage of cells `idx` at the given charge drawn, under pack load."""
        soc = 1.0 - charge / self.capacity_now[idx]
        clipped = np.clip(soc, 0.0, 1.0)
        v = _BASE_CURVE(clipped)
        # below nominal empty the curve keeps falling at its end slope,
        # so cells with a positive offset still reach the cutoff
        v = v + np.minimum(soc, 0.0) * _BASE_SLOPE_AT_EMPTY
        v = v + NOMINAL_LOAD_MA * 1e-3 * NOMINAL_RESISTANCE_MOHM * 1e-3
        v = v + self.curve_offset[idx]
        d = soc[:, None] - self.drift_pos[idx]
        sig = self.config.drift_sigma_soc
        v = v + np.sum(self.drift_amp[idx] * np.exp(-0.5 * (d / sig) ** 2), axis=1)
        v = v - self.load_ma * 1e-3 * self.resistance_mohm[idx] * 1e-3
        return np.minimum(v, V_MAX)

    def _refresh_voltage(self, idx: np.ndarray) -> None:
        v = self._loaded_voltage(idx, self.charge_drawn[idx])
        done = v <= V_MIN
        self.true_voltage[idx] = np.where(done, V_MIN, v)
        self.cycle_complete[idx] |= done

    # -- operations ---------------------------------------------------------

    def step(self, dt: float) -> None:
        """Advance the pack dt seconds under the constant load."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        delta = self.load_ma * dt / 3600.0
        active = ~self.cycle_complete
        self.charge_drawn[active] += delta
        self.sim_time += dt
        self._refresh_voltage(np.flatnonzero(active))

    def recharge(self, cell_ids) -> None:
        """Instantly recharge the listed cells and start their next cycle."""
        ids = self._check_ids(cell_ids)
        if ids.size == 0:
            return
        cfg = self.config
        self.charge_drawn[ids] = 0.0
        self.cycle_complete[ids] = False
        self.cycle_index[ids] += 1
        self.capacity_now[ids] *= (1.0 - cfg.aging_rate)
        for cid in ids:
            rng = self._cycle_rng(int(cid), int(self.cycle_index[cid]))
            site = rng.integers(cfg.drift_sites)
            step = rng.uniform(cfg.drift_step_mv_min, cfg.drift_step_mv_max) * 1e-3
            # step across/toward zero: keeps amplitudes bounded while
            # guaranteeing consecutive cycles differ by at least the step
            if self.drift_amp[cid, site] >= 0:
                self.drift_amp[cid, site] -= step
            else:
                self.drift_amp[cid, site] += step
        self._refresh_voltage(ids)

    def _check_ids(self, cell_ids) -> np.ndarray:
        ids = np.asarray(list(cell_ids), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_cells):
            bad = ids[(ids < 0) | (ids >= self.n_cells)]
            raise InvalidCellError(f"cell ids out of range: {bad.tolist()}")
        return ids

    # -- views --------------------------------------------------------------

    def cell_params(self, cell_id: int) -> CellParams:
        (cid,) = self._check_ids([cell_id]).tolist()
        return CellParams(
            cell_id=cid,
            rated_capacity=float(self.rated_capacity[cid]),
            internal_resistance=float(self.resistance_mohm[cid]),
            curve_offset=float(self.curve_offset[cid]),
            aging_rate=self.config.aging_rate,
            rng_seed=self.seed,
        )

    def cell_state(self, cell_id: int) -> CellState:
        (cid,) = self._check_ids([cell_id]).tolist()
        return CellState(
            params=self.cell_params(cid),
            cycle_index=int(self.cycle_index[cid]),
            charge_drawn=float(self.charge_drawn[cid]),
            true_voltage=float(self.true_voltage[cid]),
            cycle_complete=bool(self.cycle_complete[cid]),
        )

    def snapshot(self) -> "Bess":
        """Independent copy; mutating the original leaves it untouched."""
        other = object.__new__(Bess)
        other.__dict__.update(self.__dict__)
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                setattr(other, name, value.copy())
        return other

    def trajectory_row(self, cell_id: int) -> tuple[int, int, float, float]:
        st = self.cell_state(cell_id)
        return (cell_id, st.cycle_index, st.charge_drawn, st.true_voltage)


def create_pack(seed: int, n_cells: int = 100, config: PackConfig | None = None) -> Bess:
    """Build an n-cell pack whose parameters derive entirely from the seed."""
    return Bess(seed, n_cells, config or PackConfig())


def write_trajectory_csv(rows, path) -> None:
    """Dump (cell_id, cycle, charge, voltage) rows in the exchange format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "cycle", "charge_drawn_mAh", "true_voltage_V"])
        for cell_id, cycle, charge, volts in rows:
            w.writerow([cell_id, cycle, f"{charge:.4f}", f"{volts:.6f}"])
