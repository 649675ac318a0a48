"""Noisy measurement layer standing in for the hardware battery fuel gauge.

A cell must pass a learning cycle (one full simulated discharge) before it
can be measured; the discharge fixes the capacity the gauge uses to turn
residual charge into a state-of-charge percentage.  Measurement noise is a
pure function of (noise seed, timestamp, cell id, stream), implemented with
a counter-based hash so any measurement can be reproduced without replaying
RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import V_MIN, Bess
from .errors import ConfigError, InvalidCellError, UnlearnedCellError

__all__ = [
    "GaugeConfig",
    "Measurement",
    "MeasurementTrace",
    "FuelGauge",
    "MEASUREMENT_PERIOD_S",
]

# Measurement cadence of the gauge loop, seconds of simulated time.
MEASUREMENT_PERIOD_S = 2.0

# Noise stream ids: the gauge loop, challenge-time samples, and the
# learning cycle draw from disjoint streams.
STREAM_LOOP = 0
STREAM_AUTH = 1
STREAM_LEARN = 2

_U64 = np.uint64
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_GOLDEN = _U64(0x9E3779B97F4A7C15)


def _splitmix64(x) -> np.ndarray:
    # uint64 wraparound is the point here; numpy warns on scalar overflow
    with np.errstate(over="ignore"):
        x = (np.asarray(x, dtype=_U64) + _GOLDEN).astype(_U64)
        x = ((x ^ (x >> _U64(30))) * _MIX1).astype(_U64)
        x = ((x ^ (x >> _U64(27))) * _MIX2).astype(_U64)
        return x ^ (x >> _U64(31))


def unit_noise(seed: int, timestamps, cell_ids, channel: int) -> np.ndarray:
    """Deterministic noise in [-1, 1) per (seed, timestamp, cell, channel).

    timestamps and cell_ids broadcast against each other.
    """
    t = np.asarray(timestamps, dtype=np.int64).astype(_U64)
    c = np.asarray(cell_ids, dtype=np.int64).astype(_U64)
    key = _splitmix64(np.int64(seed & 0x7FFFFFFFFFFFFFFF))
    with np.errstate(over="ignore"):
        mixed = (_splitmix64(c ^ key) ^ ((t << _U64(8)) | _U64(channel))) * _GOLDEN
    z = _splitmix64(mixed)
    return (z >> _U64(11)).astype(np.float64) * 2.0 ** -53 * 2.0 - 1.0


@dataclass(frozen=True)
class GaugeConfig:
    """Noise amplitudes, bounded by the instrument's +/-1% error spec.

    The defaults model per-sample jitter of a filtered gauge, far below
    the worst-case bound; both knobs accept anything up to the bound.
    `soc_noise_mode` picks whether the SoC amplitude is absolute
    percentage points or relative to the reading.
    """

    soc_noise_pp: float = 0.02
    volt_noise_rel: float = 1e-5
    soc_noise_mode: str = "absolute"

    def validate(self) -> "GaugeConfig":
        if not 0 <= self.soc_noise_pp <= 1.0:
            raise ConfigError("soc_noise_pp must sit in [0, 1] percentage points")
        if not 0 <= self.volt_noise_rel <= 0.01:
            raise ConfigError("volt_noise_rel must sit in [0, 0.01]")
        if self.soc_noise_mode not in ("absolute", "relative"):
            raise ConfigError(f"unknown soc_noise_mode {self.soc_noise_mode!r}")
        return self


@dataclass(frozen=True)
class Measurement:
    """One gauge sample of one cell."""

    cell_id: int
    soc_percent: float
    voltage: float
    timestamp: int


@dataclass(frozen=True)
class MeasurementTrace:
    """A column-oriented run of samples for one cell."""

    cell_id: int
    timestamps: np.ndarray
    soc_percent: np.ndarray
    voltage: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)

    def measurements(self):
        return [
            Measurement(self.cell_id, float(s), float(v), int(t))
            for t, s, v in zip(self.timestamps, self.soc_percent, self.voltage)
        ]

    @classmethod
    def from_measurements(cls, ms) -> "MeasurementTrace":
        ms = list(ms)
        if not ms:
            raise ValueError("empty trace")
        return cls(
            cell_id=ms[0].cell_id,
            timestamps=np.array([m.timestamp for m in ms], dtype=np.int64),
            soc_percent=np.array([m.soc_percent for m in ms]),
            voltage=np.array([m.voltage for m in ms]),
        )


class FuelGauge:
    """Per-pack measurement frontend with a mandatory learning cycle."""

    def __init__(self, noise_seed: int, config: GaugeConfig | None = None):
        self.noise_seed = int(noise_seed)
        self.config = (config or GaugeConfig()).validate()
        self.learned_capacity: dict[int, float] = {}

    # -- learning ---------------------------------------------------------

    def is_learned(self, cell_id: int) -> bool:
        return cell_id in self.learned_capacity

    def learn_cycle(self, bess: Bess, cell_id: int) -> float:
        """Run one full scratch discharge of the cell and record its capacity."""
        caps, _ = self._discharge_scan(bess, [cell_id])
        self.learned_capacity[int(cell_id)] = caps[0]
        return caps[0]

    def learn_all(self, bess: Bess) -> dict[int, MeasurementTrace]:
        """Learning cycle for every cell at once.

        Returns the full-discharge trace of every cell, measured through
        this gauge with noise applied: the raw material for bootstrapping
        the per-cell models.
        """
        ids = list(range(bess.n_cells))
        caps, traces = self._discharge_scan(bess, ids, record_trace=True)
        for cid, cap in zip(ids, caps):
            self.learned_capacity[cid] = cap
        return traces

    def _discharge_scan(self, bess: Bess, cell_ids, record_trace: bool = False):
        """Discharge a scratch copy from full to cutoff at the gauge cadence.

        Capacity is the cutoff crossing, refined by linear interpolation
        between the last two samples, so its resolution is far below the
        sampling step.
        """
        ids = np.asarray(list(cell_ids), dtype=np.int64)
        if ids.size == 0:
            return [], {}
        if ids.min() < 0 or ids.max() >= bess.n_cells:
            raise InvalidCellError(f"cell ids out of range: {ids.tolist()}")

        scratch = bess.snapshot()
        scratch.charge_drawn[ids] = 0.0
        scratch.cycle_complete[ids] = False
        scratch._refresh_voltage(ids)

        caps = np.full(ids.size, np.nan)
        prev_q = scratch.charge_drawn[ids].copy()
        prev_v = scratch._loaded_voltage(ids, prev_q)
        q_rows, v_rows, live_rows = [], [], []
        t = 0
        while np.isnan(caps).any():
            scratch.step(MEASUREMENT_PERIOD_S)
            t += 1
            q = scratch.charge_drawn[ids]
            v_raw = scratch._loaded_voltage(ids, q)
            crossed = (v_raw <= V_MIN) & np.isnan(caps)
            if crossed.any():
                frac = (prev_v[crossed] - V_MIN) / (prev_v[crossed] - v_raw[crossed])
                caps[crossed] = prev_q[crossed] + frac * (q[crossed] - prev_q[crossed])
            if record_trace:
                q_rows.append(q.copy())
                v_rows.append(scratch.true_voltage[ids].copy())
                live_rows.append(np.isnan(caps) | crossed)
            prev_q, prev_v = q.copy(), v_raw.copy()
            if t > 500_000:
                raise RuntimeError("learning discharge failed to reach cutoff")

        caps_list = [float(c) for c in caps]
        if not record_trace:
            return caps_list, {}

        q_mat = np.stack(q_rows)          # [steps, cells]
        v_mat = np.stack(v_rows)
        live = np.stack(live_rows)
        times = np.arange(1, q_mat.shape[0] + 1, dtype=np.int64)
        traces = {}
        for pos, cid in enumerate(ids):
            mask = live[:, pos]
            cap = caps_list[pos]
            soc_ref = np.clip(100.0 * (cap - q_mat[mask, pos]) / cap, 0.0, 100.0)
            soc, volt = self._apply_noise(
                soc_ref, v_mat[mask, pos], times[mask], int(cid), STREAM_LEARN)
            traces[int(cid)] = MeasurementTrace(int(cid), times[mask], soc, volt)
        return caps_list, traces

    # -- measurement ------------------------------------------------------

    def soc_reference(self, bess: Bess, cell_id: int) -> float:
        """Noise-free SoC the gauge would report for the cell, in percent."""
        cap = self._learned(cell_id)
        q = float(bess.charge_drawn[cell_id])
        return max(0.0, min(100.0, 100.0 * (cap - q) / cap))

    def measure(self, bess: Bess, cell_ids, timestamp: int,
                stream: int = STREAM_LOOP) -> list[Measurement]:
        """One Measurement per requested cell, independent bounded noise."""
        ids = np.asarray(list(cell_ids), dtype=np.int64)
        if ids.size == 0:
            return []
        if ids.min() < 0 or ids.max() >= bess.n_cells:
            raise InvalidCellError(f"cell ids out of range: {ids.tolist()}")
        soc_ref, caps = self.soc_reference_arrays(bess, ids)
        soc, volt = self._apply_noise(soc_ref, bess.true_voltage[ids], timestamp, ids, stream)
        return [
            Measurement(int(c), float(s), float(v), int(timestamp))
            for c, s, v in zip(ids, soc, volt)
        ]

    def soc_reference_arrays(self, bess: Bess, ids: np.ndarray):
        caps = np.array([self._learned(int(c)) for c in ids])
        q = bess.charge_drawn[ids]
        return np.clip(100.0 * (caps - q) / caps, 0.0, 100.0), caps

    def _apply_noise(self, soc_ref, v_true, timestamps, ids, stream):
        cfg = self.config
        u_soc = unit_noise(self.noise_seed, timestamps, ids, 2 * stream)
        u_volt = unit_noise(self.noise_seed, timestamps, ids, 2 * stream + 1)
        if cfg.soc_noise_mode == "absolute":
            soc = soc_ref + cfg.soc_noise_pp * u_soc
        else:
            soc = soc_ref * (1.0 + cfg.soc_noise_pp / 100.0 * u_soc)
        soc = np.clip(soc, 0.0, 100.0)
        volt = v_true * (1.0 + cfg.volt_noise_rel * u_volt)
        return soc, volt

    def _learned(self, cell_id: int) -> float:
        try:
            return self.learned_capacity[int(cell_id)]
        except KeyError:
            raise UnlearnedCellError(
                f"cell {cell_id} has not completed its learning cycle") from None
