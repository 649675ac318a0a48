"""Dynamically updating characteristic cell-model.

One model per cell: a table of charge buckets (10 mAh wide by default)
spanning the discharge window between 4.00 V and 3.45 V.  Each entry
holds the charge position and voltage of the sample that last touched
the bucket, so the table is a sampled copy of the cell's current
discharge curve.  Self-authentication inverts the table at the measured
voltage and compares the implied charge position against the charge the
measured SoC claims; the difference in mAh is checked against the
tolerance threshold.

The refresh policy overwrites observed buckets with the newest sample
whenever the configured number of measurement cycles has elapsed, which
is what keeps a tight tolerance usable across cycle drift and aging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import V_MAX, V_MIN
from .errors import ConfigError, IncompleteModelError, VoltageOutOfWindowError
from .gauge import Measurement, MeasurementTrace

__all__ = ["Tolerance", "AuthCheck", "Ducm", "reliability", "DEFAULT_BUCKET_MAH"]

DEFAULT_BUCKET_MAH = 10.0


@dataclass(frozen=True)
class Tolerance:
    """Maximum admissible charge residual for self-authentication.

    `volt_gate_mv` optionally also gates on the raw voltage distance to
    the nearest entry; it defaults to off because the charge residual is
    the quantity the verifier trusts.
    """

    tau_mah: float = 1.0
    volt_gate_mv: float | None = None

    def __post_init__(self):
        if self.tau_mah <= 0:
            raise ConfigError(f"tau_mah must be positive, got {self.tau_mah}")


@dataclass(frozen=True)
class AuthCheck:
    passed: bool
    residual_mah: float


def reliability(successes: int, attempts: int) -> float:
    """Authentication reliability in percent."""
    if attempts <= 0:
        raise ValueError(f"attempts must be positive, got {attempts}")
    if not 0 <= successes <= attempts:
        raise ValueError(f"successes {successes} outside [0, {attempts}]")
    return 100.0 * successes / attempts


def pav_decreasing(values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Least-squares non-increasing fit (pool adjacent violators)."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for x, wt in zip(v, w):
        means.append(float(x))
        wsum.append(float(wt))
        count.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m = (means[-2] * wsum[-2] + means[-1] * wsum[-1]) / (wsum[-2] + wsum[-1])
            c = count[-2] + count[-1]
            ws = wsum[-2] + wsum[-1]
            means[-2:] = [m]
            wsum[-2:] = [ws]
            count[-2:] = [c]
    out = np.empty_like(v)
    pos = 0
    for m, c in zip(means, count):
        out[pos:pos + c] = m
        pos += c
    return out


def invert_rows(positions: np.ndarray, volts: np.ndarray, nvalid: np.ndarray,
                v_meas: np.ndarray) -> np.ndarray:
    """Charge position implied by a measured voltage, one row per model.

    positions/volts are [rows, buckets] with entries beyond nvalid padded
    (volts padding must be -inf).  Anchors on the entry whose voltage is
    nearest the measurement, then interpolates toward the neighbor on the
    side the measurement falls, so an exact voltage match returns the
    anchor's recorded position exactly.  The interpolation factor is
    clipped so a voltage slightly outside the table cannot fling the
    estimate.
    """
    v_meas = np.asarray(v_meas, dtype=float)
    single = volts.ndim == 1
    if single:
        positions = positions[None, :]
        volts = volts[None, :]
        v_meas = np.atleast_1d(v_meas)
    nvalid = np.broadcast_to(np.asarray(nvalid, dtype=np.int64), v_meas.shape)
    rows = np.arange(volts.shape[0])

    anchor = np.abs(volts - v_meas[:, None]).argmin(axis=1)
    w0 = volts[rows, anchor]
    # neighbor on the side of the measurement: the next (lower-voltage)
    # entry when the anchor sits above it, the previous one otherwise
    neigh = np.where(w0 >= v_meas, anchor + 1, anchor - 1)
    neigh = np.clip(neigh, 0, nvalid - 1)
    at_anchor = neigh == anchor  # clipped at an end: step inward instead
    neigh = np.where(at_anchor & (anchor == 0), 1, neigh)
    neigh = np.where(at_anchor & (anchor > 0), anchor - 1, neigh)

    w1 = volts[rows, neigh]
    p0 = positions[rows, anchor]
    p1 = positions[rows, neigh]
    denom = w0 - w1
    safe = np.abs(denom) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(safe, (w0 - v_meas) / np.where(safe, denom, 1.0), 0.0)
    t = np.clip(t, -2.0, 3.0)
    q = p0 + t * (p1 - p0)
    return q[0] if single else q


class Ducm:
    """Per-cell lookup model with interval-gated refresh."""

    def __init__(self, cell_id: int, learned_capacity_mah: float,
                 positions: np.ndarray, volts: np.ndarray,
                 bucket_mah: float = DEFAULT_BUCKET_MAH,
                 update_interval: int = 1, bootstrapped_at: int = 0):
        if update_interval < 1:
            raise ConfigError(f"update_interval must be >= 1, got {update_interval}")
        self.cell_id = int(cell_id)
        self.learned_capacity_mah = float(learned_capacity_mah)
        self.bucket_mah = float(bucket_mah)
        self.update_interval = int(update_interval)
        self.positions = np.asarray(positions, dtype=float)
        self.expected_voltage = pav_decreasing(np.asarray(volts, dtype=float))
        self.entry_updated = np.full(len(self.positions), int(bootstrapped_at), dtype=np.int64)
        self.last_update = int(bootstrapped_at)

    # -- construction -------------------------------------------------------

    @classmethod
    def bootstrap(cls, trace, learned_capacity_mah: float,
                  bucket_mah: float = DEFAULT_BUCKET_MAH,
                  update_interval: int = 1) -> "Ducm":
        """Build the model from one full-discharge measurement trace.

        Every bucket between full and the discharge cutoff must be
        covered; bucket voltage and position are the means of the trace
        samples that fall inside it.
        """
        if not isinstance(trace, MeasurementTrace):
            trace = MeasurementTrace.from_measurements(trace)
        cap = float(learned_capacity_mah)
        charge = (1.0 - trace.soc_percent / 100.0) * cap
        n_buckets = int(np.floor(max(charge.max(), cap - bucket_mah * 0.5) / bucket_mah)) + 1
        if n_buckets < 2:
            raise IncompleteModelError(range(2))
        idx = np.clip((charge // bucket_mah).astype(np.int64), 0, n_buckets - 1)
        counts = np.bincount(idx, minlength=n_buckets)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise IncompleteModelError(missing.tolist())
        pos = np.bincount(idx, weights=charge, minlength=n_buckets) / counts
        volts = np.bincount(idx, weights=trace.voltage, minlength=n_buckets) / counts
        model = cls(trace.cell_id, cap, pos, volts, bucket_mah, update_interval,
                    bootstrapped_at=int(trace.timestamps.max()))
        return model

    # -- maintenance --------------------------------------------------------

    @property
    def n_buckets(self) -> int:
        return len(self.positions)

    def charge_from_soc(self, soc_percent: float) -> float:
        return (1.0 - soc_percent / 100.0) * self.learned_capacity_mah

    def refresh(self, recent_measurements, now: int) -> bool:
        """Ingest pending samples if the update interval has elapsed.

        Overwrites each observed bucket with its newest sample; returns
        whether anything was applied.
        """
        if now - self.last_update < self.update_interval:
            return False
        self.last_update = int(now)
        applied = False
        for m in sorted(recent_measurements, key=lambda m: m.timestamp):
            q = self.charge_from_soc(m.soc_percent)
            b = int(q // self.bucket_mah)
            if not 0 <= b < self.n_buckets:
                b = min(max(b, 0), self.n_buckets - 1)
            self.positions[b] = q
            self.expected_voltage[b] = m.voltage
            self.entry_updated[b] = m.timestamp
            applied = True
        if applied:
            d = np.diff(self.expected_voltage)
            if (d > 0).any():
                self.expected_voltage = pav_decreasing(self.expected_voltage)
        return applied

    # -- authentication -----------------------------------------------------

    def check(self, m: Measurement, tol: Tolerance) -> AuthCheck:
        """Self-authenticate one measurement against this model.

        The window excludes the top-of-charge clamp: at the full-charge
        plateau the voltage observable carries no charge information, so
        the cell is not authenticatable there (same treatment as a
        voltage outside the window).
        """
        if not V_MIN <= m.voltage < V_MAX:
            raise VoltageOutOfWindowError(
                f"voltage {m.voltage:.4f} V outside [{V_MIN}, {V_MAX}) window")
        q_model = float(invert_rows(self.positions, self.expected_voltage,
                                    np.int64(self.n_buckets), np.float64(m.voltage)))
        q_meas = self.charge_from_soc(m.soc_percent)
        residual = abs(q_model - q_meas)
        passed = residual <= tol.tau_mah
        if passed and tol.volt_gate_mv is not None:
            gap_mv = float(np.abs(self.expected_voltage - m.voltage).min()) * 1e3
            passed = gap_mv <= tol.volt_gate_mv
        return AuthCheck(passed, residual)

    # -- export ---------------------------------------------------------------

    def csv_rows(self):
        """Rows of the exchange dump: cell_id,bucket_mAh,expected_voltage_V,last_update."""
        for b in range(self.n_buckets):
            yield (self.cell_id, b * self.bucket_mah,
                   float(self.expected_voltage[b]), int(self.entry_updated[b]))
