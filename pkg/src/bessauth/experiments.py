"""Reliability experiments: the continuous measurement loop at scale.

Runs the gauge loop over the whole pack for thousands of measurement
cycles, maintaining every cell model and attempting a self-authentication
of every cell at every cycle.  The per-cell models are stacked into
matrices so a 100-cell, 10k-cycle run takes seconds.  Semantics per cell
match the Ducm class (same bootstrap, same refresh policy, same
inversion); each cycle the loop measures, refreshes due models, then
authenticates a fresh sample against them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .battery import V_MAX, V_MIN, Bess, PackConfig, create_pack
from .ducm import DEFAULT_BUCKET_MAH, Ducm, invert_rows
from .gauge import (
    MEASUREMENT_PERIOD_S,
    STREAM_AUTH,
    STREAM_LOOP,
    FuelGauge,
    GaugeConfig,
    unit_noise,
)

__all__ = ["RunResult", "measurement_run", "reliability_sweep", "SweepResult"]


@dataclass
class RunResult:
    """Residual of every authentication attempt of one run."""

    residual_mah: np.ndarray   # [cycles, cells] float32
    in_window: np.ndarray      # [cycles, cells] bool

    def reliability(self, tau_mah: float) -> float:
        """Percent of in-window attempts whose residual clears tau."""
        attempts = int(self.in_window.sum())
        successes = int((self.residual_mah[self.in_window] <= tau_mah).sum())
        return 100.0 * successes / attempts

    def reliability_curve(self, taus) -> list[float]:
        return [self.reliability(t) for t in taus]


def _stack_models(models: list[Ducm]):
    n = len(models)
    bmax = max(m.n_buckets for m in models)
    positions = np.zeros((n, bmax))
    volts = np.full((n, bmax), -np.inf)
    nvalid = np.zeros(n, dtype=np.int64)
    for i, m in enumerate(models):
        b = m.n_buckets
        positions[i, :b] = m.positions
        volts[i, :b] = m.expected_voltage
        nvalid[i] = b
    return positions, volts, nvalid


def measurement_run(seed: int, *, n_cells: int = 100,
                    pack_config: PackConfig | None = None,
                    gauge_config: GaugeConfig | None = None,
                    update_interval: int = 1,
                    n_measurements: int = 10_000,
                    bucket_mah: float = DEFAULT_BUCKET_MAH,
                    refresh_enabled: bool = True) -> RunResult:
    """One seeded run: learn, bootstrap, then cycle the measurement loop.

    refresh_enabled=False freezes every model at its bootstrap state (the
    static pre-deployment baseline).
    """
    pack = create_pack(seed, n_cells, pack_config)
    gauge = FuelGauge(noise_seed=seed ^ 0x6A09E667, config=gauge_config)
    traces = gauge.learn_all(pack)
    models = [
        Ducm.bootstrap(traces[cid], gauge.learned_capacity[cid],
                       bucket_mah=bucket_mah, update_interval=update_interval)
        for cid in range(n_cells)
    ]
    positions, volts, nvalid = _stack_models(models)
    caps = np.array([gauge.learned_capacity[c] for c in range(n_cells)])
    cells = np.arange(n_cells)
    cfg = gauge.config

    pack.recharge(cells)

    residuals = np.empty((n_measurements, n_cells), dtype=np.float32)
    in_window = np.empty((n_measurements, n_cells), dtype=bool)
    pending: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    last_refresh = 0

    for t in range(1, n_measurements + 1):
        pack.step(MEASUREMENT_PERIOD_S)
        done = np.flatnonzero(pack.cycle_complete)
        if done.size:
            pack.recharge(done)

        # gauge loop sample of every cell
        soc_ref = np.clip(100.0 * (caps - pack.charge_drawn) / caps, 0.0, 100.0)
        soc_loop = _noisy_soc(cfg, gauge.noise_seed, t, cells, STREAM_LOOP, soc_ref)
        v_loop = pack.true_voltage * (
            1.0 + cfg.volt_noise_rel * unit_noise(gauge.noise_seed, t, cells, 2 * STREAM_LOOP + 1))
        q_loop = (1.0 - soc_loop / 100.0) * caps
        bidx = np.clip((q_loop // bucket_mah).astype(np.int64), 0, nvalid - 1)
        pending.append((bidx, q_loop, v_loop))

        if refresh_enabled and t - last_refresh >= update_interval:
            for b_i, q_i, v_i in pending:
                positions[cells, b_i] = q_i
                volts[cells, b_i] = v_i
            pending.clear()
            last_refresh = t

        # fresh challenge-time sample, disjoint noise stream
        soc_auth = _noisy_soc(cfg, gauge.noise_seed, t, cells, STREAM_AUTH, soc_ref)
        v_auth = pack.true_voltage * (
            1.0 + cfg.volt_noise_rel * unit_noise(gauge.noise_seed, t, cells, 2 * STREAM_AUTH + 1))
        q_auth = (1.0 - soc_auth / 100.0) * caps

        q_model = invert_rows(positions, volts, nvalid, v_auth)
        residuals[t - 1] = np.abs(q_model - q_auth)
        # the top clamp is excluded: no charge information in the voltage there
        in_window[t - 1] = (v_auth >= V_MIN) & (v_auth < V_MAX)

    return RunResult(residuals, in_window)


def _noisy_soc(cfg: GaugeConfig, seed, t, cells, stream, soc_ref):
    u = unit_noise(seed, t, cells, 2 * stream)
    if cfg.soc_noise_mode == "absolute":
        soc = soc_ref + cfg.soc_noise_pp * u
    else:
        soc = soc_ref * (1.0 + cfg.soc_noise_pp / 100.0 * u)
    return np.clip(soc, 0.0, 100.0)


@dataclass
class SweepResult:
    """Seed-averaged reliability curves in the exchange format."""

    interval_curve: list[tuple[int, float]] = field(default_factory=list)
    tau_curve: list[tuple[float, float]] = field(default_factory=list)
    tau_for_interval_curve: float = 1.0

    def rows(self):
        for interval, rel in self.interval_curve:
            yield ("ducm_vs_interval", self.tau_for_interval_curve, interval, rel)
        for tau, rel in self.tau_curve:
            yield ("static_vs_tau", tau, 0, rel)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["curve", "tau_mah", "update_interval", "reliability_pct"])
            for row in self.rows():
                w.writerow([row[0], row[1], row[2], f"{row[3]:.4f}"])


def reliability_sweep(*, seeds, intervals, taus, tau_for_interval_curve: float = 1.0,
                      n_cells: int = 100, n_measurements: int = 10_000,
                      pack_config: PackConfig | None = None,
                      gauge_config: GaugeConfig | None = None,
                      bucket_mah: float = DEFAULT_BUCKET_MAH,
                      progress=None) -> SweepResult:
    """Seed-averaged reliability vs update interval, and vs tolerance for
    the frozen bootstrap model (the pre-deployment baseline)."""
    seeds = list(seeds)
    intervals = sorted(set(int(i) for i in intervals))
    taus = sorted(set(float(t) for t in taus))
    if not seeds or not intervals or not taus:
        raise ValueError("seeds, intervals and taus must be non-empty")

    result = SweepResult(tau_for_interval_curve=tau_for_interval_curve)
    for interval in intervals:
        rels = []
        for seed in seeds:
            run = measurement_run(
                seed, n_cells=n_cells, pack_config=pack_config,
                gauge_config=gauge_config, update_interval=interval,
                n_measurements=n_measurements, bucket_mah=bucket_mah)
            rels.append(run.reliability(tau_for_interval_curve))
        result.interval_curve.append((interval, float(np.mean(rels))))
        if progress:
            progress(f"interval={interval}: {result.interval_curve[-1][1]:.2f}%")

    static_curves = []
    for seed in seeds:
        run = measurement_run(
            seed, n_cells=n_cells, pack_config=pack_config,
            gauge_config=gauge_config, update_interval=1,
            n_measurements=n_measurements, bucket_mah=bucket_mah,
            refresh_enabled=False)
        static_curves.append(run.reliability_curve(taus))
    means = np.mean(np.array(static_curves), axis=0)
    result.tau_curve = [(tau, float(rel)) for tau, rel in zip(taus, means)]
    if progress:
        progress("static tau curve: " + ", ".join(f"{t}:{r:.1f}%" for t, r in result.tau_curve))
    return result
