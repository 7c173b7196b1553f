"""Monte Carlo simulation of the true dynamics and the discretized filter.

The truth follows an Euler-Maruyama step with process increments scaled by
sqrt(dt); continuous-time measurement noise of a given intensity is realized
per step with covariance (intensity / dt).  The filter recursion is the
exact zero-order-hold discretization of its linear dynamics (stacked
transition matrix ``expm(closed_loop * dt)`` with the matched input map),
which stays stable for arbitrarily strong consensus coupling and agrees
with an explicit Euler step to second order when the coupling is mild.

Reproducibility contract: every random draw of trial ``l`` comes from a
generator seeded with the pair ``(seed, l)``, so per-trial streams are
independent and a trial's trajectory depends only on that pair and the
simulation config.  The noise consumption pattern per trial is fixed: one
vector for the initial state, then fixed-size slabs of per-step rows
holding the process noise followed by the measurement noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matkit
from .filtering import FilterRealization
from .model import TrueSystem

__all__ = ["SimConfig", "SimTrial", "MseSeries", "simulate_trial", "monte_carlo_mse"]

_NOISE_SLAB = 2048
_NOISE_BUDGET_BYTES = 2 * 10**8  # caps the per-chunk noise slab allocation


@dataclass(frozen=True)
class SimConfig:
    """Step size, horizon, trial count, seed, and the recording stride (in steps)."""

    dt: float
    horizon: float
    trials: int
    seed: int
    record_stride: int = 1

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.horizon <= self.dt:
            raise ValueError("need 0 < dt < horizon")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def step_count(self) -> int:
        return int(round(self.horizon / self.dt))

    def record_steps(self) -> np.ndarray:
        steps = list(range(0, self.step_count + 1, self.record_stride))
        if steps[-1] != self.step_count:
            steps.append(self.step_count)
        return np.asarray(steps, dtype=int)


@dataclass(frozen=True)
class SimTrial:
    """One trial's recorded truth and per-sensor estimates."""

    time: np.ndarray
    states: np.ndarray  # (records, n)
    estimates: np.ndarray  # (records, sensors, n)
    overflow_step: int | None


@dataclass(frozen=True)
class MseSeries:
    """Recorded mean squared error, averaged over trials and sensors.

    ``mse[k]`` is the average over sensors of ``per_sensor_mse[k]``.
    ``steady_mse`` averages the per-trial means over the final fifth of the
    horizon; ``steady_se`` is its standard error across trials (NaN for a
    single trial).  Overflowed trials are excluded from every average and
    listed with the step at which they left the finite range.
    """

    time: np.ndarray
    mse: np.ndarray
    per_sensor_mse: np.ndarray
    trials_used: int
    steady_mse: float
    steady_se: float
    overflow_trials: tuple[tuple[int, int], ...] = field(default_factory=tuple)


class _Engine:
    """Vectorized stepping of a batch of trials with per-trial noise streams."""

    def __init__(self, ts: TrueSystem, fr: FilterRealization, cfg: SimConfig) -> None:
        if fr.n != ts.n or fr.sensor_count != ts.sensor_count:
            raise ValueError("filter realization does not match the true system dimensions")
        self.ts = ts
        self.fr = fr
        self.cfg = cfg
        self.n = ts.n
        self.n_sensors = ts.sensor_count
        self.c_stack_t = np.vstack([s.c for s in ts.sensors]).T
        self.m_total = self.c_stack_t.shape[1]
        self.q_half_t = matkit.sqrtm_psd(ts.q).T
        self.r_half_t = matkit.block_diag([matkit.sqrtm_psd(s.r) for s in ts.sensors]).T
        self.sigma0_half_t = matkit.sqrtm_psd(ts.sigma0).T
        # Zero-order-hold discretization of the filter recursion; the
        # augmented exponential also yields the input map when the closed
        # loop is singular.
        q_dim = fr.closed_loop.shape[0]
        aug = np.zeros((q_dim + self.m_total, q_dim + self.m_total))
        aug[:q_dim, :q_dim] = fr.closed_loop * cfg.dt
        aug[:q_dim, q_dim:] = fr.gain_diag * cfg.dt
        exp_aug = matkit.expm(aug)
        self.step_t = exp_aug[:q_dim, :q_dim].T
        self.input_t = exp_aug[:q_dim, q_dim:].T

    def run(self, trial_indices, keep_trajectories: bool = False):
        """Step ``trial_indices`` jointly; per-trial draws stay stream-separated.

        Returns ``(times, sensor_sse, overflow_steps)`` and, when requested,
        the recorded state/estimate trajectories.  ``sensor_sse`` has shape
        (batch, records, sensors) and holds squared error norms; entries from
        overflowed trials are NaN from the first bad record on.
        """
        cfg = self.cfg
        n, n_sensors, m_total = self.n, self.n_sensors, self.m_total
        batch = len(trial_indices)
        rngs = [np.random.default_rng((cfg.seed, int(l))) for l in trial_indices]
        dt = cfg.dt
        sqrt_dt = np.sqrt(dt)
        inv_sqrt_dt = 1.0 / sqrt_dt

        x = self.ts.x0 + np.stack([r.standard_normal(n) for r in rngs]) @ self.sigma0_half_t
        est = np.tile(self.ts.x0, (batch, n_sensors))

        record_steps = cfg.record_steps()
        times = record_steps * dt
        n_records = record_steps.size
        sensor_sse = np.full((batch, n_records, n_sensors), np.nan)
        overflow = np.full(batch, -1, dtype=int)
        if keep_trajectories:
            traj_x = np.empty((batch, n_records, n))
            traj_e = np.empty((batch, n_records, n_sensors, n))

        noise = None
        record_ptr = 0
        cols = n + m_total
        n_steps = cfg.step_count
        # Overflow is a monitored outcome (divergent scenarios), not an error.
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(n_steps + 1):
                if record_ptr < n_records and k == record_steps[record_ptr]:
                    est_blocks = est.reshape(batch, n_sensors, n)
                    err = est_blocks - x[:, None, :]
                    sse = np.einsum("bij,bij->bi", err, err)
                    finite = np.isfinite(sse).all(axis=1)
                    for b in np.flatnonzero(~finite & (overflow < 0)):
                        overflow[b] = k
                    ok = overflow < 0
                    sensor_sse[ok, record_ptr, :] = sse[ok]
                    if keep_trajectories:
                        traj_x[:, record_ptr] = x
                        traj_e[:, record_ptr] = est_blocks
                    record_ptr += 1
                if k == n_steps:
                    break
                pos = k % _NOISE_SLAB
                if pos == 0:
                    noise = np.stack([r.standard_normal((_NOISE_SLAB, cols)) for r in rngs])
                z = noise[:, pos, :n]
                w = noise[:, pos, n:]
                y = x @ self.c_stack_t + (w @ self.r_half_t) * inv_sqrt_dt
                est = est @ self.step_t + y @ self.input_t
                x = x + dt * (x @ self.ts.a.T) + sqrt_dt * (z @ self.q_half_t)

        if keep_trajectories:
            return times, sensor_sse, overflow, traj_x, traj_e
        return times, sensor_sse, overflow


def simulate_trial(
    ts: TrueSystem, fr: FilterRealization, cfg: SimConfig, trial_index: int
) -> SimTrial:
    """Run one trial; the result is fully determined by (seed, trial_index)."""
    engine = _Engine(ts, fr, cfg)
    times, _, overflow, traj_x, traj_e = engine.run([trial_index], keep_trajectories=True)
    step = int(overflow[0])
    return SimTrial(
        time=times,
        states=traj_x[0],
        estimates=traj_e[0],
        overflow_step=step if step >= 0 else None,
    )


def monte_carlo_mse(ts: TrueSystem, fr: FilterRealization, cfg: SimConfig) -> MseSeries:
    """Average squared estimation error over trials, sensors, and record times.

    Trials run in fixed-size batches in increasing trial order, so the
    aggregate is a deterministic function of the config regardless of
    machine or batch boundaries chosen here.
    """
    engine = _Engine(ts, fr, cfg)
    cols = engine.n + engine.m_total
    chunk = max(64, _NOISE_BUDGET_BYTES // (_NOISE_SLAB * cols * 8))
    chunks = []
    overflow_all = []
    times = None
    for start in range(0, cfg.trials, chunk):
        idx = range(start, min(start + chunk, cfg.trials))
        times, sse, overflow = engine.run(list(idx))
        chunks.append(sse)
        overflow_all.append(overflow)
    sensor_sse = np.concatenate(chunks, axis=0)
    overflow = np.concatenate(overflow_all)

    good = overflow < 0
    used = int(np.sum(good))
    if used == 0:
        raise RuntimeError("every trial overflowed; nothing to average")
    per_sensor = sensor_sse[good].mean(axis=0)
    per_trial = sensor_sse[good].mean(axis=2)  # (trials, records)
    mse = per_sensor.mean(axis=1)

    window = times >= 0.8 * cfg.horizon
    if np.sum(window) < 1:
        window = np.zeros_like(window)
        window[-1] = True
    steady_per_trial = per_trial[:, window].mean(axis=1)
    steady_mse = float(steady_per_trial.mean())
    steady_se = (
        float(steady_per_trial.std(ddof=1) / np.sqrt(used)) if used > 1 else float("nan")
    )
    overflow_trials = tuple(
        (int(l), int(step)) for l, step in enumerate(overflow) if step >= 0
    )
    return MseSeries(
        time=times,
        mse=mse,
        per_sensor_mse=per_sensor,
        trials_used=used,
        steady_mse=steady_mse,
        steady_se=steady_se,
        overflow_trials=overflow_trials,
    )
