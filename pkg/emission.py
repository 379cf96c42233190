"""
Spontaneous Emission Dynamics
Fixed-step integration of the multi-delay amplitude equation and
reconstruction of the emitted waveguide field
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.signal import lfilter

from models import EmitterConfig, GiantAtomError, delay_spectrum

logger = logging.getLogger(__name__)

STABILITY_BOUND = 1.0 + 1e-4
MAX_DURATION = 1e4
SWITCH_TOLERANCE = 1e-9
HALVING_TOLERANCE = 1e-6
MAX_HALVINGS = 6


class IntegrationError(GiantAtomError):
    """Raised for invalid step sizes, ranges or unstable integration"""
    pass


class Frame(Enum):
    LAB = "lab"
    ROTATING = "rotating"


class HistoryInterpolant:
    """
    Six-point Lagrange interpolant over a uniformly sampled history.

    Stencils stay inside the smooth pieces between breakpoints (the instants
    where a feedback term switches on) and inside the first `known` samples.
    The history vanishes for negative arguments.
    """

    ORDER = 6

    def __init__(self, dt: float, values: np.ndarray, breakpoints: Sequence[float] = (),
                 known: Optional[int] = None):
        self.dt = float(dt)
        self.values = values
        self.known = len(values) if known is None else int(known)
        cuts = np.asarray(breakpoints, dtype=float)
        cuts = np.unique(cuts[cuts > 0])
        self.breakpoints = np.concatenate([[0.0], cuts, [np.inf]])

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape, dtype=complex)
        inside = u >= 0
        if not inside.any():
            return out

        uu = u[inside]
        dt = self.dt
        last = self.known - 1
        m = min(self.ORDER, self.known)
        if m == 1:
            out[inside] = self.values[0]
            return out

        seg = np.searchsorted(self.breakpoints, uu, side='right') - 1
        lo_t = self.breakpoints[seg]
        hi_t = self.breakpoints[seg + 1]
        lo_i = np.minimum(np.ceil(lo_t / dt - 1e-9).astype(int), last)
        finite_hi = np.where(np.isfinite(hi_t), hi_t, last * dt)
        hi_i = np.minimum(np.floor(finite_hi / dt + 1e-9).astype(int), last)

        # too few samples between breakpoints: fall back to the whole history
        narrow = hi_i - lo_i + 1 < m
        lo_i = np.where(narrow, 0, lo_i)
        hi_i = np.where(narrow, last, hi_i)

        centre = np.floor(uu / dt).astype(int)
        start = np.clip(centre - (m // 2 - 1), lo_i, hi_i - m + 1)
        offsets = np.arange(m)
        diffs = (uu / dt - start)[:, None] - offsets[None, :]

        weights = np.ones((uu.size, m))
        for j in range(m):
            for i in range(m):
                if i != j:
                    weights[:, j] *= diffs[:, i] / (j - i)

        nodes = start[:, None] + offsets[None, :]
        out[inside] = (weights * self.values[nodes]).sum(axis=1)
        return out


@dataclass(eq=False)
class AmplitudeTrajectory:
    """Atomic amplitude on a uniform time grid starting at t = 0"""
    times: np.ndarray
    amplitudes: np.ndarray
    frame: Frame
    omega_tau: float
    dt: float
    breakpoints: Tuple[float, ...] = ()
    _interpolant: Optional[HistoryInterpolant] = field(default=None, init=False, repr=False)

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def lab_amplitudes(self) -> np.ndarray:
        """beta(t_k)"""
        if self.frame is Frame.LAB:
            return self.amplitudes
        return self.amplitudes * np.exp(-1j * self.omega_tau * self.times)

    def rotating_amplitudes(self) -> np.ndarray:
        """b(t_k) = beta(t_k) exp(i Omega t_k)"""
        if self.frame is Frame.ROTATING:
            return self.amplitudes
        return self.amplitudes * np.exp(1j * self.omega_tau * self.times)

    def probability(self) -> np.ndarray:
        """|beta(t_k)|^2, identical in both frames"""
        return np.abs(self.amplitudes) ** 2

    def to_frame(self, frame: Frame) -> 'AmplitudeTrajectory':
        values = self.lab_amplitudes() if frame is Frame.LAB else self.rotating_amplitudes()
        return AmplitudeTrajectory(self.times, values, frame, self.omega_tau, self.dt, self.breakpoints)

    def interpolant(self) -> HistoryInterpolant:
        if self._interpolant is None:
            self._interpolant = HistoryInterpolant(self.dt, self.rotating_amplitudes(), self.breakpoints)
        return self._interpolant

    def at(self, times) -> np.ndarray:
        """Interpolated lab-frame beta at arbitrary times (zero before t = 0)"""
        t = np.asarray(times, dtype=float)
        if np.any(t > self.end + SWITCH_TOLERANCE):
            raise IntegrationError(f"requested time {float(t.max()):.6g} beyond trajectory end {self.end:.6g}")
        return self.interpolant()(t) * np.exp(-1j * self.omega_tau * t)

    def __repr__(self):
        return f'<AmplitudeTrajectory steps={len(self.times) - 1} dt={self.dt:.4g} end={self.end:.4g} frame={self.frame.value}>'


@dataclass
class FieldSnapshot:
    """Waveguide field Phi(x, t) = right + left sampled on a spatial grid at one instant"""
    grid: np.ndarray
    right: np.ndarray
    left: np.ndarray
    time: float

    @property
    def values(self) -> np.ndarray:
        return self.right + self.left

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def photon_density(self) -> np.ndarray:
        """|Phi_R|^2 + |Phi_L|^2, the density that integrates to the photon number"""
        return np.abs(self.right) ** 2 + np.abs(self.left) ** 2


def effective_rate(config: EmitterConfig) -> float:
    return config.superradiant_rate()


def default_step(config: EmitterConfig) -> float:
    """Step resolving both the shortest delay and the fastest decay"""
    gamma = config.gamma_tau
    return min(config.min_positive_delay() / 20.0,
               0.02 * 2.0 * math.pi / max(gamma, 1.0),
               0.5 / effective_rate(config))


def default_duration(config: EmitterConfig) -> float:
    return min(60.0 / effective_rate(config), MAX_DURATION)


def _validate(config: EmitterConfig, t_max: float, dt: float):
    if not (dt > 0 and math.isfinite(dt)):
        raise IntegrationError(f"dt must be positive, got {dt}")
    if dt > config.min_positive_delay() / 10.0:
        raise IntegrationError(
            f"dt={dt:.4g} exceeds a tenth of the shortest delay {config.min_positive_delay():.4g}"
        )
    if dt * effective_rate(config) > 1.0:
        raise IntegrationError(f"dt={dt:.4g} does not resolve the decay rate {effective_rate(config):.4g}")
    if t_max < dt:
        raise IntegrationError(f"t_max={t_max:.4g} is shorter than dt={dt:.4g}")
    if t_max < 1.0:
        raise IntegrationError(f"t_max must be at least one delay unit, got {t_max:.4g}")


def _rk4_step(lam, h, y, f0, fm, f1):
    """Classical RK4 for y' = -lam y - f(t) given f at the start, midpoint and end"""
    k1 = -lam * y - f0
    k2 = -lam * (y + 0.5 * h * k1) - fm
    k3 = -lam * (y + 0.5 * h * k2) - fm
    k4 = -lam * (y + h * k3) - f1
    return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _step_coefficients(lam: float, h: float) -> Tuple[complex, complex, complex, complex]:
    """RK4 is linear in (y, f0, fm, f1); recover the four weights from unit inputs"""
    return (_rk4_step(lam, h, 1.0, 0.0, 0.0, 0.0),
            _rk4_step(lam, h, 0.0, 1.0, 0.0, 0.0),
            _rk4_step(lam, h, 0.0, 0.0, 1.0, 0.0),
            _rk4_step(lam, h, 0.0, 0.0, 0.0, 1.0))


def _forcing(history: HistoryInterpolant, d: np.ndarray, c: np.ndarray,
             t_eval: np.ndarray, t_start: np.ndarray) -> np.ndarray:
    """sum_j c_j b(t - d_j) over the terms already switched on at each step start"""
    if d.size == 0:
        return np.zeros(t_eval.shape, dtype=complex)
    active = d[:, None] <= t_start[None, :] + SWITCH_TOLERANCE
    u = np.clip(t_eval[None, :] - d[:, None], 0.0, None)
    values = history(u.ravel()).reshape(u.shape)
    return (c[:, None] * np.where(active, values, 0.0)).sum(axis=0)


def _split_points(kinks: np.ndarray, dt: float, n_steps: int) -> dict:
    """Steps whose interior contains a kink of b, with the kink instants"""
    splits = {}
    for dj in kinks:
        k = int(math.floor(dj / dt))
        if k >= n_steps:
            continue
        if dj - k * dt > SWITCH_TOLERANCE and (k + 1) * dt - dj > SWITCH_TOLERANCE:
            splits.setdefault(k, []).append(float(dj))
    return {k: sorted(v) for k, v in splits.items()}


def _kink_times(d: np.ndarray, horizon: float) -> np.ndarray:
    """Instants where b or one of its low derivatives jumps: sums of up to three delays"""
    # deeper sums only while the delay set is small
    depth = 3 if d.size <= 6 else (2 if d.size <= 30 else 1)
    kinks = set()
    frontier = {0.0}
    for _ in range(depth):
        frontier = {s + dj for s in frontier for dj in d if s + dj <= horizon}
        kinks |= frontier
    return np.array(sorted(kinks), dtype=float)


def integrate_emission(config: EmitterConfig, t_max: Optional[float] = None,
                       dt: Optional[float] = None, frame: Frame = Frame.LAB,
                       tolerance: float = HALVING_TOLERANCE) -> AmplitudeTrajectory:
    """
    Integrate the spontaneous-emission amplitude beta(t) with beta(0) = 1.

    Works in the rotating frame b = beta exp(i Omega t), where

        db/dt = -(gamma/2) sum_j w_j exp(i Omega d_j) b(t - d_j) Theta(t - d_j)

    with (d_j, w_j) the grouped delay spectrum. Runs of ordinary steps are
    advanced together as a first-order linear recurrence; steps containing a
    switch-on instant or one of its propagated kinks are split there.

    An explicit dt is used as given. Otherwise the step starts at
    default_step and is halved until two successive runs agree on
    |beta(t_max)|^2 within tolerance, and the finer run is returned.
    """
    t_max = default_duration(config) if t_max is None else float(t_max)
    if dt is not None:
        trajectory = _integrate_fixed(config, t_max, float(dt))
    else:
        trajectory = _integrate_controlled(config, t_max, tolerance)
    return trajectory if frame is Frame.ROTATING else trajectory.to_frame(frame)


def _integrate_controlled(config: EmitterConfig, t_max: float, tolerance: float) -> AmplitudeTrajectory:
    dt = default_step(config)
    coarse = _integrate_fixed(config, t_max, dt)
    change = math.inf
    for _ in range(MAX_HALVINGS):
        dt *= 0.5
        fine = _integrate_fixed(config, t_max, dt)
        change = abs(float(np.abs(fine.at(t_max)) ** 2 - np.abs(coarse.at(t_max)) ** 2))
        logger.debug(f"step control: dt={dt:.4g} changes |beta(t_max)|^2 by {change:.3g}")
        if change < tolerance:
            return fine
        coarse = fine
    logger.warning(f"step control stopped at dt={dt:.4g}; |beta(t_max)|^2 still changes by {change:.3g}")
    return coarse


def _integrate_fixed(config: EmitterConfig, t_max: float, dt: float) -> AmplitudeTrajectory:
    """Fixed-step run in the rotating frame"""
    _validate(config, t_max, dt)

    tau, weights = delay_spectrum(config)
    gamma = config.gamma_tau
    lam = 0.5 * gamma * weights[0]
    d = tau[1:]
    c = 0.5 * gamma * weights[1:] * np.exp(1j * config.omega_tau * d)

    n_steps = int(math.ceil(t_max / dt - 1e-9))
    times = np.arange(n_steps + 1) * dt
    b = np.zeros(n_steps + 1, dtype=complex)
    b[0] = 1.0
    kinks = _kink_times(d, t_max)
    history = HistoryInterpolant(dt, b, breakpoints=kinks, known=1)

    a, w0, wm, w1 = _step_coefficients(lam, dt)
    max_block = n_steps if d.size == 0 else max(int(math.floor(d[0] / dt)) - 3, 1)
    splits = _split_points(kinks, dt, n_steps)
    pending = sorted(splits)
    logger.debug(f"integrating {config!r}: {n_steps} steps, dt={dt:.4g}, "
                 f"{d.size} delays, block={max_block}, split steps={len(pending)}")

    k = 0
    while k < n_steps:
        history.known = k + 1
        if k in splits:
            y = b[k]
            edges = [times[k]] + splits[k] + [times[k + 1]]
            for lo, hi in zip(edges, edges[1:]):
                h = hi - lo
                start = np.array([lo])
                f = [_forcing(history, d, c, np.array([t]), start)[0] for t in (lo, lo + 0.5 * h, hi)]
                y = _rk4_step(lam, h, y, *f)
            b[k + 1] = y
            pending.pop(0)
            chunk = b[k + 1:k + 2]
            k += 1
        else:
            limit = pending[0] if pending else n_steps
            length = min(max_block, limit - k)
            starts = times[k:k + length]
            g = (w0 * _forcing(history, d, c, starts, starts)
                 + wm * _forcing(history, d, c, starts + 0.5 * dt, starts)
                 + w1 * _forcing(history, d, c, starts + dt, starts))
            chunk, _ = lfilter([1.0], [1.0, -a], g, zi=np.array([a * b[k]]))
            b[k + 1:k + length + 1] = chunk
            k += length

        peak = float(np.abs(chunk).max())
        if not math.isfinite(peak) or peak > STABILITY_BOUND:
            raise IntegrationError(
                f"amplitude reached {peak:.6g} near t={times[k]:.4g}; reduce dt (currently {dt:.4g})"
            )

    return AmplitudeTrajectory(times, b, Frame.ROTATING, config.omega_tau, dt, tuple(kinks))


def trajectory_at(trajectory: AmplitudeTrajectory, times) -> np.ndarray:
    """Lab-frame beta at arbitrary times via the trajectory interpolant"""
    return trajectory.at(times)


def _check_time(trajectory: AmplitudeTrajectory, t: float):
    if t < 0 or t > trajectory.end + SWITCH_TOLERANCE:
        raise IntegrationError(f"snapshot time {t:.6g} outside [0, {trajectory.end:.6g}]")


def _channels(config: EmitterConfig, trajectory: AmplitudeTrajectory, t: float, x: np.ndarray,
              active: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Right-moving (x >= x_m) and left-moving (x < x_m) parts of Phi on the grid x"""
    right = np.zeros(x.shape, dtype=complex)
    left = np.zeros(x.shape, dtype=complex)
    for m, (xm, gm) in enumerate(zip(config.positions, config.strengths)):
        u = t - np.abs(x - xm)
        if active is None:
            on_right = (u > 0) & (x >= xm)
            on_left = (u > 0) & (x < xm)
        else:
            on_right, on_left = active[0][m], active[1][m]
            if not (on_right or on_left):
                continue
        beta = trajectory.at(np.clip(u, 0.0, None))
        right += gm * np.where(on_right, beta, 0.0)
        left += gm * np.where(on_left, beta, 0.0)
    factor = -1j * math.sqrt(0.5 * config.gamma_tau)
    return factor * right, factor * left


def field_snapshot(config: EmitterConfig, trajectory: AmplitudeTrajectory, t: float,
                   grid: Optional[np.ndarray] = None) -> FieldSnapshot:
    """
    Emitted field Phi(x, t) = -i sqrt(gamma/2) sum_m G_m beta(t - |x - x_m|) Theta(t - |x - x_m|).

    The default grid spans the light cone [x_1 - t, x_N + t] at half the
    integration step.
    """
    t = float(t)
    _check_time(trajectory, t)
    if grid is None:
        step = 0.5 * trajectory.dt
        grid = np.arange(config.positions[0] - t, config.positions[-1] + t + 0.5 * step, step)
    x = np.asarray(grid, dtype=float)
    right, left = _channels(config, trajectory, t, x)
    return FieldSnapshot(grid=x, right=right, left=left, time=t)


def field_norm(config: EmitterConfig, trajectory: AmplitudeTrajectory, t: float) -> float:
    """
    Photon number in the waveguide, int |Phi_R|^2 + |Phi_L|^2 dx.

    Counter-propagating channels are orthogonal, so their interference between
    the coupling points carries no probability. Each channel jumps at x_m +- t
    and switches terms at x_m; Simpson's rule runs on every piece between
    those points separately.
    """
    t = float(t)
    _check_time(trajectory, t)
    if t == 0:
        return 0.0
    x = config.position_array
    cuts = np.unique(np.concatenate([x, x - t, x + t]))
    cuts = cuts[(cuts >= x[0] - t) & (cuts <= x[-1] + t)]
    step = 0.5 * trajectory.dt

    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        width = hi - lo
        if width <= 1e-12:
            continue
        mid = 0.5 * (lo + hi)
        inside = t - np.abs(mid - x) > 0
        active = (inside & (mid > x), inside & (mid < x))
        if not (active[0].any() or active[1].any()):
            continue
        points = max(int(math.ceil(width / step)), 2)
        if points % 2:
            points += 1
        xs = np.linspace(lo, hi, points + 1)
        for channel in _channels(config, trajectory, t, xs, active=active):
            total += float(simpson(np.abs(channel) ** 2, x=xs))
    return total
