"""
Spectral Analysis
Complex poles of the Laplace-domain amplitude, residue weights, the
dark-state condition and mode-sum reconstruction of beta(t)
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Any, Optional, Tuple

import numpy as np

from models import EmitterConfig, GiantAtomError, delay_spectrum

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 200
NEWTON_TOLERANCE = 1e-13
RESIDUAL_TOLERANCE = 1e-10
DEDUPE_TOLERANCE = 1e-8
WINDING_SAMPLES = 4000
DEFAULT_GRID = (60, 60)
MAX_IM_SEEDS = 4000
RECONSTRUCTION_CUTOFF = 20.0


class SpectralError(GiantAtomError):
    """Raised for singular dark-state branches and invalid search windows"""
    pass


@dataclass(frozen=True)
class SearchWindow:
    """Closed rectangle re_min <= Re s <= re_max, im_min <= Im s <= im_max"""
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise SpectralError(f"degenerate search window {self}")
        if not all(math.isfinite(v) for v in (self.re_min, self.re_max, self.im_min, self.im_max)):
            raise SpectralError("search window bounds must be finite")

    def contains(self, s: np.ndarray, slack: float = 0.0) -> np.ndarray:
        s = np.asarray(s)
        return ((s.real >= self.re_min - slack) & (s.real <= self.re_max + slack)
                & (s.imag >= self.im_min - slack) & (s.imag <= self.im_max + slack))

    def boundary(self, samples: int) -> np.ndarray:
        """Counter-clockwise closed boundary path with points spread by edge length"""
        width = self.re_max - self.re_min
        height = self.im_max - self.im_min
        perimeter = 2.0 * (width + height)
        corners = [complex(self.re_min, self.im_min), complex(self.re_max, self.im_min),
                   complex(self.re_max, self.im_max), complex(self.re_min, self.im_max)]
        path = []
        for a, b in zip(corners, corners[1:] + corners[:1]):
            count = max(int(round(samples * abs(b - a) / perimeter)), 8)
            path.append(a + (b - a) * np.linspace(0.0, 1.0, count, endpoint=False))
        path.append(np.array([corners[0]]))
        return np.concatenate(path)

    def to_dict(self) -> Dict[str, float]:
        return {'re_min': self.re_min, 're_max': self.re_max, 'im_min': self.im_min, 'im_max': self.im_max}


@dataclass(eq=False)
class PoleSet:
    """Roots s_n = -kappa_n + i Omega_n found in a window, with residues A_n"""
    poles: np.ndarray
    residues: np.ndarray
    window: SearchWindow
    winding: int
    consistent: bool

    @property
    def kappas(self) -> np.ndarray:
        return -self.poles.real

    @property
    def frequencies(self) -> np.ndarray:
        return self.poles.imag

    def __len__(self):
        return len(self.poles)

    def __repr__(self):
        return f'<PoleSet count={len(self.poles)} winding={self.winding} consistent={self.consistent}>'


def _terms(config: EmitterConfig) -> Tuple[float, np.ndarray, np.ndarray]:
    tau, weights = delay_spectrum(config)
    return 0.5 * config.gamma_tau, tau, weights


def characteristic_residual(s, config: EmitterConfig):
    """F(s) = s + i Omega + (gamma/2) sum_{m,m'} G_m G_m' exp(-|tau_mm'| s)"""
    half_gamma, tau, weights = _terms(config)
    s_arr = np.asarray(s, dtype=complex)
    total = (weights * np.exp(-np.multiply.outer(s_arr, tau))).sum(axis=-1)
    value = s_arr + 1j * config.omega_tau + half_gamma * total
    return value if value.ndim else complex(value)


def characteristic_derivative(s, config: EmitterConfig):
    """F'(s) = 1 - (gamma/2) sum G_m G_m' |tau_mm'| exp(-|tau_mm'| s)"""
    half_gamma, tau, weights = _terms(config)
    s_arr = np.asarray(s, dtype=complex)
    total = (weights * tau * np.exp(-np.multiply.outer(s_arr, tau))).sum(axis=-1)
    value = 1.0 - half_gamma * total
    return value if value.ndim else complex(value)


def residual_scale(s: np.ndarray, config: EmitterConfig) -> np.ndarray:
    """Magnitude of the largest terms of F, the yardstick for the residual check"""
    half_gamma, tau, weights = _terms(config)
    spread = (np.abs(weights) * np.abs(np.exp(-np.multiply.outer(s, tau)))).sum(axis=-1)
    return np.abs(s) + config.omega_tau + half_gamma * spread


def default_window(config: EmitterConfig) -> SearchWindow:
    """
    Re s in [-3 Gamma_eff, 1e-3], Im s in -Omega +- 3 pi / tau_ref.

    tau_ref = max(tau_min, tau_max / 8) keeps nearly coincident coupling points
    from blowing up the window; a single point uses tau_ref = 1.
    """
    if config.n_points == 1:
        half_width = 3.0 * math.pi
    else:
        tau_ref = max(config.min_positive_delay(), config.max_delay() / 8.0)
        half_width = 3.0 * math.pi / tau_ref
    return SearchWindow(
        re_min=-3.0 * config.superradiant_rate(),
        re_max=1e-3,
        im_min=-config.omega_tau - half_width,
        im_max=-config.omega_tau + half_width,
    )


def _seed_grid(config: EmitterConfig, window: SearchWindow, grid: Tuple[int, int]) -> np.ndarray:
    n_re, n_im = grid
    if config.n_points > 1:
        spacing = math.pi / (2.0 * config.max_delay())
        needed = int(math.ceil((window.im_max - window.im_min) / spacing)) + 1
        if needed > n_im:
            n_im = min(needed, MAX_IM_SEEDS)
            logger.debug(f"refined imaginary seed count to {n_im}")
    re = np.linspace(window.re_min, window.re_max, n_re)
    im = np.linspace(window.im_min, window.im_max, n_im)
    return (re[:, None] + 1j * im[None, :]).ravel()


def _newton(seeds: np.ndarray, config: EmitterConfig, max_iter: int) -> Tuple[np.ndarray, np.ndarray]:
    s = seeds.astype(complex).copy()
    active = np.ones(s.shape, dtype=bool)
    converged = np.zeros(s.shape, dtype=bool)
    with np.errstate(all='ignore'):
        for _ in range(max_iter):
            if not active.any():
                break
            sa = s[active]
            step = characteristic_residual(sa, config) / characteristic_derivative(sa, config)
            sa = sa - step
            s[active] = sa
            finite = np.isfinite(sa)
            done = finite & (np.abs(step) <= NEWTON_TOLERANCE * np.maximum(1.0, np.abs(sa)))
            idx = np.flatnonzero(active)
            converged[idx[done]] = True
            active[idx[done | ~finite]] = False
    return s, converged


def _dedupe(roots: np.ndarray) -> np.ndarray:
    kept = []
    for r in roots[np.lexsort((roots.imag, -roots.real))]:
        if all(abs(r - k) > DEDUPE_TOLERANCE for k in kept):
            kept.append(r)
    return np.asarray(kept, dtype=complex)


def winding_count(config: EmitterConfig, window: SearchWindow, samples: int = WINDING_SAMPLES) -> int:
    """Number of roots inside the window from the phase change of F along its boundary"""
    path = window.boundary(samples)
    phase = np.unwrap(np.angle(characteristic_residual(path, config)))
    return int(round((phase[-1] - phase[0]) / (2.0 * math.pi)))


def find_poles(config: EmitterConfig, window: Optional[SearchWindow] = None,
               grid: Tuple[int, int] = DEFAULT_GRID) -> PoleSet:
    """
    Locate every root of F(s) in the window.

    Newton iterations start from a uniform seed grid; seeds that fail to
    converge or leave the window are dropped. Surviving roots are
    de-duplicated, polished and audited against the boundary winding count.
    """
    window = window or default_window(config)
    if grid[0] < 1 or grid[1] < 1:
        raise SpectralError(f"seed grid must be positive, got {grid}")

    seeds = _seed_grid(config, window, grid)
    roots, converged = _newton(seeds, config, NEWTON_MAX_ITER)
    roots = roots[converged & np.isfinite(roots)]
    roots = roots[window.contains(roots, slack=1e-9)]
    if roots.size:
        scale = residual_scale(roots, config)
        roots = roots[np.abs(characteristic_residual(roots, config)) <= RESIDUAL_TOLERANCE * scale]
    roots = _dedupe(roots)

    with np.errstate(all='ignore'):
        for _ in range(2):
            if roots.size:
                roots = roots - characteristic_residual(roots, config) / characteristic_derivative(roots, config)
    roots = _dedupe(roots) if roots.size else roots
    residues = 1.0 / characteristic_derivative(roots, config) if roots.size else np.zeros(0, dtype=complex)

    winding = winding_count(config, window)
    consistent = winding == roots.size
    if not consistent:
        logger.warning(f"{config!r}: found {roots.size} poles but boundary winding count is {winding}")
    if roots.size and roots.real.max() > 1e-9:
        logger.warning(f"{config!r}: growing mode with Re s = {roots.real.max():.3g}")
    logger.debug(f"{config!r}: {roots.size} poles from {seeds.size} seeds")

    return PoleSet(poles=np.asarray(roots, dtype=complex), residues=np.asarray(residues, dtype=complex),
                   window=window, winding=winding, consistent=consistent)


def dark_state_detuning(n_points: int, branch: int, gamma_tau: float) -> float:
    """Omega tau = 2 n pi / N - (1/2) N gamma tau cot(n pi / N)"""
    if branch % n_points == 0:
        raise SpectralError(f"branch n={branch} is singular for N={n_points} (n must not be a multiple of N)")
    angle = branch * math.pi / n_points
    return 2.0 * angle - 0.5 * n_points * gamma_tau / math.tan(angle)


def dark_state_config(n_points: int, gamma_tau: float, branch: int) -> EmitterConfig:
    """Ideal giant atom tuned exactly onto the dark-state manifold of the given branch"""
    omega_tau = dark_state_detuning(n_points, branch, gamma_tau)
    if omega_tau <= 0:
        raise SpectralError(f"branch n={branch} gives non-positive Omega tau {omega_tau:.6g}")
    return EmitterConfig.uniform(n_points, omega_tau, gamma_tau)


def mode_sum(poles: PoleSet, t, horizon: Optional[float] = None):
    """
    beta(t) = sum_n A_n exp(s_n t).

    With a horizon, poles with kappa_n * horizon above the reconstruction
    cutoff are left out.
    """
    s, a = poles.poles, poles.residues
    if horizon is not None:
        keep = -s.real * horizon <= RECONSTRUCTION_CUTOFF
        s, a = s[keep], a[keep]
    t_arr = np.asarray(t, dtype=float)
    value = (a * np.exp(np.multiply.outer(t_arr, s))).sum(axis=-1)
    return value if value.ndim else complex(value)


def dark_poles(poles: PoleSet, tol: float = 1e-8) -> np.ndarray:
    """All poles with decay exponent below tol; the count is the dark-state multiplicity"""
    return poles.poles[poles.kappas < tol]


def slowest_pole(poles: PoleSet) -> complex:
    if len(poles) == 0:
        raise SpectralError("no poles found in the search window")
    return complex(poles.poles[int(np.argmin(poles.kappas))])


def pole_table(poles: PoleSet) -> Dict[str, Any]:
    """Column arrays (re_s, im_s, re_A, im_A) for export"""
    return {
        're_s': poles.poles.real,
        'im_s': poles.poles.imag,
        're_A': poles.residues.real,
        'im_A': poles.residues.imag,
    }
