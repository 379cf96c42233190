"""
Core Models for the Giant-Atom Disorder Toolkit
Dimensionless parameter types, coupling-point geometry and unit conversions

Internal units: hbar = 1, v = 1 and the nominal inter-point delay tau = 1.
User-facing frequencies follow the figure-caption convention (value / 2pi).
"""

import math
import logging
from dataclasses import dataclass, replace
from typing import Dict, Any, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# delays closer than this (in units of tau) are treated as one delay
DELAY_MERGE_TOLERANCE = 1e-12


class GiantAtomError(Exception):
    """Base exception for every failure raised by the toolkit"""
    pass


class ConfigurationError(GiantAtomError):
    """Invalid parameter values for a configuration type"""
    pass


def to_internal(value_over_2pi: float) -> float:
    """Convert a caption-style value (x / 2pi) to internal units"""
    return TWO_PI * value_over_2pi


def to_caption(value: float) -> float:
    """Convert an internal value to the caption convention (x / 2pi)"""
    return value / TWO_PI


@dataclass(frozen=True)
class EmitterConfig:
    """One giant atom coupled to the waveguide at n_points locations"""
    n_points: int
    omega_tau: float
    gamma_tau: float
    strengths: Tuple[float, ...]
    positions: Tuple[float, ...]

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 1:
            raise ConfigurationError(f"n_points must be a positive integer, got {self.n_points}")
        strengths = tuple(float(g) for g in self.strengths)
        positions = tuple(float(x) for x in self.positions)
        if len(strengths) != self.n_points or len(positions) != self.n_points:
            raise ConfigurationError(
                f"expected {self.n_points} strengths and positions, "
                f"got {len(strengths)} and {len(positions)}"
            )
        if not (self.gamma_tau > 0):
            raise ConfigurationError(f"gamma_tau must be positive, got {self.gamma_tau}")
        if not (self.omega_tau > 0):
            raise ConfigurationError(f"omega_tau must be positive, got {self.omega_tau}")
        if not all(math.isfinite(v) for v in strengths + positions):
            raise ConfigurationError("strengths and positions must be finite")

        # keep (position, strength) pairs together when ordering left to right
        order = sorted(range(self.n_points), key=lambda m: positions[m])
        positions = tuple(positions[m] for m in order)
        strengths = tuple(strengths[m] for m in order)
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ConfigurationError("coupling positions must be distinct")

        object.__setattr__(self, 'n_points', int(self.n_points))
        object.__setattr__(self, 'omega_tau', float(self.omega_tau))
        object.__setattr__(self, 'gamma_tau', float(self.gamma_tau))
        object.__setattr__(self, 'strengths', strengths)
        object.__setattr__(self, 'positions', positions)

    @classmethod
    def uniform(cls, n_points: int, omega_tau: float, gamma_tau: float) -> 'EmitterConfig':
        """Ideal giant atom: unit strengths at positions 0, 1, ..., N-1"""
        return cls(
            n_points=n_points,
            omega_tau=omega_tau,
            gamma_tau=gamma_tau,
            strengths=tuple(1.0 for _ in range(n_points)),
            positions=tuple(float(m) for m in range(n_points)),
        )

    @classmethod
    def from_segments(cls, omega_tau: float, gamma_tau: float,
                      segment_omega_tau: Sequence[float],
                      point_gamma_tau: Sequence[float]) -> 'EmitterConfig':
        """
        Build a configuration from per-segment phases and per-point rates.

        segment_omega_tau[m] is Omega * tau_m for the m-th gap between
        neighbouring points; point_gamma_tau[m] is gamma_m * tau for the m-th
        point. Both are in internal units. Positions are measured in units of
        the nominal tau implied by omega_tau, strengths are sqrt(gamma_m / gamma).
        """
        if len(point_gamma_tau) != len(segment_omega_tau) + 1:
            raise ConfigurationError(
                f"need one more point rate than segments, got {len(point_gamma_tau)} "
                f"rates for {len(segment_omega_tau)} segments"
            )
        gaps = [phase / omega_tau for phase in segment_omega_tau]
        positions = np.concatenate([[0.0], np.cumsum(gaps)])
        strengths = [math.sqrt(rate / gamma_tau) for rate in point_gamma_tau]
        return cls(
            n_points=len(point_gamma_tau),
            omega_tau=omega_tau,
            gamma_tau=gamma_tau,
            strengths=tuple(strengths),
            positions=tuple(positions),
        )

    @property
    def strength_array(self) -> np.ndarray:
        return np.asarray(self.strengths, dtype=float)

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    def delays(self) -> np.ndarray:
        """Matrix of travel times tau_mm' in units of tau"""
        return delays(self)

    def with_couplings(self, strengths: Sequence[float], positions: Sequence[float]) -> 'EmitterConfig':
        """Copy with new strengths and positions (re-sorted on construction)"""
        return replace(self, strengths=tuple(strengths), positions=tuple(positions))

    def min_positive_delay(self) -> float:
        """Smallest nonzero travel time, or inf for a single point"""
        gaps = np.diff(self.position_array)
        return float(gaps.min()) if gaps.size else math.inf

    def max_delay(self) -> float:
        return float(self.positions[-1] - self.positions[0])

    def superradiant_rate(self) -> float:
        """(gamma/2)(sum |G_m|)^2, i.e. N^2 gamma / 2 for the ideal atom"""
        return 0.5 * self.gamma_tau * float(np.abs(self.strength_array).sum()) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_points': self.n_points,
            'omega_tau_2pi': to_caption(self.omega_tau),
            'gamma_tau_2pi': to_caption(self.gamma_tau),
            'strengths': list(self.strengths),
            'positions': list(self.positions),
        }

    def __repr__(self):
        return (f'<EmitterConfig N={self.n_points} '
                f'Omega*tau/2pi={to_caption(self.omega_tau):.6g} '
                f'gamma*tau/2pi={to_caption(self.gamma_tau):.6g}>')


@dataclass(frozen=True)
class DisorderSpec:
    """Gaussian disorder of coupling strengths and coupling positions"""
    sigma_g: float = 0.0
    sigma_x: float = 0.0
    samples: int = 1
    seed: int = 0
    min_separation: float = 1e-6

    def __post_init__(self):
        if not (self.sigma_g >= 0 and self.sigma_x >= 0):
            raise ConfigurationError(
                f"disorder deviations must be nonnegative, got sigma_g={self.sigma_g}, sigma_x={self.sigma_x}"
            )
        if int(self.samples) != self.samples or self.samples < 1:
            raise ConfigurationError(f"samples must be a positive integer, got {self.samples}")
        if int(self.seed) != self.seed or not (0 <= self.seed < 2 ** 64):
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not (self.min_separation >= 0):
            raise ConfigurationError(f"min_separation must be nonnegative, got {self.min_separation}")

    @property
    def is_clean(self) -> bool:
        return self.sigma_g == 0 and self.sigma_x == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sigma_g': self.sigma_g,
            'sigma_x': self.sigma_x,
            'samples': self.samples,
            'seed': self.seed,
            'min_separation': self.min_separation,
        }


def delays(config: EmitterConfig) -> np.ndarray:
    """Symmetric N x N matrix of |x_m - x_m'| with zero diagonal"""
    x = config.position_array
    return np.abs(x[:, None] - x[None, :])


def delay_spectrum(config: EmitterConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Group the double sum over coupling pairs by travel time.

    Returns (distinct delays ascending, summed G_m G_m' per delay). The first
    entry is the zero delay carrying sum_m G_m^2.
    """
    tau = delays(config).ravel()
    g = config.strength_array
    weights = np.outer(g, g).ravel()
    order = np.argsort(tau, kind='stable')
    tau, weights = tau[order], weights[order]

    grouped_tau = [tau[0]]
    grouped_weight = [weights[0]]
    for d, w in zip(tau[1:], weights[1:]):
        if d - grouped_tau[-1] <= DELAY_MERGE_TOLERANCE:
            grouped_weight[-1] += w
        else:
            grouped_tau.append(d)
            grouped_weight.append(w)
    return np.asarray(grouped_tau), np.asarray(grouped_weight)
