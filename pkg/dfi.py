"""
Braided Giant Atoms
Lindblad coefficients, the vectorized 16x16 Liouvillian and its spectrum
for two braided giant atoms, with disorder applied to rates and phases

Basis |gg>, |ge>, |eg>, |ee> (first label atom a). Density matrices are
flattened row-major, so vec(A rho B) = (A kron B^T) vec(rho).
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Any, Sequence, Tuple

import numpy as np

from models import DisorderSpec, GiantAtomError, ConfigurationError
from disorder import STRENGTH_STREAM, POSITION_STREAM, DisorderError, standard_normals

logger = logging.getLogger(__name__)

DFI_GAMMA0 = 4.78e-4
DFI_PHI0 = math.pi / 2
EIGEN_RESIDUAL_TOLERANCE = 1e-10
KAPPA_CLAMP = 1e-9

_SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
_ID2 = np.eye(2, dtype=complex)
_ID4 = np.eye(4, dtype=complex)

SM_A = np.kron(_SIGMA_MINUS, _ID2)
SM_B = np.kron(_ID2, _SIGMA_MINUS)
SZ_A = np.kron(_SIGMA_Z, _ID2)
SZ_B = np.kron(_ID2, _SIGMA_Z)
SP_A = SM_A.conj().T
SP_B = SM_B.conj().T

# trace functional on a row-major vectorized 4x4 density matrix
TRACE_ROW = np.eye(4).ravel()


class DFIError(GiantAtomError):
    """Raised when the Liouvillian eigen-decomposition fails its contract"""
    pass


@dataclass(frozen=True)
class BraidedConfig:
    """Two braided giant atoms (points ordered a, b, a, b)"""
    gamma: Tuple[float, float, float, float]
    phi: Tuple[float, float, float]
    omega_a: float = 1.0
    omega_b: float = 1.0

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        phi = tuple(float(p) for p in self.phi)
        if len(gamma) != 4 or len(phi) != 3:
            raise ConfigurationError(f"need 4 decay rates and 3 phases, got {len(gamma)} and {len(phi)}")
        if not all(math.isfinite(v) for v in gamma + phi + (self.omega_a, self.omega_b)):
            raise ConfigurationError("braided parameters must be finite")
        if any(g < 0 for g in gamma):
            raise ConfigurationError(f"decay rates must be nonnegative, got {gamma}")
        object.__setattr__(self, 'gamma', gamma)
        object.__setattr__(self, 'phi', phi)
        object.__setattr__(self, 'omega_a', float(self.omega_a))
        object.__setattr__(self, 'omega_b', float(self.omega_b))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'gamma': list(self.gamma),
            'phi': list(self.phi),
            'omega_a': self.omega_a,
            'omega_b': self.omega_b,
        }


@dataclass(frozen=True)
class LindbladCoefficients:
    omega_a_prime: float
    omega_b_prime: float
    f: float
    Gamma_a: float
    Gamma_b: float
    Gamma_coll: float

    def to_dict(self) -> Dict[str, float]:
        return {
            'omega_a_prime': self.omega_a_prime,
            'omega_b_prime': self.omega_b_prime,
            'f': self.f,
            'Gamma_a': self.Gamma_a,
            'Gamma_b': self.Gamma_b,
            'Gamma_coll': self.Gamma_coll,
        }


@dataclass(eq=False)
class LiouvillianSpectrum:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __repr__(self):
        return f'<LiouvillianSpectrum max Re={self.eigenvalues.real.max():.3g}>'


def ideal_braided(gamma0: float = DFI_GAMMA0, phi0: float = DFI_PHI0,
                  omega_a: float = 1.0, omega_b: float = 1.0) -> BraidedConfig:
    """Equal rates gamma0 at every point and equal phases phi0 between neighbours"""
    return BraidedConfig(gamma=(gamma0,) * 4, phi=(phi0,) * 3, omega_a=omega_a, omega_b=omega_b)


def coefficients(config: BraidedConfig) -> LindbladCoefficients:
    g1, g2, g3, g4 = config.gamma
    p1, p2, p3 = config.phi
    r12, r23, r34, r14 = (math.sqrt(g1 * g2), math.sqrt(g2 * g3),
                          math.sqrt(g3 * g4), math.sqrt(g1 * g4))
    r13, r24 = math.sqrt(g1 * g3), math.sqrt(g2 * g4)
    return LindbladCoefficients(
        omega_a_prime=config.omega_a + r13 * math.sin(p1 + p2),
        omega_b_prime=config.omega_b + r24 * math.sin(p2 + p3),
        f=0.5 * (r12 * math.sin(p1) + r23 * math.sin(p2) + r34 * math.sin(p3)
                 + r14 * math.sin(p1 + p2 + p3)),
        Gamma_a=g1 + g3 + 2.0 * r13 * math.cos(p1 + p2),
        Gamma_b=g2 + g4 + 2.0 * r24 * math.cos(p2 + p3),
        Gamma_coll=(r12 * math.cos(p1) + r23 * math.cos(p2) + r34 * math.cos(p3)
                    + r14 * math.cos(p1 + p2 + p3)),
    )


def _left(op: np.ndarray) -> np.ndarray:
    return np.kron(op, _ID4)


def _right(op: np.ndarray) -> np.ndarray:
    return np.kron(_ID4, op.T)


def _dissipator(jump: np.ndarray) -> np.ndarray:
    number = jump.conj().T @ jump
    return np.kron(jump, jump.conj()) - 0.5 * (_left(number) + _right(number))


def build_liouvillian(coeffs: LindbladCoefficients) -> np.ndarray:
    """16x16 generator L with d vec(rho)/dt = L vec(rho)"""
    hamiltonian = (0.5 * coeffs.omega_a_prime * SZ_A + 0.5 * coeffs.omega_b_prime * SZ_B
                   + coeffs.f * (SM_A @ SP_B + SP_A @ SM_B))
    exchange = SP_A @ SM_B + SP_B @ SM_A
    collective = (np.kron(SM_A, SP_B.T) + np.kron(SM_B, SP_A.T)
                  - 0.5 * (_left(exchange) + _right(exchange)))
    return (-1j * (_left(hamiltonian) - _right(hamiltonian))
            + coeffs.Gamma_a * _dissipator(SM_A)
            + coeffs.Gamma_b * _dissipator(SM_B)
            + coeffs.Gamma_coll * collective)


def liouvillian(config: BraidedConfig) -> np.ndarray:
    return build_liouvillian(coefficients(config))


def spectrum(matrix: np.ndarray) -> LiouvillianSpectrum:
    """Dense eigen-decomposition, checked pair by pair against the residual contract"""
    matrix = np.asarray(matrix, dtype=complex)
    try:
        eigenvalues, eigenvectors = np.linalg.eig(matrix)
    except np.linalg.LinAlgError as e:
        logger.error(f"Liouvillian eigen-decomposition failed: {e}")
        raise DFIError(f"eigen-decomposition failed: {e}") from e

    scale = np.linalg.norm(matrix, 2)
    residual = np.linalg.norm(matrix @ eigenvectors - eigenvectors * eigenvalues[None, :], axis=0)
    worst = float(residual.max())
    if worst > EIGEN_RESIDUAL_TOLERANCE * max(scale, 1e-300) and worst > 0:
        raise DFIError(f"eigenpair residual {worst:.3g} exceeds {EIGEN_RESIDUAL_TOLERANCE} x |L| = {scale:.3g}")
    return LiouvillianSpectrum(matrix=matrix, eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def kappa_tot(spec: LiouvillianSpectrum) -> float:
    """-sum_j Re lambda_j, clamped at zero within rounding"""
    value = -float(spec.eigenvalues.real.sum())
    if value < 0:
        if value < -KAPPA_CLAMP:
            raise DFIError(f"total decay rate {value:.3g} is negative")
        return 0.0
    return value


def trace_rate(matrix: np.ndarray) -> float:
    """-Re tr L, equal to kappa_tot without an eigensolve"""
    return -float(np.trace(matrix).real)


def propagate(spec: LiouvillianSpectrum, rho0: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """rho(t) = sum_j c_j exp(lambda_j t) v_j with c solved from vec(rho0)"""
    vectors = spec.eigenvectors
    try:
        weights = np.linalg.solve(vectors, np.asarray(rho0, dtype=complex).ravel())
    except np.linalg.LinAlgError as e:
        raise DFIError(f"eigenvectors do not form a basis: {e}") from e
    t = np.asarray(times, dtype=float)
    modes = np.exp(np.multiply.outer(t, spec.eigenvalues)) * weights[None, :]
    return (modes @ vectors.T).reshape(t.size, 4, 4)


def disordered_braided(base: BraidedConfig, spec: DisorderSpec, index: int) -> BraidedConfig:
    """
    gamma_m = |G_m|^2 gamma_m(base), phi_m = (1 + L_m) phi_m(base).

    G_m = 1 + N(0, sigma_g) for the four points and L_m = N(0, sigma_x) for the
    three gaps, drawn from the same point streams as single-atom disorder.
    """
    if not (0 <= index < spec.samples):
        raise DisorderError(f"sample index {index} outside ensemble of {spec.samples}")
    if spec.is_clean:
        return base
    g = 1.0 + spec.sigma_g * standard_normals(spec.seed, STRENGTH_STREAM, index, 4)
    offsets = spec.sigma_x * standard_normals(spec.seed, POSITION_STREAM, index, 3)
    return BraidedConfig(
        gamma=tuple(np.abs(g) ** 2 * np.asarray(base.gamma)),
        phi=tuple((1.0 + offsets) * np.asarray(base.phi)),
        omega_a=base.omega_a,
        omega_b=base.omega_b,
    )


def sorted_eigenvalues(values: np.ndarray) -> np.ndarray:
    """Order by imaginary part, then real part"""
    return values[np.lexsort((values.real, values.imag))]


def phi_sweep(gamma0: float, phi_grid: Sequence[float], omega_a: float = 1.0,
              omega_b: float = 1.0) -> np.ndarray:
    """Eigenvalues of the ideal braided Liouvillian at each phase, shape (len(phi_grid), 16)"""
    rows = []
    for phi0 in phi_grid:
        config = ideal_braided(gamma0, float(phi0), omega_a, omega_b)
        rows.append(sorted_eigenvalues(spectrum(liouvillian(config)).eigenvalues))
    logger.debug(f"phase sweep over {len(rows)} points")
    return np.asarray(rows)
