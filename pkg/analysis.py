"""
Decay-Rate Analysis
Rate extraction from trajectories, disorder-ensemble averaging, power-law
and extended-Debye fits of rate-versus-deviation curves
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import least_squares
from sklearn.linear_model import LinearRegression

from models import EmitterConfig, DisorderSpec, GiantAtomError
from disorder import sample_configuration
from emission import AmplitudeTrajectory, integrate_emission
from spectral import DEFAULT_GRID, SearchWindow, find_poles, slowest_pole
from dfi import BraidedConfig, disordered_braided, kappa_tot, liouvillian, spectrum

logger = logging.getLogger(__name__)

UNDERFLOW_PROBABILITY = 1e-30
DEBYE_UPPER_CAP = 200.0
SERIES_THRESHOLD = 1e-4

Extractor = Callable[[Union[EmitterConfig, BraidedConfig]], float]


class AnalysisError(GiantAtomError):
    """Raised for underflowing trajectories and degenerate or failed fits"""
    pass


class SampleFailure(AnalysisError):
    """A numeric failure tied to one ensemble member"""

    def __init__(self, sample: int, message: str):
        super().__init__(f"sample {sample}: {message}")
        self.sample = sample


class FitModel(Enum):
    POWER_LAW = "power_law"
    DEBYE2 = "debye2"


@dataclass
class RateEstimate:
    kappa: float
    t1: float
    t2: float
    plateau: float


@dataclass
class FitResult:
    model: FitModel
    params: Dict[str, float]
    residual: float
    converged: bool = True

    def predict(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        if self.model is FitModel.POWER_LAW:
            return self.params['c'] * sigma ** self.params['alpha']
        return debye2(sigma, self.params['h'], self.params['w'])

    def as_row(self) -> Dict[str, Any]:
        first, second = self.params.values()
        return {'model': self.model.value, 'param1': first, 'param2': second, 'residual': self.residual}


@dataclass
class FitComparison:
    power_law: FitResult
    debye2: FitResult

    @property
    def best(self) -> FitModel:
        if self.debye2.residual < self.power_law.residual:
            return FitModel.DEBYE2
        return FitModel.POWER_LAW


@dataclass
class EnsembleResult:
    mean: float
    stderr: float
    values: np.ndarray
    failures: List[Dict[str, Any]] = field(default_factory=list)
    indices: Optional[np.ndarray] = None

    @property
    def n_ok(self) -> int:
        return int(self.values.size)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def records(self) -> List[Dict[str, Any]]:
        """One row per sample in index order; failed samples carry the error instead of kappa"""
        indices = np.arange(self.n_ok) if self.indices is None else self.indices
        rows = [{'sample': int(i), 'kappa': float(v), 'error': ''} for i, v in zip(indices, self.values)]
        rows += [{'sample': f['sample'], 'kappa': math.nan, 'error': f"{f['error']}: {f['message']}"}
                 for f in self.failures]
        return sorted(rows, key=lambda row: row['sample'])


SWEEP_COLUMNS = ['sigma_g', 'sigma_x', 'kappa_mean', 'kappa_stderr', 'n_ok', 'n_failed']
SAMPLE_COLUMNS = ['sigma_g', 'sigma_x', 'sample', 'kappa', 'error']


@dataclass
class SweepResult:
    """Ensemble averages on a (sigma_g, sigma_x) grid with the per-sample records behind them"""
    table: pd.DataFrame
    samples: pd.DataFrame


def extract_kappa_min(trajectory: AmplitudeTrajectory, t1: Optional[float] = None,
                      t2: Optional[float] = None) -> RateEstimate:
    """kappa_min = -ln(|beta(t2)|^2 / |beta(t1)|^2) / (2 (t2 - t1))"""
    end = trajectory.end
    t1 = 0.6 * end if t1 is None else float(t1)
    t2 = 0.95 * end if t2 is None else float(t2)
    if not (0 < t1 < t2 <= end):
        raise AnalysisError(f"need 0 < t1 < t2 <= {end:.6g}, got t1={t1:.6g}, t2={t2:.6g}")

    p1, p2 = np.abs(trajectory.at([t1, t2])) ** 2
    if p1 < UNDERFLOW_PROBABILITY or p2 <= 0:
        raise AnalysisError(
            f"|beta|^2 underflows ({p1:.3g} at t1={t1:.6g}); shorten t_max"
        )
    kappa = -math.log(p2 / p1) / (2.0 * (t2 - t1))
    return RateEstimate(kappa=kappa, t1=t1, t2=t2, plateau=float(p2))


def pole_extractor(window: Optional[SearchWindow] = None,
                   grid: Tuple[int, int] = DEFAULT_GRID) -> Extractor:
    """kappa of the slowest pole of the characteristic function"""
    def extract(config: EmitterConfig) -> float:
        return max(-slowest_pole(find_poles(config, window, grid)).real, 0.0)
    return extract


def dde_extractor(t_max: Optional[float] = None, dt: Optional[float] = None,
                  t1: Optional[float] = None, t2: Optional[float] = None) -> Extractor:
    """Two-time rate estimate on an integrated trajectory"""
    def extract(config: EmitterConfig) -> float:
        return extract_kappa_min(integrate_emission(config, t_max, dt), t1, t2).kappa
    return extract


def kappa_tot_extractor() -> Extractor:
    def extract(config: BraidedConfig) -> float:
        return kappa_tot(spectrum(liouvillian(config)))
    return extract


def _sampler(base):
    return disordered_braided if isinstance(base, BraidedConfig) else sample_configuration


def ensemble_average(base: Union[EmitterConfig, BraidedConfig], spec: DisorderSpec,
                     extractor: Extractor, threads: int = 1) -> EnsembleResult:
    """
    Mean and standard error of the extracted rate over spec.samples draws.

    Samples run on a thread pool but are reduced in index order. A sample whose
    draw or extraction fails is recorded and left out of the mean.
    """
    sample = _sampler(base)

    def run(index: int):
        try:
            return index, extractor(sample(base, spec, index)), None
        except GiantAtomError as e:
            return index, None, e

    if spec.is_clean:
        # every member equals the base configuration
        index, value, error = run(0)
        outcomes = [(i, value, error) for i in range(spec.samples)]
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, range(spec.samples)))
    else:
        outcomes = [run(i) for i in range(spec.samples)]

    values = np.array([v for _, v, e in outcomes if e is None], dtype=float)
    indices = np.array([i for i, _, e in outcomes if e is None], dtype=int)
    failures = [{'sample': i, 'error': type(e).__name__, 'message': str(e)}
                for i, _, e in outcomes if e is not None]
    if failures:
        logger.warning(f"excluded {len(failures)} of {spec.samples} samples; first: {failures[0]['message']}")
    if values.size == 0:
        first = failures[0]
        raise SampleFailure(first['sample'], first['message'])

    mean = float(values.mean())
    if values.size < 2 or np.all(values == values[0]):
        stderr = 0.0
        if np.all(values == values[0]):
            mean = float(values[0])
    else:
        stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    return EnsembleResult(mean=mean, stderr=stderr, values=values, failures=failures, indices=indices)


def disorder_sweep(base: Union[EmitterConfig, BraidedConfig], sigma_g: Sequence[float],
                   sigma_x: Sequence[float], samples: int, seed: int, extractor: Extractor,
                   threads: int = 1, min_separation: float = 1e-6) -> SweepResult:
    """
    Ensemble averages over the grid sigma_g x sigma_x (sigma_g outermost).

    Every grid point reuses the same seed so neighbouring points share their
    underlying normal draws.
    """
    rows = []
    records = []
    for sg in sigma_g:
        for sx in sigma_x:
            spec = DisorderSpec(sigma_g=float(sg), sigma_x=float(sx), samples=samples,
                                seed=seed, min_separation=min_separation)
            result = ensemble_average(base, spec, extractor, threads)
            rows.append({
                'sigma_g': float(sg),
                'sigma_x': float(sx),
                'kappa_mean': result.mean,
                'kappa_stderr': result.stderr,
                'n_ok': result.n_ok,
                'n_failed': result.n_failed,
            })
            records += [{'sigma_g': float(sg), 'sigma_x': float(sx), **row} for row in result.records()]
            logger.info(f"sigma_g={sg:.4g} sigma_x={sx:.4g}: kappa={result.mean:.4g} "
                        f"+- {result.stderr:.2g} ({result.n_failed} failed)")
    return SweepResult(table=pd.DataFrame(rows, columns=SWEEP_COLUMNS),
                       samples=pd.DataFrame(records, columns=SAMPLE_COLUMNS))


def _debye_integrand(x: float) -> float:
    if x < SERIES_THRESHOLD:
        return x - 0.5 * x ** 2 + x ** 3 / 12.0 - x ** 5 / 720.0
    return x * x / math.expm1(x)


def _debye_single(sigma: float, h: float, w: float) -> float:
    if sigma == 0:
        return 0.0
    u = w * sigma
    upper = min(1.0 / u, DEBYE_UPPER_CAP)
    integral, _ = quad(_debye_integrand, 0.0, upper, epsabs=0.0, epsrel=1e-11, limit=200)
    return 2.0 * h * u * u * integral


def debye2(sigma, h: float, w: float):
    """
    Extended Debye function of order two,
    2 h (w sigma)^2 int_0^{1/(w sigma)} x^2 / (e^x - 1) dx.

    Quadratic 4 zeta(3) h (w sigma)^2 for small sigma, saturating at h.
    """
    if h <= 0 or w <= 0:
        raise AnalysisError(f"debye2 needs h > 0 and w > 0, got h={h}, w={w}")
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise AnalysisError("debye2 is defined for sigma >= 0")
    values = np.array([_debye_single(float(v), h, w) for v in s.ravel()]).reshape(s.shape)
    return values if values.ndim else float(values)


def _positive_points(points, minimum: int) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise AnalysisError("points must be (sigma, kappa) pairs")
    keep = (data[:, 0] > 0) & (data[:, 1] > 0)
    if keep.sum() < minimum:
        raise AnalysisError(f"need at least {minimum} points with sigma > 0 and kappa > 0, got {int(keep.sum())}")
    return data[keep, 0], data[keep, 1]


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values ** 2)))


def fit_power_law(points) -> FitResult:
    """Least-squares line through (ln sigma, ln kappa): kappa = c sigma^alpha"""
    sigma, kappa = _positive_points(points, 3)
    if np.ptp(sigma) == 0:
        raise AnalysisError("power-law fit is degenerate: all sigma values are equal")
    x, y = np.log(sigma)[:, None], np.log(kappa)
    model = LinearRegression().fit(x, y)
    residual = _rms(model.predict(x) - y)
    return FitResult(model=FitModel.POWER_LAW,
                     params={'c': float(math.exp(model.intercept_)), 'alpha': float(model.coef_[0])},
                     residual=residual)


def _half_height_width(sigma: np.ndarray, kappa: np.ndarray, height: float) -> float:
    order = np.argsort(sigma)
    reached = sigma[order][kappa[order] >= 0.5 * height]
    return 1.0 / float(reached[0])


def fit_debye2(points) -> FitResult:
    """
    Fit (h, w) of the extended Debye function in log space.

    A coarse scan over w (with the optimal h for each w in closed form) seeds a
    Levenberg-Marquardt refinement of (ln h, ln w).
    """
    sigma, kappa = _positive_points(points, 4)
    if sigma.max() < 10.0 * sigma.min():
        raise AnalysisError("Debye fit needs sigma values spanning at least one decade")
    log_kappa = np.log(kappa)

    h0 = float(kappa.max())
    w0 = _half_height_width(sigma, kappa, h0)

    best = None
    for w in w0 * np.logspace(-2, 2, 81):
        shape = np.log(debye2(sigma, 1.0, w))
        log_h = float(np.mean(log_kappa - shape))
        rms = _rms(shape + log_h - log_kappa)
        if best is None or rms < best[0]:
            best = (rms, log_h, math.log(w))
    grid_rms, log_h, log_w = best
    logger.debug(f"Debye grid optimum h={math.exp(log_h):.4g} w={math.exp(log_w):.4g} rms={grid_rms:.4g}")

    def residuals(p):
        return np.log(debye2(sigma, math.exp(p[0]), math.exp(p[1]))) - log_kappa

    try:
        refined = least_squares(residuals, x0=[log_h, log_w], method='lm')
        refined_rms = _rms(refined.fun)
        converged = bool(refined.success) and refined_rms <= grid_rms
    except (ValueError, OverflowError, AnalysisError) as e:
        logger.warning(f"Debye refinement failed: {e!r}")
        converged, refined = False, None

    if converged:
        log_h, log_w = refined.x
        residual = refined_rms
    else:
        residual = grid_rms
        logger.warning("Debye refinement did not improve on the grid optimum")
    return FitResult(model=FitModel.DEBYE2,
                     params={'h': float(math.exp(log_h)), 'w': float(math.exp(log_w))},
                     residual=residual, converged=converged)


def compare_fits(points) -> FitComparison:
    return FitComparison(power_law=fit_power_law(points), debye2=fit_debye2(points))


def tail_mean(points, k: int = 3) -> float:
    """Mean kappa of the k points with the largest sigma"""
    data = np.asarray(points, dtype=float)
    if k < 1 or data.shape[0] < k:
        raise AnalysisError(f"cannot take the tail mean of {k} out of {data.shape[0]} points")
    order = np.argsort(data[:, 0])
    return float(data[order[-k:], 1].mean())


def fitted_tail_mean(fit: FitResult, points, k: int = 3) -> float:
    """Mean of the fitted curve over the sigma values of the k largest-sigma points"""
    data = np.asarray(points, dtype=float)
    if k < 1 or data.shape[0] < k:
        raise AnalysisError(f"cannot take the tail mean of {k} out of {data.shape[0]} points")
    tail = np.sort(data[:, 0])[-k:]
    return float(np.mean(fit.predict(tail)))
