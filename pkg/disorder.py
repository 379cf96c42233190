"""
Disorder Sampling
Deterministic Gaussian draws for coupling strengths and coupling positions
"""

import logging
from typing import List

import numpy as np

from models import EmitterConfig, DisorderSpec, GiantAtomError

logger = logging.getLogger(__name__)

# independent stream identifiers; braided atoms reuse the same two streams
STRENGTH_STREAM = 0
POSITION_STREAM = 1

MAX_REDRAWS = 100


class DisorderError(GiantAtomError):
    """Raised when a valid disorder sample cannot be drawn"""
    pass


def point_stream(seed: int, stream: int, index: int, point: int) -> np.random.Generator:
    """
    Counter-based generator for one coupling point of one ensemble member.

    The stream is a pure function of (seed, stream, index, point), so any
    process or thread replays the same draws without shared state.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(index), int(point)))
    return np.random.Generator(np.random.Philox(sequence))


def standard_normals(seed: int, stream: int, index: int, count: int) -> np.ndarray:
    """First standard-normal draw of each of `count` point streams"""
    return np.array([
        point_stream(seed, stream, index, point).standard_normal()
        for point in range(count)
    ])


def _check_index(spec: DisorderSpec, index: int):
    if not (0 <= index < spec.samples):
        raise DisorderError(f"sample index {index} outside ensemble of {spec.samples}")


def sample_configuration(base: EmitterConfig, spec: DisorderSpec, index: int) -> EmitterConfig:
    """
    Draw the index-th disordered copy of `base`.

    G_m = G_m(base) + N(0, sigma_g) and x_m = x_m(base) + N(0, sigma_x); for an
    ideal base these are 1 + N(0, sigma_g) and (m - 1) + N(0, sigma_x). A
    position closer than spec.min_separation to an already placed point is
    redrawn from the same point stream.
    """
    _check_index(spec, index)
    strengths = base.strength_array + spec.sigma_g * standard_normals(
        spec.seed, STRENGTH_STREAM, index, base.n_points)

    nominal = base.position_array
    positions: List[float] = []
    for m in range(base.n_points):
        rng = point_stream(spec.seed, POSITION_STREAM, index, m)
        for attempt in range(MAX_REDRAWS + 1):
            candidate = nominal[m] + spec.sigma_x * rng.standard_normal()
            if all(abs(candidate - placed) >= spec.min_separation for placed in positions):
                break
        else:
            raise DisorderError(
                f"could not place coupling point {m} of sample {index} after {MAX_REDRAWS} redraws; "
                f"sigma_x={spec.sigma_x} is too large for N={base.n_points}"
            )
        if attempt:
            logger.debug(f"sample {index}: point {m} redrawn {attempt} times")
        positions.append(candidate)

    return base.with_couplings(strengths, positions)
