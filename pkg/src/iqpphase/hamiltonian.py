"""Classical parent Hamiltonians of strictly positive distributions.

Writing log p(x) = sum_y J(y) (-1)^(x.y), the coupling spectrum J is the
inverse Walsh-Hadamard transform of log p.  The y = 0 entry carries the
constant (normalisation) part; every other entry is a many-body coupling.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InvalidInputError
from .transform import fwht, fwht_inverse, n_qubits_of

log = logging.getLogger(__name__)

#: Smallest probability accepted by :func:`reconstruct`.
MIN_PROBABILITY = 1e-300
GRID_SIZE = 64
SEARCH_REL_WIDTH = 1e-3
SEARCH_MAX_ITER = 40

_MAGIC = b"IQPJ"
_VERSION = 1
_HEADER = struct.Struct("<4sII")


@dataclass(eq=False)
class CouplingSpectrum:
    """Walsh coefficients J(y) indexed by subset mask y."""

    J: np.ndarray

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=np.float64)
        n_qubits_of(self.J.shape[0])

    @property
    def n_qubits(self):
        return self.J.shape[0].bit_length() - 1

    def summary(self):
        return {
            "n_qubits": self.n_qubits,
            "coupling_l1": coupling_l1(self),
            "normalized_complexity": normalized_complexity(self),
            "support_size": support_size(self),
            "weight_profile": weight_profile(self).tolist(),
        }


def reconstruct(dist):
    """Coupling spectrum of ``dist``: J = W^{-1}{log p}."""
    dist = np.asarray(dist, dtype=np.float64)
    n_qubits_of(dist.shape[0])
    bad = np.flatnonzero(~(dist >= MIN_PROBABILITY))
    if bad.size:
        raise DomainError(
            f"distribution must be strictly positive; index {int(bad[0])} has p={dist[bad[0]]!r}"
        )
    return CouplingSpectrum(fwht_inverse(np.log(dist)))


def reconstruct_distribution(spec):
    """Gibbs distribution proportional to exp(sum_y J(y) (-1)^(x.y))."""
    exponent = fwht(spec.J)
    exponent -= exponent.max()
    probs = np.exp(exponent)
    probs /= probs.sum()
    return probs


def coupling_l1(spec):
    """sum_{y != 0} |J(y)|."""
    return float(np.abs(spec.J[1:]).sum())


def normalized_complexity(spec):
    """log(coupling_l1) / log(N); ``-inf`` when all couplings vanish."""
    total = coupling_l1(spec)
    if total == 0.0:
        return -math.inf
    return math.log(total) / math.log(spec.n_qubits)


def truncate(spec, delta):
    """Zero every y != 0 coupling with |J(y)| < delta; J(0) is always kept."""
    if delta < 0:
        raise InvalidInputError(f"delta must be >= 0, got {delta}")
    J = spec.J.copy()
    small = np.abs(J) < delta
    small[0] = False
    J[small] = 0.0
    return CouplingSpectrum(J)


def support_size(spec, atol=0.0):
    """Number of y != 0 with |J(y)| > atol (exact nonzero count by default)."""
    return int(np.count_nonzero(np.abs(spec.J[1:]) > atol))


def weight_profile(spec):
    """Entry k is sum of |J(y)| over masks of Hamming weight k (entry 0 is 0)."""
    n = spec.n_qubits
    weights = np.bitwise_count(np.arange(1, spec.J.shape[0], dtype=np.int64))
    return np.bincount(weights, weights=np.abs(spec.J[1:]), minlength=n + 1).astype(np.float64)


def l1_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"size mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


@dataclass
class TruncationResult:
    delta: float
    truncated: CouplingSpectrum
    l1: float
    degenerate: bool = False

    @property
    def support_size(self):
        return support_size(self.truncated)


def find_truncation_threshold(dist, epsilon, grid_size=GRID_SIZE):
    """Largest delta found with ||p_delta - p||_1 < epsilon.

    A log-spaced grid between the smallest and largest nonzero |J(y != 0)| is
    scanned for the largest pair (delta_i, delta_{i+1}) whose L1 errors
    straddle ``epsilon``; bisection inside that bracket then stops at relative
    width ``SEARCH_REL_WIDTH`` or after ``SEARCH_MAX_ITER`` halvings.  The
    error is not assumed monotone in delta.
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    dist = np.asarray(dist, dtype=np.float64)
    spec = reconstruct(dist)
    mags = np.abs(spec.J[1:])
    nonzero = mags[mags > 0]

    def error_at(delta):
        cut = truncate(spec, delta)
        return l1_distance(reconstruct_distribution(cut), dist), cut

    if nonzero.size == 0:
        return TruncationResult(0.0, spec, 0.0, degenerate=True)

    lo_mag, hi_mag = float(nonzero.min()), float(nonzero.max())
    grid = np.geomspace(lo_mag, hi_mag, grid_size) if hi_mag > lo_mag else np.array([hi_mag])
    errors = [error_at(d)[0] for d in grid]

    if errors[-1] < epsilon:
        err, cut = error_at(hi_mag)
        log.info("every grid threshold meets epsilon=%g; returning max|J|", epsilon)
        return TruncationResult(hi_mag, cut, err, degenerate=True)

    bracket = None
    for i in range(len(grid) - 2, -1, -1):
        if errors[i] < epsilon <= errors[i + 1]:
            bracket = i
            break
    if bracket is None:
        # only reachable when no grid point passes; delta_1 = min|J| removes nothing
        err, cut = error_at(0.0)
        return TruncationResult(0.0, cut, err)

    lo, hi = float(grid[bracket]), float(grid[bracket + 1])
    for _ in range(SEARCH_MAX_ITER):
        if hi - lo <= SEARCH_REL_WIDTH * hi:
            break
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if error_at(mid)[0] < epsilon:
            lo = mid
        else:
            hi = mid
    err, cut = error_at(lo)
    return TruncationResult(lo, cut, err)


def save_spectrum(spec, path, sidecar=True):
    """Write the binary spectrum file (header + little-endian float64) and a JSON summary."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, spec.n_qubits))
        fh.write(spec.J.astype("<f8").tobytes())
    if sidecar:
        sidecar_path = path.with_suffix(path.suffix + ".json")
        sidecar_path.write_text(json.dumps(spec.summary(), indent=2) + "\n")
    return path


def load_spectrum(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated header")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise InvalidInputError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise InvalidInputError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 << n:
        raise InvalidInputError(f"{path}: expected {1 << n} coefficients, found {len(body) // 8}")
    return CouplingSpectrum(np.frombuffer(body, dtype="<f8").astype(np.float64))
