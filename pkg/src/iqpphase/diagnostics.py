"""Entanglement spectra, gap-ratio statistics, Porter-Thomas comparison and smoothing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, signal

from .errors import DomainError, InvalidInputError
from .transform import n_qubits_of

DEFAULT_FLOOR = 1e-12
DENOMINATOR_FLOOR = 1e-14
PT_BINS = 50
PT_RANGE = 10.0

_SURMISE = {
    "GOE": (1, 8.0 / 27.0),
    "GUE": (2, 4.0 * math.pi / (81.0 * math.sqrt(3.0))),
}


@dataclass
class EntanglementSpectrum:
    eigenvalues: np.ndarray
    n_qubits: int

    @property
    def cut(self):
        return self.n_qubits // 2


@dataclass
class BinnedDistribution:
    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.edges.shape[0] != self.masses.shape[0] + 1:
            raise InvalidInputError("need exactly one more edge than masses")


def entanglement_spectrum(state):
    """Eigenvalues of rho_A for the cut between qubits [0, N/2) and [N/2, N)."""
    state = np.asarray(state)
    n = n_qubits_of(state.shape[0])
    if n % 2:
        raise InvalidInputError(f"equal bipartition needs even N, got N={n}")
    half = 1 << (n // 2)
    # C-order reshape puts the high qubits on rows; transpose so rows index qubits 0..N/2-1
    m = state.reshape(half, half).T
    sv = np.linalg.svd(m, compute_uv=False)
    lam = np.sort(sv**2)
    np.clip(lam, 0.0, None, out=lam)
    return EntanglementSpectrum(lam, n)


def _eigs(spec):
    return spec.eigenvalues if isinstance(spec, EntanglementSpectrum) else np.asarray(spec, float)


def entanglement_entropy(spec):
    """von Neumann entropy in nats, with 0 log 0 = 0."""
    lam = _eigs(spec)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def gap_ratios(spec, floor=DEFAULT_FLOOR):
    """Unfolded ratios u_i = (l_{i+1} - l_i) / (l_{i+2} - l_{i+1}) of the ascending spectrum.

    Eigenvalues below ``floor`` are discarded first, and ratios whose
    denominator is below 1e-14 are dropped.
    """
    if floor < 0:
        raise InvalidInputError("floor must be >= 0")
    lam = np.sort(_eigs(spec))
    lam = lam[lam >= floor]
    if lam.size < 3:
        return np.empty(0)
    gaps = np.diff(lam)
    num, den = gaps[:-1], gaps[1:]
    keep = den >= DENOMINATOR_FLOOR
    return num[keep] / den[keep]


def fold_ratios(ratios):
    """min(u, 1/u), mapping ratios onto [0, 1]."""
    u = np.asarray(ratios, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.minimum(u, 1.0 / u)


def surmise_pdf(ensemble, r):
    """Gap-ratio surmise P(r) = (r + r^2)^b / (Z (1 + r + r^2)^(1 + 3b/2))."""
    try:
        beta, z = _SURMISE[ensemble.upper()]
    except (KeyError, AttributeError):
        raise InvalidInputError(f"ensemble must be GOE or GUE, got {ensemble!r}") from None
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise InvalidInputError("surmise is defined for r >= 0")
    out = (r + r * r) ** beta / (1.0 + r + r * r) ** (1.0 + 1.5 * beta) / z
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _folded_cdf_table(ensemble, points=4001):
    x = np.linspace(0.0, 1.0, points)
    # folding maps r and 1/r together; both halves carry equal mass
    dens = 2.0 * surmise_pdf(ensemble, x)
    cdf = integrate.cumulative_simpson(dens, x=x, initial=0.0)
    return x, cdf / cdf[-1]


def folded_surmise_cdf(ensemble, x):
    """CDF of min(r, 1/r) under the surmise, interpolated from a fine Simpson table."""
    grid, cdf = _folded_cdf_table(ensemble.upper())
    return np.interp(np.asarray(x, dtype=np.float64), grid, cdf)


def ks_distance(folded, ensemble):
    """Kolmogorov-Smirnov distance between folded ratios and the folded surmise."""
    s = np.sort(np.asarray(folded, dtype=np.float64))
    if s.size == 0:
        return math.nan
    model = folded_surmise_cdf(ensemble, s)
    n = s.size
    upper = np.arange(1, n + 1) / n - model
    lower = model - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def porter_thomas_pdf(p, dim):
    """Exponential law d exp(-p d) of outcome probabilities for a Haar-random state."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise InvalidInputError("p must be >= 0")
    out = dim * np.exp(-p * dim)
    return float(out) if out.ndim == 0 else out


def porter_thomas_histogram(dist, n_bins=PT_BINS):
    """Histogram of the 2^N values p(x) on [0, 10/d] and the matching binned PT law.

    Values beyond 10/d fall in the last bin; the PT masses are renormalised
    over the binned range.
    """
    if n_bins < 1:
        raise InvalidInputError("need at least one bin")
    dist = np.asarray(dist, dtype=np.float64)
    d = dist.shape[0]
    edges = np.linspace(0.0, PT_RANGE / d, n_bins + 1)
    idx = np.minimum((dist * (n_bins * d / PT_RANGE)).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.float64)
    observed = BinnedDistribution(edges, counts / counts.sum())
    cdf = -np.expm1(-edges * d)
    q = np.diff(cdf)
    expected = BinnedDistribution(edges, q / q.sum())
    return observed, expected


def kl_divergence(P, Q):
    """sum_k P_k log(P_k / Q_k) with 0 log 0 = 0."""
    P = P.masses if isinstance(P, BinnedDistribution) else np.asarray(P, dtype=np.float64)
    Q = Q.masses if isinstance(Q, BinnedDistribution) else np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape:
        raise InvalidInputError(f"support mismatch: {P.shape} vs {Q.shape}")
    mask = P > 0
    if np.any(Q[mask] <= 0):
        raise DomainError("P is not absolutely continuous with respect to Q")
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def kl_to_porter_thomas(dist, n_bins=PT_BINS):
    """KL(P || Q) between the binned outcome probabilities and binned Porter-Thomas."""
    if n_bins < 2:
        raise InvalidInputError("n_bins must be >= 2")
    observed, expected = porter_thomas_histogram(dist, n_bins)
    return kl_divergence(observed, expected)


def savitzky_golay_smooth(series, window=9, order=3):
    """9-point cubic Savitzky-Golay smoothing; edges use the one-sided window fit."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < window:
        raise InvalidInputError(f"need a 1-d series of length >= {window}")
    return signal.savgol_filter(series, window, order, mode="interp")


def ratio_histogram(ratios, bins=50, upper=None):
    """Normalised histogram of gap ratios as a :class:`BinnedDistribution`."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if upper is None:
        upper = 1.0 if ratios.size == 0 or ratios.max() <= 1.0 else float(np.quantile(ratios, 0.99))
    edges = np.linspace(0.0, upper, bins + 1)
    counts, _ = np.histogram(np.clip(ratios, 0.0, upper), bins=edges)
    total = counts.sum()
    masses = counts / total if total else counts.astype(float)
    return BinnedDistribution(edges, masses)


def write_histogram_csv(path, hist):
    """One row per bin: left edge, right edge, mass."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_lo", "edge_hi", "mass"])
        for lo, hi, m in zip(hist.edges[:-1], hist.edges[1:], hist.masses):
            w.writerow([repr(float(lo)), repr(float(hi)), repr(float(m))])


def write_series_csv(path, columns):
    """Write equal-length named series; ``columns`` maps header name to values."""
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
