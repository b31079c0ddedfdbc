"""Random gate-density IQP instances and their exact output states.

Two diagonal families share the same parameters:

* family ``"D"``: exp(i sum_i theta_i Z_{not i}) exp(i sum_{i<j} phi_ij Z_i Z_j),
  whose output distribution is called ``p``;
* family ``"F"``: exp(i sum_i theta_i Z_i) exp(i sum_{i<j} phi_ij Z_i Z_j),
  the conventional IQP circuit, output distribution ``r``.

The state is H^N U_diag |+>^N, so its amplitudes are a Walsh-Hadamard
transform of the diagonal phases.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import fwht_inplace, phase_vector as _phase_vector
from .errors import InvalidInputError, ResourceError
from .transform import n_qubits_of

FAMILIES = ("D", "F")
MAX_QUBITS_HARD = 26
#: Largest N for which a statevector is allocated; raise up to MAX_QUBITS_HARD if needed.
max_qubits = 22

_DEGENERATE_ANGLES = (0.0, math.pi / 2, -math.pi / 2, math.pi, -math.pi)


def make_rng(seed):
    """Philox-4x64 generator keyed by ``seed`` through numpy's SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(frozen=True, eq=False)
class CircuitInstance:
    """One random circuit. ``phi`` maps ordered pairs ``(i, j)``, i < j, to couplings."""

    n_qubits: int
    q: float
    theta: np.ndarray
    phi: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        if self.n_qubits < 2 or self.n_qubits % 2:
            raise InvalidInputError(f"n_qubits must be even and >= 2, got {self.n_qubits}")
        if not 0.0 <= self.q <= 1.0:
            raise InvalidInputError(f"q must lie in [0, 1], got {self.q}")
        if theta.shape != (self.n_qubits,):
            raise InvalidInputError("theta must have one angle per qubit")
        if np.any(np.abs(theta) > math.pi):
            raise InvalidInputError("theta angles must lie in [-pi, pi]")
        for (i, j), val in self.phi.items():
            if not 0 <= i < j < self.n_qubits:
                raise InvalidInputError(f"invalid coupling key {(i, j)}")
            if abs(val) > math.pi:
                raise InvalidInputError(f"coupling {(i, j)} outside [-pi, pi]")

    @property
    def degenerate(self):
        """True if some theta sits at 0, +-pi/2 or +-pi (zero-probability outcomes appear)."""
        return any(
            math.isclose(t, a, abs_tol=1e-15) for t in self.theta for a in _DEGENERATE_ANGLES
        )

    def pair_arrays(self):
        keys = sorted(self.phi)
        pi = np.array([k[0] for k in keys], dtype=np.int64)
        pj = np.array([k[1] for k in keys], dtype=np.int64)
        pv = np.array([self.phi[k] for k in keys], dtype=np.float64)
        return pi, pj, pv

    def __eq__(self, other):
        if not isinstance(other, CircuitInstance):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.q == other.q
            and self.seed == other.seed
            and np.array_equal(self.theta, other.theta)
            and self.phi == other.phi
        )

    def to_dict(self):
        return {
            "n_qubits": self.n_qubits,
            "q": self.q,
            "seed": self.seed,
            "theta": self.theta.tolist(),
            "phi": [[i, j, v] for (i, j), v in sorted(self.phi.items())],
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d):
        phi = {(int(i), int(j)): float(v) for i, j, v in d.get("phi", [])}
        return cls(int(d["n_qubits"]), float(d["q"]), d["theta"], phi, d.get("seed"))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path_or_text):
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            text = Path(path_or_text).read_text()
        return cls.from_dict(json.loads(text))


def sample_instance(n_qubits, q, seed):
    """Draw a random instance at gate density ``q``.

    Draw order is fixed: N angles theta_i, then for every pair (i, j) in
    lexicographic order a gate draw q~ and an angle phi~, whether or not the
    gate ends up switched on.  All draws are U[0, 1) doubles from
    :func:`make_rng`, mapped affinely onto [-pi, pi) for angles.
    """
    if n_qubits % 2 or not 2 <= n_qubits <= MAX_QUBITS_HARD:
        raise InvalidInputError(f"n_qubits must be even in [2, {MAX_QUBITS_HARD}], got {n_qubits}")
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(f"q must lie in [0, 1], got {q}")
    rng = make_rng(seed)
    theta = -math.pi + 2 * math.pi * rng.random(n_qubits)
    pairs = [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]
    draws = rng.random((len(pairs), 2))
    phi = {}
    for (i, j), (q_gate, u) in zip(pairs, draws):
        if q_gate < q:
            phi[(i, j)] = float(-math.pi + 2 * math.pi * u)
    return CircuitInstance(n_qubits, float(q), theta, phi, int(seed))


def _check_family(family):
    if family not in FAMILIES:
        raise InvalidInputError(f"family must be one of {FAMILIES}, got {family!r}")


def phase_function(inst, y, family="D"):
    """Diagonal phase <y|U|y> / i for a single basis index ``y``."""
    _check_family(family)
    y = int(y)
    if not 0 <= y < 1 << inst.n_qubits:
        raise InvalidInputError(f"index {y} out of range for N={inst.n_qubits}")
    zeta = [1 - 2 * ((y >> i) & 1) for i in range(inst.n_qubits)]
    single = sum(t * z for t, z in zip(inst.theta, zeta))
    if family == "D" and bin(y).count("1") % 2:
        single = -single
    pair = sum(v * zeta[i] * zeta[j] for (i, j), v in inst.phi.items())
    return float(single + pair)


def phase_vector(inst, family="D"):
    """Phases for all 2**N basis indices."""
    _check_family(family)
    pi, pj, pv = inst.pair_arrays()
    return _phase_vector(inst.theta, pi, pj, pv, family == "D")


def output_state(inst, family="D"):
    """Exact amplitudes psi(x) = 2^-N sum_y (-1)^(x.y) exp(i phase(y))."""
    _check_family(family)
    if inst.n_qubits > max_qubits:
        raise ResourceError(
            f"N={inst.n_qubits} exceeds the statevector budget (max_qubits={max_qubits})"
        )
    try:
        psi = np.exp(1j * phase_vector(inst, family))
    except MemoryError as exc:
        raise ResourceError(f"cannot allocate 2^{inst.n_qubits} amplitudes") from exc
    fwht_inplace(psi)
    psi /= psi.shape[0]
    return psi


def output_distribution(state):
    """Born probabilities |psi(x)|^2, renormalised by their computed sum."""
    state = np.asarray(state)
    n_qubits_of(state.shape[0])
    probs = state.real**2 + state.imag**2
    probs /= probs.sum()
    return probs


def distribution(inst, family="D"):
    """Shorthand for ``output_distribution(output_state(inst, family))``."""
    return output_distribution(output_state(inst, family))


def parity_permute(dist):
    """Map r <-> p: keep even-parity entries, take the bit-flipped entry for odd parity.

    The permutation is an involution for even N.
    """
    dist = np.asarray(dist)
    n = n_qubits_of(dist.shape[0])
    if n % 2:
        raise InvalidInputError(f"parity permutation requires even N, got N={n}")
    x = np.arange(dist.shape[0], dtype=np.int64)
    odd = (np.bitwise_count(x) & 1).astype(bool)
    src = np.where(odd, x ^ (dist.shape[0] - 1), x)
    return dist[src]


def analytic_product_distribution(theta):
    """prod_k f_{x_k}(theta_k) with f_0 = cos^2 and f_1 = sin^2 (the q = 0 family-F law)."""
    probs = np.ones(1)
    for t in np.asarray(theta, dtype=np.float64):
        # qubit k is bit k, so later qubits vary slowest
        probs = np.kron([math.cos(t) ** 2, math.sin(t) ** 2], probs)
    return probs
