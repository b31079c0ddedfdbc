"""Energy-based model p_W(x) = exp(f_W(x)) / Z trained by exact enumeration.

The energy network is a fully connected tanh MLP fed with spins 1 - 2 x_i.
All 2**N energies are evaluated each epoch, so both the normalisation and
the model samples are exact.  Parameters live in one flat vector; per-layer
weights and biases are views into it (layer by layer, weights then bias).
"""
from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .circuit import make_rng
from .errors import InvalidInputError, NumericalError, ResourceError
from .transform import n_qubits_of

ARCHITECTURES = ("adam", "ngd")
MAX_QUBITS = 22

_MAGIC = b"IQPM"
_VERSION = 1


class TrainingDiverged(NumericalError):
    """Raised when loss or parameters become non-finite; ``trace`` holds the epochs so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(eq=False)
class MlpEnergyModel:
    layer_dims: tuple
    has_bias: tuple
    params: np.ndarray = None

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.has_bias = tuple(bool(b) for b in self.has_bias)
        if len(self.has_bias) != len(self.layer_dims) - 1 or self.layer_dims[-1] != 1:
            raise InvalidInputError("layer_dims must end in 1 and has_bias needs one flag per layer")
        size = sum(
            a * b + (b if bias else 0)
            for a, b, bias in zip(self.layer_dims[:-1], self.layer_dims[1:], self.has_bias)
        )
        if self.params is None:
            self.params = np.zeros(size)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (size,):
            raise InvalidInputError(f"expected {size} parameters, got {self.params.shape}")
        self._bind_views()

    def _bind_views(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b, bias in zip(self.layer_dims[:-1], self.layer_dims[1:], self.has_bias):
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            if bias:
                self.biases.append(self.params[off:off + b])
                off += b
            else:
                self.biases.append(None)

    @property
    def n_qubits(self):
        return self.layer_dims[0]

    def copy(self):
        return MlpEnergyModel(self.layer_dims, self.has_bias, self.params.copy())


def param_count(model):
    return int(model.params.shape[0])


def architecture(n_qubits, arch="adam", alpha=30):
    """(layer_dims, has_bias) for the two network profiles."""
    if arch == "adam":
        m = alpha * n_qubits
        return (n_qubits, m, m, 1), (True, True, False)
    if arch == "ngd":
        return (n_qubits, 10 * n_qubits, 1), (True, False)
    raise InvalidInputError(f"arch must be one of {ARCHITECTURES}, got {arch!r}")


def init_model(n_qubits, arch="adam", alpha=30, seed=0):
    """Fresh model with weights and biases drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    if n_qubits < 1 or alpha < 1:
        raise InvalidInputError("n_qubits and alpha must be >= 1")
    dims, bias = architecture(n_qubits, arch, alpha)
    model = MlpEnergyModel(dims, bias)
    rng = make_rng(seed)
    for w, b in zip(model.weights, model.biases):
        bound = 1.0 / math.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, w.shape)
        if b is not None:
            b[...] = rng.uniform(-bound, bound, b.shape)
    return model


def spins(indices, n_qubits):
    """Rows of +-1 spins (bit b -> 1 - 2b) for the given basis indices."""
    idx = np.asarray(indices, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n_qubits)) & 1
    return (1 - 2 * bits).astype(np.float64)


def _forward(model, X):
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w
        if b is not None:
            h += b
        if k < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def _all_indices(model):
    if model.n_qubits > MAX_QUBITS:
        raise ResourceError(f"N={model.n_qubits} exceeds the enumeration budget ({MAX_QUBITS})")
    return np.arange(1 << model.n_qubits)


def energies(model, indices=None):
    """f_W(x) for each index (all 2**N indices by default)."""
    if indices is None:
        indices = _all_indices(model)
    return _forward(model, spins(indices, model.n_qubits))[-1][:, 0]


def energy(model, x):
    return float(energies(model, [int(x)])[0])


def softmax(logits):
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def model_distribution(model):
    """Exact p_W over all 2**N outcomes."""
    return softmax(energies(model))


def exact_sample(dist, count, seed):
    """``count`` i.i.d. indices drawn by inverse CDF; ``seed`` may be an int or a Generator."""
    rng = make_rng(seed)
    cdf = np.cumsum(np.asarray(dist, dtype=np.float64))
    u = rng.random(int(count)) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.shape[0] - 1)


def weighted_grad(model, indices, weights):
    """sum_b weights[b] * grad_W f_W(x_b) via backpropagation."""
    acts = _forward(model, spins(indices, model.n_qubits))
    delta = np.asarray(weights, dtype=np.float64)[:, None]
    grads = []
    for k in range(len(model.weights) - 1, -1, -1):
        a_prev = acts[k]
        gb = delta.sum(axis=0) if model.biases[k] is not None else None
        grads.append((a_prev.T @ delta, gb))
        if k:
            delta = (delta @ model.weights[k].T) * (1.0 - a_prev * a_prev)
    out = np.empty_like(model.params)
    off = 0
    for gw, gb in reversed(grads):
        out[off:off + gw.size] = gw.ravel()
        off += gw.size
        if gb is not None:
            out[off:off + gb.size] = gb
            off += gb.size
    return out


def per_sample_grads(model, indices):
    """Matrix whose row b is grad_W f_W(x_b)."""
    acts = _forward(model, spins(indices, model.n_qubits))
    nb = acts[0].shape[0]
    delta = np.ones((nb, 1))
    blocks = []
    for k in range(len(model.weights) - 1, -1, -1):
        a_prev = acts[k]
        gw = (a_prev[:, :, None] * delta[:, None, :]).reshape(nb, -1)
        blocks.append([gw] + ([delta] if model.biases[k] is not None else []))
        if k:
            delta = (delta @ model.weights[k].T) * (1.0 - a_prev * a_prev)
    return np.concatenate([b for layer in reversed(blocks) for b in layer], axis=1)


def _empirical(samples):
    idx, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
    return idx, counts / counts.sum()


def ce_gradient(model, target_samples, model_samples):
    """Negative cross-entropy gradient <grad f>_target - <grad f>_model from samples."""
    if len(target_samples) == 0 or len(model_samples) == 0:
        raise InvalidInputError("both sample lists must be nonempty")
    ti, tw = _empirical(target_samples)
    mi, mw = _empirical(model_samples)
    idx = np.union1d(ti, mi)
    w = np.zeros(idx.shape[0])
    w[np.searchsorted(idx, ti)] += tw
    w[np.searchsorted(idx, mi)] -= mw
    return weighted_grad(model, idx, w)


def exact_ce_gradient(model, target):
    """The same quantity with both expectations taken over all 2**N outcomes."""
    idx = _all_indices(model)
    return weighted_grad(model, idx, np.asarray(target) - model_distribution(model))


def cross_entropy(model, target):
    """L = -sum_x p(x) log p_W(x), evaluated exactly."""
    f = energies(model)
    log_z = f.max() + math.log(np.exp(f - f.max()).sum())
    return float(-np.dot(target, f - log_z))


def kl(p, q):
    """KL(p || q) between full distributions (0 log 0 = 0)."""
    p = np.asarray(p)
    q = np.asarray(q)
    m = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[m] * (np.log(p[m]) - np.log(q[m]))))


def fisher_matrix(model, model_samples):
    """Empirical covariance of grad f_W over the samples (population normalisation)."""
    if len(model_samples) == 0:
        raise InvalidInputError("need at least one sample")
    idx, w = _empirical(model_samples)
    G = per_sample_grads(model, idx)
    centered = G - w @ G
    return (centered * w[:, None]).T @ centered


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 1024
    epochs: int = 1000
    damping: float | None = None
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ARCHITECTURES:
            raise InvalidInputError(f"optimizer must be adam or ngd, got {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidInputError("batch_size must be >= 1 and epochs >= 0")
        if self.damping is not None and self.damping < 0:
            raise InvalidInputError("damping must be >= 0")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, model):
        return cls(np.zeros_like(model.params), np.zeros_like(model.params))


def adam_step(model, state, grad, cfg):
    """One bias-corrected Adam update of ``model.params`` in place along the loss gradient."""
    state.t += 1
    state.m *= cfg.beta1
    state.m += (1 - cfg.beta1) * grad
    state.v *= cfg.beta2
    state.v += (1 - cfg.beta2) * grad * grad
    m_hat = state.m / (1 - cfg.beta1**state.t)
    v_hat = state.v / (1 - cfg.beta2**state.t)
    model.params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return state


@dataclass
class NgdState:
    fisher: np.ndarray
    grad: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, model):
        p = param_count(model)
        return cls(np.zeros((p, p)), np.zeros(p))


def ngd_step(model, state, F, g, cfg):
    """Natural-gradient update W <- W - lr * (F_t + damping I)^{-1} g_t.

    F_t and g_t are bias-corrected exponential moving averages with rates
    beta2 and beta1.  Default damping is 1e-3 * trace(F_t) / dim.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (param_count(model),) * 2:
        raise InvalidInputError(f"Fisher matrix shape {F.shape} does not match the model")
    state.t += 1
    state.fisher *= cfg.beta2
    state.fisher += (1 - cfg.beta2) * F
    state.grad *= cfg.beta1
    state.grad += (1 - cfg.beta1) * g
    F_hat = state.fisher / (1 - cfg.beta2**state.t)
    g_hat = state.grad / (1 - cfg.beta1**state.t)
    dim = F_hat.shape[0]
    damping = cfg.damping if cfg.damping is not None else 1e-3 * np.trace(F_hat) / dim
    A = F_hat + damping * np.eye(dim)
    try:
        v = scipy.linalg.solve(A, g_hat, assume_a="pos", check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(A) if np.all(np.isfinite(A)) else math.inf
        raise NumericalError(f"natural-gradient solve failed (condition number ~{cond:.3e})") from exc
    model.params -= cfg.learning_rate * v
    return state


@dataclass
class TrainResult:
    model: MlpEnergyModel
    trace: list = field(default_factory=list)

    @property
    def final_kl(self):
        return self.trace[-1]["kl_forward"] if self.trace else math.nan


def train(target, cfg, model, callback=None):
    """Fit ``model`` to ``target`` by exact-sampling cross-entropy descent.

    Each epoch draws ``batch_size`` samples from the target and from the
    current model, steps the optimizer, and records exact KL divergences of
    the updated model in both orientations.  A ``callback`` returning a
    true value stops training after the current epoch.
    """
    target = np.asarray(target, dtype=np.float64)
    if n_qubits_of(target.shape[0]) != model.n_qubits:
        raise InvalidInputError("target size does not match the model input width")
    rng = make_rng(cfg.seed)
    state = AdamState.zeros(model) if cfg.optimizer == "adam" else NgdState.zeros(model)
    p_w = model_distribution(model)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        target_samples = exact_sample(target, cfg.batch_size, rng)
        model_samples = exact_sample(p_w, cfg.batch_size, rng)
        # overflow here is caught below as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            g = -ce_gradient(model, target_samples, model_samples)
            if cfg.optimizer == "adam":
                adam_step(model, state, g, cfg)
            else:
                ngd_step(model, state, fisher_matrix(model, model_samples), g, cfg)
            p_w = model_distribution(model)
        rec = {
            "epoch": epoch,
            "kl_forward": kl(target, p_w),
            "kl_reverse": kl(p_w, target),
            "grad_norm": float(np.linalg.norm(g)),
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        }
        trace.append(rec)
        if not (math.isfinite(rec["kl_forward"]) and np.all(np.isfinite(model.params))):
            raise TrainingDiverged(f"non-finite loss or parameters at epoch {epoch}", trace)
        if callback is not None and callback(rec):
            break
    return TrainResult(model, trace)


def write_trace(trace, path):
    """JSON-lines, one record per epoch."""
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def read_trace(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_model(model, path):
    """Binary checkpoint: magic, version, layer count, dims, bias flags, float64 params."""
    n_layers = len(model.has_bias)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, _VERSION, n_layers))
        fh.write(struct.pack(f"<{n_layers + 1}I", *model.layer_dims))
        fh.write(struct.pack(f"<{n_layers}B", *model.has_bias))
        fh.write(model.params.astype("<f8").tobytes())


def load_model(path):
    raw = Path(path).read_bytes()
    magic, version, n_layers = struct.unpack_from("<4sII", raw)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidInputError(f"{path}: not a model checkpoint (magic={magic!r}, version={version})")
    off = 12
    dims = struct.unpack_from(f"<{n_layers + 1}I", raw, off)
    off += 4 * (n_layers + 1)
    bias = struct.unpack_from(f"<{n_layers}B", raw, off)
    off += n_layers
    params = np.frombuffer(raw[off:], dtype="<f8").astype(np.float64)
    return MlpEnergyModel(dims, bias, params)


def config_dict(cfg):
    return asdict(cfg)
