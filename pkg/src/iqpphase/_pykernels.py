"""NumPy implementations of the compiled kernels (used when the extension is unavailable)."""
import numpy as np


def fwht_inplace(a):
    """Unnormalised in-place transform; ``len(a)`` must be a power of two."""
    n = a.shape[0]
    h = 1
    while h < n:
        v = a.reshape(-1, 2, h)
        lo = v[:, 0, :]
        hi = v[:, 1, :]
        diff = lo - hi
        lo += hi
        hi[...] = diff
        h *= 2


def phase_vector(theta, pair_i, pair_j, pair_val, parity_flip):
    n = theta.shape[0]
    y = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=np.float64)
    for i in range(n):
        out += theta[i] * (1 - 2 * ((y >> i) & 1))
    if parity_flip:
        out *= 1 - 2 * (np.bitwise_count(y) & 1).astype(np.float64)
    for i, j, val in zip(pair_i, pair_j, pair_val):
        out += val * (1 - 2 * (((y >> i) ^ (y >> j)) & 1))
    return out
