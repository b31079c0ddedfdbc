"""Fast Walsh-Hadamard transform over 2**N-sized vectors.

Index convention used throughout the package: basis index ``x`` stores bit
``i`` (qubit ``i``) as ``(x >> i) & 1``.  The transform is

    W{v}(y) = sum_x v(x) (-1)^(x . y),    x . y = popcount(x & y) mod 2,

and satisfies ``W(W(v)) = 2**N v``.
"""
import numpy as np

from ._backend import fwht_inplace as _fwht_inplace
from .errors import InvalidInputError


def n_qubits_of(length):
    """Return N for a vector of length 2**N, raising on anything else."""
    length = int(length)
    if length < 2 or length & (length - 1):
        raise InvalidInputError(f"length {length} is not a power of two >= 2")
    return length.bit_length() - 1


def _as_transformable(v, copy):
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a 1-d vector, got shape {arr.shape}")
    n_qubits_of(arr.shape[0])
    dtype = np.complex128 if np.iscomplexobj(arr) else np.float64
    return np.array(arr, dtype=dtype, copy=copy, order="C")


def fwht_inplace(v):
    """Transform ``v`` in place.

    ``v`` must be a contiguous float64 or complex128 array; no copy is made.
    """
    if not isinstance(v, np.ndarray) or v.dtype not in (np.float64, np.complex128):
        raise InvalidInputError("fwht_inplace needs a float64 or complex128 ndarray")
    if v.ndim != 1 or not v.flags.c_contiguous or not v.flags.writeable:
        raise InvalidInputError("fwht_inplace needs a writeable contiguous 1-d array")
    n_qubits_of(v.shape[0])
    _fwht_inplace(v)
    return v


def fwht(v):
    """Out-of-place Walsh-Hadamard transform (unnormalised)."""
    out = _as_transformable(v, copy=True)
    _fwht_inplace(out)
    return out


def fwht_inverse(v):
    """Inverse transform, ``fwht(v) / 2**N``."""
    out = fwht(v)
    out /= out.shape[0]
    return out
