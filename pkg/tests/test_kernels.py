"""Both kernel backends against each other and against the scalar phase function."""
import numpy as np
import pytest

from iqpphase import _backend, circuit
from iqpphase.circuit import phase_function, sample_instance

from oracles import direct_walsh


@pytest.mark.parametrize("dtype", [np.float64, np.complex128])
@pytest.mark.parametrize("n", [1, 3, 6, 10])
def test_fwht_backends(kernels, dtype, n, rng):
    v = rng.normal(size=1 << n).astype(dtype)
    if dtype == np.complex128:
        v += 1j * rng.normal(size=1 << n)
    out = v.copy()
    kernels.fwht_inplace(out)
    if n <= 6:
        np.testing.assert_allclose(out, direct_walsh(v), atol=1e-10)
    else:
        ref = v.copy()
        _backend.fwht_inplace(ref)
        np.testing.assert_allclose(out, ref, atol=1e-10)


@pytest.mark.parametrize("family", ["D", "F"])
@pytest.mark.parametrize("q", [0.0, 0.5, 1.0])
def test_phase_vector_backends(kernels, family, q):
    inst = sample_instance(6, q, 11)
    pi, pj, pv = inst.pair_arrays()
    vec = kernels.phase_vector(inst.theta, pi, pj, pv, family == "D")
    expected = [phase_function(inst, y, family) for y in range(64)]
    np.testing.assert_allclose(vec, expected, atol=1e-12)


def test_backends_bit_identical(rng):
    from iqpphase import _pykernels

    try:
        from iqpphase import _ckernels
    except ImportError:
        pytest.skip("extension not built")
    v = rng.normal(size=1 << 12) + 1j * rng.normal(size=1 << 12)
    a, b = v.copy(), v.copy()
    _pykernels.fwht_inplace(a)
    _ckernels.fwht_inplace(b)
    np.testing.assert_array_equal(a, b)


def test_backend_reported():
    assert _backend.BACKEND in ("cython", "python")
    assert circuit.phase_vector.__module__ == "iqpphase.circuit"
