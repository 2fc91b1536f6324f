import numpy as np
import pytest

from creepformer import tensor as T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def finite_checks():
    """Enable NaN/Inf checks after every forward op for the test body."""
    T.set_finite_checks(True)
    yield
    T.set_finite_checks(False)


def central_difference(fn, arr, h=1e-5):
    """Central finite differences of a scalar fn w.r.t. every entry of arr."""
    grad = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        fp = fn()
        arr[idx] = orig - h
        fm = fn()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-4):
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps near-zero gradients from amplifying central-difference
    noise (h=1e-5 in float64 leaves ~1e-11 absolute noise on O(1) losses)
    into spurious relative errors, while a genuinely wrong gradient of any
    consequential magnitude still reads as O(1).
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom
