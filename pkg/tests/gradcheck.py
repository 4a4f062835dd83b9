"""Central finite-difference oracle for the autograd engine."""

import numpy as np

from freqdistill.autograd import backward


def numeric_grad(fn, arr, h=1e-5):
    """d fn() / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        up = fn()
        arr[idx] = old - h
        down = fn()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    # floor keeps an all-zero gradient from turning rounding noise into a huge ratio
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-6)
    return np.abs(a - b).max(initial=0.0) / scale


def check_gradients(build_loss, tensors, h=1e-5, rtol=1e-5):
    """Compare backward() against central differences for every tensor.

    ``build_loss`` must rebuild the forward pass from the current
    ``tensor.data`` values and return a scalar Tensor.
    """
    for t in tensors:
        t.grad = None
    backward(build_loss())
    worst = 0.0
    for t in tensors:
        num = numeric_grad(lambda: build_loss().item(), t.data, h)
        err = relative_error(t.grad, num)
        assert err < rtol, f"gradient mismatch {err:.2e} for tensor of shape {t.shape}"
        worst = max(worst, err)
    return worst
