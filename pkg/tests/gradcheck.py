"""Central finite-difference gradient oracle, independent of the autodiff path."""

import numpy as np

from ovtal.tensor import Tensor

EPS = 1e-4
TOL = 1e-4


def numeric_grad(fn, arrays, which, eps=EPS):
    """d fn(arrays) / d arrays[which] by central differences, one element at a time."""
    base = [a.copy() for a in arrays]
    target = base[which]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = target[idx]
        target[idx] = orig + eps
        f_plus = fn(base)
        target[idx] = orig - eps
        f_minus = fn(base)
        target[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * eps)
        it.iternext()
    return grad


def check_gradients(build_loss, arrays, tol=TOL, eps=EPS):
    """Compare autodiff gradients of build_loss(tensors) against central differences.

    build_loss receives a list of Tensors (requires_grad=True) and must return a
    scalar Tensor. Returns the worst relative error observed.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    loss.backward()

    def as_scalar(arrs):
        ts = [Tensor(a.copy()) for a in arrs]
        return build_loss(ts).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(as_scalar, [a.copy() for a in arrays], i, eps=eps)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        rel = np.abs(analytic - numeric) / denom
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    assert worst < tol, f"gradient mismatch: worst relative error {worst:.3e}"
    return worst
