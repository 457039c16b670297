"""Shared test helpers: finite-difference gradient checking."""

import numpy as np

from boningknife.autodiff import GradTape, Tensor


def fd_gradient(f, tensors, h=1e-5):
    """Central finite differences of scalar f() w.r.t. each tensor's data."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(f, tensors, h=1e-5, rtol=1e-4, atol=1e-8):
    """Analytic (tape) vs central-difference gradients for scalar f()."""
    for t in tensors:
        t.grad = None
    with GradTape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]
    numeric = fd_gradient(f, tensors, h)
    for a, n in zip(analytic, numeric):
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)


def rand_tensor(rng, shape, requires_grad=True, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=requires_grad)
