"""Dense float64 primitives shared by the model, losses, and gradient checks.

Everything here is a pure function over numpy arrays. Matrices are 2-D
row-major float64 arrays; vectors are 1-D float64 arrays.
"""

import numpy as np
from scipy.special import erf

__all__ = [
    "ShapeError",
    "matmul",
    "softmax_rows",
    "layer_norm",
    "layer_norm_backward",
    "gelu",
    "gelu_backward",
    "cosine_similarity",
    "sinusoidal_pe",
    "finite_diff_gradient",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as2d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def softmax_rows(m):
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    Uses population variance. Works on a single vector or row-wise on a matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise ShapeError(
            f"layer_norm dims differ: x {x.shape[-1]}, gain {gain.shape[-1]}, bias {bias.shape[-1]}"
        )
    if eps <= 0:
        raise ValueError("layer_norm eps must be > 0")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    return gain * xhat + bias


def layer_norm_backward(x, gain, eps, grad_out):
    """Gradients of layer_norm w.r.t. x, gain, and bias given upstream grad_out.

    Returns (grad_x, grad_gain, grad_bias); the vector grads are summed over
    leading axes so they match the parameter shapes.
    """
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    n = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv

    grad_gain = (grad_out * xhat).reshape(-1, n).sum(axis=0)
    grad_bias = grad_out.reshape(-1, n).sum(axis=0)

    g = grad_out * gain
    grad_x = inv * (
        g
        - g.mean(axis=-1, keepdims=True)
        - xhat * (g * xhat).mean(axis=-1, keepdims=True)
    )
    return grad_x, grad_gain, grad_bias


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact GELU, x * Phi(x), elementwise."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(x, grad_out):
    """d/dx [x * Phi(x)] = Phi(x) + x * phi(x), times upstream gradient."""
    x = np.asarray(x, dtype=np.float64)
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return grad_out * (phi + x * pdf)


def cosine_similarity(a, b):
    """Cosine of the angle between two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_similarity is undefined for a zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def sinusoidal_pe(position, dim):
    """Sinusoidal positional encoding with wavelength base 10000.

    Even slots hold sin, odd slots hold cos, both over frequency
    1 / 10000^(2i/dim).
    """
    if dim % 2 != 0:
        raise ValueError(f"sinusoidal_pe requires an even dim, got {dim}")
    i = np.arange(dim // 2, dtype=np.float64)
    angle = position / np.power(10000.0, 2.0 * i / dim)
    pe = np.empty(dim, dtype=np.float64)
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle)
    return pe


def finite_diff_gradient(f, params, h=1e-5):
    """Central-difference gradient of a scalar function of named parameters.

    `params` is either a single array or a dict of arrays; the result mirrors
    that structure. The function is treated as a black box.
    """
    if h <= 0:
        raise ValueError("finite_diff_gradient requires h > 0")

    def grad_of(arr, call):
        arr = np.asarray(arr, dtype=np.float64)
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = call()
            flat[idx] = orig - h
            fm = call()
            flat[idx] = orig
            gflat[idx] = (fp - fm) / (2.0 * h)
        return g

    if isinstance(params, dict):
        return {name: grad_of(arr, lambda: f(params)) for name, arr in params.items()}
    params = np.asarray(params, dtype=np.float64)
    return grad_of(params, lambda: f(params))
