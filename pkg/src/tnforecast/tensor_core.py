"""Rank-4 weight tensors and the three-input multilinear contraction.

Every hidden node of the tree computes

    out[m] = f( sum_{n,o,p} w[m, n, o, p] * a[n] * b[o] * c[p] )

``contract3`` returns the sum (pre-activation); the activation is applied
separately so that the output node can skip it.  All functions accept either
single vectors of shape ``(k,)`` or batches of shape ``(B, k)``; the batch axis
is always leading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = ("m", "n", "o", "p")


class ShapeError(ValueError):
    """Raised when tensor and vector dimensions do not line up."""


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite entries")


def as_weight(values, dims=None) -> np.ndarray:
    """Build a float64 rank-4 tensor from nested data or a flat row-major list."""
    arr = np.asarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(k) for k in dims)
        if len(dims) != 4 or any(k < 1 for k in dims):
            raise ShapeError(f"weight dims must be four positive integers, got {dims}")
        if arr.size != int(np.prod(dims)):
            raise ShapeError(f"{arr.size} values do not fill dims {dims}")
        arr = arr.reshape(dims)
    if arr.ndim != 4:
        raise ShapeError(f"weight tensor must be rank 4, got rank {arr.ndim}")
    _check_finite(arr, "weight tensor")
    return arr


def _check_inputs(w: np.ndarray, a, b, c):
    if w.ndim != 4:
        raise ShapeError(f"weight tensor must be rank 4, got rank {w.ndim}")
    vecs = [np.asarray(v, dtype=np.float64) for v in (a, b, c)]
    batched = vecs[0].ndim == 2
    for axis, (name, v) in enumerate(zip(AXES[1:], vecs), start=1):
        if v.ndim != (2 if batched else 1):
            raise ShapeError(f"input for axis {name} has rank {v.ndim}; inputs must share a layout")
        if v.shape[-1] != w.shape[axis]:
            raise ShapeError(
                f"axis {name}: tensor has size {w.shape[axis]} but input has length {v.shape[-1]}"
            )
    if batched and len({v.shape[0] for v in vecs}) != 1:
        raise ShapeError("batched inputs disagree on batch size")
    return vecs, batched


def contract3(w: np.ndarray, a, b, c) -> np.ndarray:
    """Pre-activation ``sum_{nop} w[m,n,o,p] a[n] b[o] c[p]`` (no activation)."""
    (a, b, c), batched = _check_inputs(w, a, b, c)
    if not batched:
        return contract3(w, a[None], b[None], c[None])[0]
    M, N, O, P = w.shape
    # contract the innermost index first: (B, M*N*O) then fold o, then n
    wc = c @ w.reshape(M * N * O, P).T
    wbc = np.einsum("bmno,bo->bmn", wc.reshape(-1, M, N, O), b)
    return np.einsum("bmn,bn->bm", wbc, a)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow warnings
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# name -> (f, f' expressed through the post-activation value)
ACTIVATIONS = {
    "tanh": (np.tanh, lambda t: 1.0 - t * t),
    "sigmoid": (_sigmoid, lambda t: t * (1.0 - t)),
}


def _lookup(kind: str):
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)}") from None


def activation(x, kind: str = "tanh") -> np.ndarray:
    """Elementwise activation (tanh unless ``kind`` says otherwise)."""
    f, _ = _lookup(kind)
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x, "activation input")
    return f(x)


def activation_derivative(post, kind: str = "tanh") -> np.ndarray:
    """f'(x) written in terms of the post-activation value, e.g. 1 - t**2 for tanh."""
    _, df = _lookup(kind)
    return df(np.asarray(post, dtype=np.float64))


def contract3_backward(w: np.ndarray, a, b, c, upstream):
    """Gradients of ``upstream . contract3(w, a, b, c)``.

    Returns ``(grad_w, grad_a, grad_b, grad_c)``.  For batched inputs the
    weight gradient is summed over the batch; the input gradients stay
    per-sample.
    """
    (a, b, c), batched = _check_inputs(w, a, b, c)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape[-1] != w.shape[0] or u.ndim != (2 if batched else 1):
        raise ShapeError(f"axis m: tensor has size {w.shape[0]} but upstream has shape {u.shape}")
    if not batched:
        gw, ga, gb, gc = contract3_backward(w, a[None], b[None], c[None], u[None])
        return gw, ga[0], gb[0], gc[0]
    M, N, O, P = w.shape
    B = a.shape[0]
    ua = u[:, :, None] * a[:, None, :]
    uab = (ua[:, :, :, None] * b[:, None, None, :]).reshape(B, M * N * O)
    w2 = w.reshape(M * N * O, P)
    grad_w = (uab.T @ c).reshape(M, N, O, P)
    grad_c = uab @ w2
    wc = (c @ w2.T).reshape(B, M, N, O)
    grad_b = np.einsum("bmn,bmno->bo", ua, wc)
    wbc = np.einsum("bmno,bo->bmn", wc, b)
    grad_a = np.einsum("bm,bmn->bn", u, wbc)
    return grad_w, grad_a, grad_b, grad_c


@dataclass(frozen=True)
class ContractionCache:
    """Intermediates of one node's forward pass, kept for backprop."""

    inputs: tuple
    pre_activation: np.ndarray
    post_activation: np.ndarray
