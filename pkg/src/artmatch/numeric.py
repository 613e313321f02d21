"""Differentiable numeric kernels with hand-written gradients.

Everything runs in float64. Inputs may be single vectors or batches
(leading axes broadcast); weights follow the (out, in) convention so
that linear(x, W, b) = x @ W.T + b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .validation import UNIT_NORM_TOL

NORM_EPS = 1e-12


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = W x + b, batched over leading axes of x."""
    x, W, b = np.asarray(x, float), np.asarray(W, float), np.asarray(b, float)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(
            f"shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}"
        )
    return x @ W.T + b


def linear_backward(
    x: np.ndarray, W: np.ndarray, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a scalar loss through y = W x + b."""
    x2 = np.atleast_2d(np.asarray(x, float))
    g2 = np.atleast_2d(np.asarray(grad_y, float))
    grad_x = g2 @ W
    grad_W = g2.T @ x2
    grad_b = g2.sum(axis=0)
    if np.asarray(x).ndim == 1:
        grad_x = grad_x[0]
    return grad_x, grad_W, grad_b


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, float))


def tanh_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward given the forward *output* (tanh' = 1 - tanh^2)."""
    return grad_out * (1.0 - out * out)


def l2_normalize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """x / ||x||; raises on (near-)zero input."""
    x = np.asarray(x, float)
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    if np.any(norm <= NORM_EPS):
        raise DegenerateInputError("cannot l2-normalize a (near-)zero vector")
    return x / norm


def l2_normalize_backward(
    x: np.ndarray, grad_out: np.ndarray, axis: int = -1
) -> np.ndarray:
    """Gradient of y = x/||x||: (g - y (y.g)) / ||x||."""
    x = np.asarray(x, float)
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    y = x / norm
    inner = np.sum(y * grad_out, axis=axis, keepdims=True)
    return (grad_out - y * inner) / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of unit vectors, clamped into [-1, 1].

    Both inputs must already be unit-norm (contract violation otherwise);
    the projection layers guarantee this downstream.
    """
    u, v = np.asarray(u, float), np.asarray(v, float)
    for name, w in (("u", u), ("v", v)):
        if abs(np.linalg.norm(w) - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"cosine expects unit-norm inputs; {name} has norm {np.linalg.norm(w)!r}")
    return float(np.clip(u @ v, -1.0, 1.0))


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """-log softmax(logits)[label], computed via log-sum-exp."""
    logits = np.asarray(logits, float)
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} logits")
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    return float(lse - logits[label])


def cross_entropy_backward(logits: np.ndarray, label: int) -> np.ndarray:
    """softmax(logits) - onehot(label)."""
    logits = np.asarray(logits, float)
    m = logits.max()
    p = np.exp(logits - m)
    p /= p.sum()
    p[label] -= 1.0
    return p


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits, float)
    m = logits.max(axis=axis, keepdims=True)
    p = np.exp(logits - m)
    return p / p.sum(axis=axis, keepdims=True)


@dataclass
class AdamState:
    """Optimizer state: step count plus per-parameter moment buffers."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def grad_check(
    loss_and_grad, params: dict[str, np.ndarray], h: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_and_grad(params) must return (scalar loss, {name: grad}).
    """
    _, analytic = loss_and_grad(params)
    worst = 0.0
    for name, p in params.items():
        grad = analytic[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grad(params)
            flat[i] = orig - h
            down, _ = loss_and_grad(params)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            a = grad.reshape(-1)[i]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
    return worst
