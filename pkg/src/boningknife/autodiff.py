"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap numpy float64 buffers (double precision is the default so
finite-difference gradient checks are meaningful; float32 available via
set_default_dtype). Forward ops executed under an active GradTape append
(output, inputs, backward closure) entries in execution order, which is a
valid topological order; GradTape.backward walks the record once in reverse
and accumulates gradients into Tensor.grad.

Single-threaded per tape. The active tape is thread-local, so read-only
inference over frozen parameters may run in parallel across sentences.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .errors import DimensionError, NumericalError

_DEFAULT_DTYPE = np.float64

# 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + c x^3))), smooth so FD checks behave
_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715

_state = threading.local()

_checked = False


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def set_checked(flag: bool) -> None:
    """Enable per-op finiteness checks (forward ops must not emit NaN/Inf)."""
    global _checked
    _checked = bool(flag)


class Tensor:
    """Dense array with optional gradient buffer. Shape is fixed at creation."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class GradTape:
    """Ordered record of forward operations with backward closures."""

    def __init__(self):
        self._entries = []  # (out, inputs, backward_fn)

    def __enter__(self):
        if getattr(_state, "tape", None) is not None:
            raise RuntimeError("a GradTape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def record(self, out: Tensor, inputs, backward_fn) -> None:
        self._entries.append((out, tuple(inputs), backward_fn))

    def backward(self, loss: Tensor):
        """Propagate from a finite scalar loss; fills .grad on reachable tensors.

        Returns a dict id(tensor) -> gradient array for everything touched.
        Entries are visited in reverse record order exactly once.
        """
        if loss.data.shape != ():
            raise DimensionError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        if not np.isfinite(loss.data):
            raise NumericalError(f"backward on non-finite loss {float(loss.data)}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        for out, inputs, backward_fn in reversed(self._entries):
            g_out = grads.get(id(out))
            if g_out is None:
                continue
            in_grads = backward_fn(g_out)
            for tensor, g in zip(inputs, in_grads):
                if g is None:
                    continue
                acc = grads.get(id(tensor))
                if acc is None:
                    # closures may hand back views of g_out; copy before mutating
                    grads[id(tensor)] = np.array(g, copy=True)
                else:
                    acc += g
        seen: dict[int, Tensor] = {}
        for out, inputs, _ in self._entries:
            seen.setdefault(id(out), out)
            for t in inputs:
                seen.setdefault(id(t), t)
        for tid, t in seen.items():
            if t.requires_grad and tid in grads:
                g = grads[tid]
                t.grad = np.array(g, copy=True) if t.grad is None else t.grad + g
        return grads


class pause_recording:
    """Context manager: run forward ops without taping (no gradients)."""

    def __enter__(self):
        self._saved = getattr(_state, "tape", None)
        _state.tape = None
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = self._saved
        return False


def _active_tape():
    return getattr(_state, "tape", None)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(out_data, inputs, backward_fn) -> Tensor:
    if _checked and not np.all(np.isfinite(out_data)):
        raise NumericalError("forward op produced non-finite values")
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(isinstance(t, Tensor) for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _finish(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _finish(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c

    def backward(g):
        return (g * c,)

    return _finish(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a [.., n, k] @ b [k, m]."""
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dims differ: {a.data.shape} vs {b.data.shape}"
        )
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _finish(out, (a, b), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _finish(out, tuple(tensors), backward)


def gather_rows(x: Tensor, idx) -> Tensor:
    """x [M, d] indexed by idx [K] -> [K, d]; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    out = x.data[idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _finish(out, (x,), backward)


def take_per_batch(x: Tensor, idx) -> Tensor:
    """x [C, P, d], idx [C] -> rows [C, d]: out[c] = x[c, idx[c]]."""
    idx = np.asarray(idx, dtype=np.intp)
    ar = np.arange(x.data.shape[0])
    out = x.data[ar, idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[ar, idx] = g
        return (gx,)

    return _finish(out, (x,), backward)


def expand0(x: Tensor, n: int) -> Tensor:
    """Repeat x along a new leading axis of size n; backward sums it away."""
    out = np.broadcast_to(x.data, (n,) + x.data.shape).copy()

    def backward(g):
        return (g.sum(axis=0),)

    return _finish(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.data.shape),)

    return _finish(out, (x,), backward)


def mean_scalars(tensors) -> Tensor:
    """Mean of scalar tensors (batch loss aggregation)."""
    tensors = [_as_tensor(t) for t in tensors]
    n = len(tensors)
    out = np.asarray(sum(float(t.data) for t in tensors) / n)

    def backward(g):
        return tuple(g / n for _ in tensors)

    return _finish(out, tuple(tensors), backward)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _finish(out, (x,), backward)


# ---------------------------------------------------------------------------
# neural ops
# ---------------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with x [.., d_in], w [d_in, d_out], b [d_out]."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"linear: input trailing dim {x.data.shape} does not match "
            f"weight {w.data.shape}"
        )
    out = x.data @ w.data + b.data

    def backward(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    return _finish(out, (x, w, b), backward)


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    inner = _GELU_K * (xd + _GELU_C * xd**3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        sech2 = 1.0 - t * t
        d_inner = _GELU_K * (1.0 + 3.0 * _GELU_C * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * sech2 * d_inner),)

    return _finish(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply affine gain/bias."""
    d = x.data.shape[-1]
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        g_xhat = g * gain.data
        # d xhat / d x folded: inv * (g_xhat - mean(g_xhat) - xhat * mean(g_xhat * xhat))
        m1 = g_xhat.mean(axis=-1, keepdims=True)
        m2 = (g_xhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (g_xhat - m1 - xhat * m2)
        red = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=red)
        g_bias = g.sum(axis=red)
        return gx, g_gain, g_bias

    return _finish(out, (x, gain, bias), backward)


def _effective_mask(mask: np.ndarray) -> np.ndarray:
    """Binarize a visibility mask; rows with no support fall back to self-only."""
    eff = (np.asarray(mask) != 0).astype(_DEFAULT_DTYPE)
    if eff.shape[-1] != eff.shape[-2]:
        raise DimensionError(f"mask must be square in its last two dims, got {eff.shape}")
    empty = eff.sum(axis=-1) == 0
    if empty.any():
        eff = eff.copy()
        n = eff.shape[-1]
        eye = np.eye(n, dtype=eff.dtype)
        rows = np.broadcast_to(eye, eff.shape)
        eff[empty] = rows[empty]
    return eff


def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Row softmax over visible entries of a binary mask.

    Rows sum to 1 over the visible support and are exactly 0 elsewhere.
    A fully-masked row falls back to attending to itself only. `mask`
    broadcasts against `scores` over leading axes; it carries no gradient.
    """
    eff = _effective_mask(mask)
    shape = np.broadcast_shapes(scores.data.shape, eff.shape)
    s = np.broadcast_to(scores.data, shape)
    m = np.broadcast_to(eff, shape)
    neg = np.where(m > 0, s, -np.inf)
    mx = neg.max(axis=-1, keepdims=True)
    ex = np.exp(neg - mx) * m
    out = ex / ex.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        gs = out * (g - dot)
        return (_unbroadcast(gs, scores.data.shape),)

    return _finish(out, (scores,), backward)


def multi_head_mix(q: Tensor, k: Tensor, v: Tensor, mask, heads: int,
                   weights_out: list | None = None) -> Tensor:
    """Scaled dot-product attention with h heads under a visibility mask.

    q, k, v: [N, d] with d divisible by heads. mask: [N, N] or [C, N, N];
    a stacked mask applies C independent visibility patterns to the same
    q/k/v, returning [C, N, d]. Fully-masked rows self-attend. If
    weights_out is a list, the head-averaged attention weights are
    appended to it (diagnostics only, detached).
    """
    n, d = q.data.shape
    if d % heads != 0:
        raise DimensionError(f"model dim {d} not divisible by heads {heads}")
    dh = d // heads
    eff = _effective_mask(mask)
    batched = eff.ndim == 3
    mask4 = eff[:, None, :, :] if batched else eff[None, None, :, :]

    qh = q.data.reshape(n, heads, dh)
    kh = k.data.reshape(n, heads, dh)
    vh = v.data.reshape(n, heads, dh)
    inv_sqrt = 1.0 / math.sqrt(dh)
    scores = np.einsum("ihd,jhd->hij", qh, kh) * inv_sqrt  # [h, N, N]

    neg = np.where(mask4 > 0, scores[None], -np.inf)  # [B, h, N, N]
    mx = neg.max(axis=-1, keepdims=True)
    ex = np.exp(neg - mx) * mask4
    w = ex / ex.sum(axis=-1, keepdims=True)

    ctx = np.einsum("bhij,jhd->bihd", w, vh)
    out = ctx.reshape(w.shape[0], n, d) if batched else ctx[0].reshape(n, d)
    if weights_out is not None:
        weights_out.append(w.mean(axis=1) if batched else w[0].mean(axis=0))

    def backward(g):
        gctx = g.reshape(-1, n, heads, dh) if batched else g.reshape(1, n, heads, dh)
        gw = np.einsum("bihd,jhd->bhij", gctx, vh)
        gv = np.einsum("bhij,bihd->jhd", w, gctx)
        # softmax backward per row, then fold the batch dim into scores
        gscores4 = w * (gw - (gw * w).sum(axis=-1, keepdims=True))
        gscores = gscores4.sum(axis=0) * inv_sqrt  # [h, N, N]
        gq = np.einsum("hij,jhd->ihd", gscores, kh)
        gk = np.einsum("hij,ihd->jhd", gscores, qh)
        return gq.reshape(n, d), gk.reshape(n, d), gv.reshape(n, d)

    return _finish(out, (q, k, v), backward)


def cross_entropy_mean(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under row softmax.

    logits [M, K], labels [M] ints in [0, K). Stable log-sum-exp.
    """
    labels = np.asarray(labels, dtype=np.intp)
    m = logits.data.shape[0]
    if labels.shape != (m,):
        raise DimensionError(
            f"labels shape {labels.shape} does not match logits {logits.data.shape}"
        )
    z = logits.data
    mx = z.max(axis=-1, keepdims=True)
    lse = mx + np.log(np.exp(z - mx).sum(axis=-1, keepdims=True))
    logp = z - lse
    out = np.asarray(-logp[np.arange(m), labels].mean())

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(m), labels] -= 1.0
        return (g * probs / m,)

    return _finish(out, (logits,), backward)


def binary_positive(logits: Tensor) -> Tensor:
    """Positive-class probability of 2-class logits [M, 2], kept on tape.

    sigmoid(z1 - z0), identical to softmax(logits)[:, 1] but cheaper to
    differentiate.
    """
    if logits.data.shape[-1] != 2:
        raise DimensionError(f"binary_positive wants [.., 2] logits, got {logits.data.shape}")
    diff = logits.data[..., 1] - logits.data[..., 0]
    p = np.where(diff >= 0, 1.0 / (1.0 + np.exp(-diff)),
                 np.exp(diff) / (1.0 + np.exp(diff)))

    def backward(g):
        d = g * p * (1.0 - p)
        out = np.empty_like(logits.data)
        out[..., 1] = d
        out[..., 0] = -d
        return (out,)

    return _finish(p, (logits,), backward)


def span_bilinear(h_start: Tensor, h_end: Tensor, u: Tensor) -> Tensor:
    """Pairwise bilinear scores out[i, j, c] = h_start[i] . u[:, c, :] . h_end[j].

    h_start, h_end: [N, d_low]; u: [d_low, d_span, d_low] -> [N, N, d_span].
    """
    out = np.einsum("ia,acb,jb->ijc", h_start.data, u.data, h_end.data, optimize=True)

    def backward(g):
        gs = np.einsum("ijc,acb,jb->ia", g, u.data, h_end.data, optimize=True)
        ge = np.einsum("ijc,acb,ia->jb", g, u.data, h_start.data, optimize=True)
        gu = np.einsum("ia,ijc,jb->acb", h_start.data, g, h_end.data, optimize=True)
        return gs, ge, gu

    return _finish(out, (h_start, h_end, u), backward)


def softmax_probs(logits: Tensor) -> np.ndarray:
    """Detached row softmax (inference-side probabilities)."""
    z = logits.data
    mx = z.max(axis=-1, keepdims=True)
    ex = np.exp(z - mx)
    return ex / ex.sum(axis=-1, keepdims=True)


_LOG_FLOOR = -50.0


def span_products(p: Tensor, starts, ends) -> Tensor:
    """Per-span products g[s] = prod_{k in [starts[s], ends[s]]} p[k].

    Computed in the log domain; the log-product is clamped at -50 so long
    spans cannot underflow. p must be strictly positive (softmax outputs).
    """
    starts = np.asarray(starts, dtype=np.intp)
    ends = np.asarray(ends, dtype=np.intp)
    logp = np.log(p.data)
    cum = np.concatenate([[0.0], np.cumsum(logp)])
    logg = cum[ends + 1] - cum[starts]
    clamped = logg < _LOG_FLOOR
    out = np.exp(np.maximum(logg, _LOG_FLOOR))

    def backward(g):
        # d g_s / d p_k = g_s / p_k for k in the span; zero where clamped
        coef = np.where(clamped, 0.0, g * out)
        diff = np.zeros(p.data.shape[0] + 1)
        np.add.at(diff, starts, coef)
        np.add.at(diff, ends + 1, -coef)
        return (np.cumsum(diff[:-1]) / p.data,)

    return _finish(out, (p,), backward)
