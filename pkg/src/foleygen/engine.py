"""Minimal reverse-mode autodiff engine on numpy arrays.

The engine provides exactly the operations the audio/video generator
architectures need: dense layers, causal/strided/volumetric convolutions,
multi-head attention, the usual pointwise nonlinearities, and a built-in
central-finite-difference gradient checker.

Design constraints:
  * single global precision (float64 default, float32 for training speed)
  * no implicit broadcasting except bias addition inside ``linear``
  * bit-deterministic: same inputs, same outputs
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, ShapeError

_DTYPE = np.float64


def set_precision(kind: str) -> None:
    """Set the global scalar precision: 'float64' or 'float32'."""
    global _DTYPE
    if kind not in ("float64", "float32"):
        raise ParameterError(f"unknown precision {kind!r}")
    _DTYPE = np.float64 if kind == "float64" else np.float32


def get_precision() -> str:
    return "float64" if _DTYPE is np.float64 else "float32"


def dtype() -> type:
    return _DTYPE


class Tensor:
    """An n-dimensional array that optionally participates in the tape.

    ``grad`` is populated by :func:`backward` and is overwritten (not
    accumulated) across separate backward calls.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward_fn):
        out = Tensor.__new__(Tensor)
        out.data = np.asarray(data, dtype=_DTYPE)
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- arithmetic ---------------------------------------------------------

    def _check_same_shape(self, other, opname):
        if self.shape != other.shape:
            raise ShapeError(
                f"{opname}: shapes {self.shape} and {other.shape} differ "
                "(no implicit broadcasting)"
            )

    def __add__(self, other):
        if isinstance(other, (int, float)):
            out = Tensor._result(self.data + other, (self,), None)
            if out.requires_grad:
                def bw(g, a=self):
                    a.grad += g
                out._backward = bw
            return out
        self._check_same_shape(other, "add")
        out = Tensor._result(self.data + other.data, (self, other), None)
        if out.requires_grad:
            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a.grad += g
                if b.requires_grad:
                    b.grad += g
            out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), None)
        if out.requires_grad:
            def bw(g, a=self):
                a.grad -= g
            out._backward = bw
        return out

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        # other is a scalar
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            out = Tensor._result(self.data * other, (self,), None)
            if out.requires_grad:
                def bw(g, a=self, c=other):
                    a.grad += g * c
                out._backward = bw
            return out
        self._check_same_shape(other, "mul")
        out = Tensor._result(self.data * other.data, (self, other), None)
        if out.requires_grad:
            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a.grad += g * b.data
                if b.requires_grad:
                    b.grad += g * a.data
            out._backward = bw
        return out

    __rmul__ = __mul__

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise ParameterError("power exponent must be a python scalar")
        out = Tensor._result(self.data ** p, (self,), None)
        if out.requires_grad:
            def bw(g, a=self, p=p):
                a.grad += g * p * a.data ** (p - 1)
            out._backward = bw
        return out

    def __matmul__(self, other):
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError(
                f"matmul expects 2-D operands, got {self.shape} @ {other.shape}"
            )
        if self.shape[1] != other.shape[0]:
            raise ShapeError(
                f"matmul inner dimensions disagree: {self.shape} @ {other.shape}"
            )
        out = Tensor._result(self.data @ other.data, (self, other), None)
        if out.requires_grad:
            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a.grad += g @ b.data.T
                if b.requires_grad:
                    b.grad += a.data.T @ g
            out._backward = bw
        return out

    # -- reductions and reshapes -------------------------------------------

    def sum(self):
        out = Tensor._result(self.data.sum(), (self,), None)
        if out.requires_grad:
            def bw(g, a=self):
                a.grad += g
            out._backward = bw
        return out

    def mean(self):
        n = self.data.size
        out = Tensor._result(self.data.mean(), (self,), None)
        if out.requires_grad:
            def bw(g, a=self, n=n):
                a.grad += g / n
            out._backward = bw
        return out

    def mean_axis(self, axis: int):
        """Mean along one axis (used for time pooling)."""
        n = self.data.shape[axis]
        out = Tensor._result(self.data.mean(axis=axis), (self,), None)
        if out.requires_grad:
            def bw(g, a=self, axis=axis, n=n):
                a.grad += np.expand_dims(g, axis) / n
            out._backward = bw
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = Tensor._result(self.data.reshape(shape), (self,), None)
        if out.requires_grad:
            def bw(g, a=self, old=old):
                a.grad += g.reshape(old)
            out._backward = bw
        return out

    def transpose(self, axes=None):
        out = Tensor._result(np.transpose(self.data, axes), (self,), None)
        if out.requires_grad:
            inv = None if axes is None else np.argsort(axes)
            def bw(g, a=self, inv=inv):
                a.grad += np.transpose(g, inv)
            out._backward = bw
        return out

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, key):
        out = Tensor._result(self.data[key], (self,), None)
        if out.requires_grad:
            def bw(g, a=self, key=key):
                a.grad[key] += g
            out._backward = bw
        return out

    # -- nonlinearities ------------------------------------------------------

    def tanh(self):
        y = np.tanh(self.data)
        out = Tensor._result(y, (self,), None)
        if out.requires_grad:
            def bw(g, a=self, y=y):
                a.grad += g * (1.0 - y * y)
            out._backward = bw
        return out

    def relu(self):
        # gradient at exactly 0 is 0
        mask = self.data > 0
        out = Tensor._result(np.where(mask, self.data, 0.0), (self,), None)
        if out.requires_grad:
            def bw(g, a=self, mask=mask):
                a.grad += g * mask
            out._backward = bw
        return out

    def log(self):
        out = Tensor._result(np.log(self.data), (self,), None)
        if out.requires_grad:
            def bw(g, a=self):
                a.grad += g / a.data
            out._backward = bw
        return out

    def abs(self):
        out = Tensor._result(np.abs(self.data), (self,), None)
        if out.requires_grad:
            def bw(g, a=self):
                a.grad += g * np.sign(a.data)
            out._backward = bw
        return out

    def clamp(self, lo: float, hi: float):
        inside = (self.data >= lo) & (self.data <= hi)
        out = Tensor._result(np.clip(self.data, lo, hi), (self,), None)
        if out.requires_grad:
            def bw(g, a=self, inside=inside):
                a.grad += g * inside
            out._backward = bw
        return out

    def softmax_lastdim(self):
        z = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        out = Tensor._result(y, (self,), None)
        if out.requires_grad:
            def bw(g, a=self, y=y):
                dot = (g * y).sum(axis=-1, keepdims=True)
                a.grad += y * (g - dot)
            out._backward = bw
        return out

    def logsumexp_lastdim(self):
        m = self.data.max(axis=-1, keepdims=True)
        s = np.exp(self.data - m).sum(axis=-1, keepdims=True)
        val = (m + np.log(s)).squeeze(-1)
        out = Tensor._result(val, (self,), None)
        if out.requires_grad:
            soft = np.exp(self.data - m) / s
            def bw(g, a=self, soft=soft):
                a.grad += np.expand_dims(g, -1) * soft
            out._backward = bw
        return out


def concat(tensors, axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    out = Tensor._result(np.concatenate(datas, axis=axis), tuple(tensors), None)
    if out.requires_grad:
        def bw(g, tensors=tuple(tensors), sizes=sizes, axis=axis):
            start = 0
            for t, n in zip(tensors, sizes):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, start + n)
                if t.requires_grad:
                    t.grad += g[tuple(sl)]
                start += n
        out._backward = bw
    return out


def scalar_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a size-1 tensor (learned gate)."""
    if s.data.size != 1:
        raise ShapeError(f"scalar_scale: gate must be size 1, got {s.shape}")
    out = Tensor._result(x.data * s.data, (x, s), None)
    if out.requires_grad:
        def bw(g, x=x, s=s):
            if x.requires_grad:
                x.grad += g * s.data
            if s.requires_grad:
                s.grad += np.sum(g * x.data).reshape(s.data.shape)
        out._backward = bw
    return out


def expand_axis(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis of length n by repetition; backward sums over it."""
    data = np.repeat(np.expand_dims(x.data, axis), n, axis=axis)
    out = Tensor._result(data, (x,), None)
    if out.requires_grad:
        def bw(g, a=x, axis=axis):
            a.grad += g.sum(axis=axis)
        out._backward = bw
    return out


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires-grad tensor reachable from loss.

    Gradients of the touched subgraph are overwritten per call; calling
    backward twice does not accumulate.
    """
    if loss.data.size != 1:
        raise ContractError(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )
    # iterative topological sort
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    for node in topo:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# -- layers ------------------------------------------------------------------


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """y = x W + b over the last axis of x; bias broadcasts over leading axes."""
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(
            f"linear: input shape {x.shape} does not match weight {W.shape}"
        )
    if b.shape != (W.shape[1],):
        raise ShapeError(
            f"linear: bias shape {b.shape} does not match weight {W.shape}"
        )
    lead = x.shape[:-1]
    x2 = x.reshape(-1, x.shape[-1]) if x.data.ndim != 2 else x
    y2 = x2 @ W
    y2 = _add_bias(y2, b)
    if x.data.ndim != 2:
        y2 = y2.reshape(*lead, W.shape[1])
    return y2


def _add_bias(x: Tensor, b: Tensor) -> Tensor:
    out = Tensor._result(x.data + b.data, (x, b), None)
    if out.requires_grad:
        def bw(g, a=x, b=b):
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad += g.sum(axis=tuple(range(g.ndim - 1)))
        out._backward = bw
    return out


def conv1d_causal(x: Tensor, kernel: Tensor, dilation: int = 1) -> Tensor:
    """Left-padded dilated convolution: output t sees x[.., t - d*k] only.

    x: (ch_in, T), kernel: (ch_out, ch_in, K) -> (ch_out, T)
    """
    if not isinstance(dilation, int) or dilation < 1:
        raise ParameterError(f"dilation must be a positive int, got {dilation}")
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError(
            f"conv1d_causal: x {x.shape} must be (ch_in,T), "
            f"kernel {kernel.shape} must be (ch_out,ch_in,K)"
        )
    ch_out, ch_in, K = kernel.shape
    if x.shape[0] != ch_in:
        raise ShapeError(
            f"conv1d_causal: x channels {x.shape} vs kernel {kernel.shape}"
        )
    if K < 1:
        raise ParameterError("kernel size must be >= 1")
    T = x.shape[1]
    pad = (K - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (pad, 0)))
    y = np.zeros((ch_out, T), dtype=_DTYPE)
    for k in range(K):
        y += kernel.data[:, :, k] @ xp[:, pad - k * dilation: pad - k * dilation + T]
    out = Tensor._result(y, (x, kernel), None)
    if out.requires_grad:
        def bw(g, x=x, kernel=kernel, xp=xp, pad=pad, d=dilation, K=K, T=T):
            if kernel.requires_grad:
                for k in range(K):
                    kernel.grad[:, :, k] += g @ xp[:, pad - k * d: pad - k * d + T].T
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for k in range(K):
                    gxp[:, pad - k * d: pad - k * d + T] += kernel.data[:, :, k].T @ g
                x.grad += gxp[:, pad:]
        out._backward = bw
    return out


def conv1d_strided(x: Tensor, kernel: Tensor, stride: int) -> Tensor:
    """Valid (unpadded) strided convolution used for audio token downsampling.

    x: (ch_in, T), kernel: (ch_out, ch_in, K) -> (ch_out, (T-K)//stride + 1)
    """
    if not isinstance(stride, int) or stride < 1:
        raise ParameterError(f"stride must be a positive int, got {stride}")
    ch_out, ch_in, K = kernel.shape
    if x.shape[0] != ch_in:
        raise ShapeError(
            f"conv1d_strided: x channels {x.shape} vs kernel {kernel.shape}"
        )
    T = x.shape[1]
    if T < K:
        raise ShapeError(f"conv1d_strided: input length {T} < kernel {K}")
    To = (T - K) // stride + 1
    y = np.zeros((ch_out, To), dtype=_DTYPE)
    for k in range(K):
        y += kernel.data[:, :, k] @ x.data[:, k: k + stride * To: stride]
    out = Tensor._result(y, (x, kernel), None)
    if out.requires_grad:
        def bw(g, x=x, kernel=kernel, s=stride, K=K, To=To):
            for k in range(K):
                sl = slice(k, k + s * To, s)
                if kernel.requires_grad:
                    kernel.grad[:, :, k] += g @ x.data[:, sl].T
                if x.requires_grad:
                    x.grad[:, sl] += kernel.data[:, :, k].T @ g
        out._backward = bw
    return out


def conv3d(x: Tensor, kernel: Tensor, stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """Volumetric cross-correlation.

    x: (ch_in, T, H, W), kernel: (ch_out, ch_in, kT, kH, kW).
    Output extent per dim: (dim + 2*pad - k)//stride + 1, which must be >= 1.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 5:
        raise ShapeError(
            f"conv3d: x {x.shape} must be 4-D, kernel {kernel.shape} must be 5-D"
        )
    co, ci, kt, kh, kw = kernel.shape
    if x.shape[0] != ci:
        raise ShapeError(f"conv3d: x channels {x.shape} vs kernel {kernel.shape}")
    st, sh, sw = stride
    pt, ph, pw = padding
    dims = x.shape[1:]
    ks = (kt, kh, kw)
    outs = []
    for dim, k, s, p in zip(dims, ks, (st, sh, sw), (pt, ph, pw)):
        o = (dim + 2 * p - k) // s + 1
        if dim + 2 * p < k:
            raise ShapeError(
                f"conv3d: kernel {kernel.shape} larger than padded input {x.shape} "
                f"with padding {padding}"
            )
        outs.append(o)
    To, Ho, Wo = outs
    xp = np.pad(x.data, ((0, 0), (pt, pt), (ph, ph), (pw, pw)))
    y = np.zeros((co, To, Ho, Wo), dtype=_DTYPE)
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                xs = xp[:, a: a + st * To: st, b: b + sh * Ho: sh, c: c + sw * Wo: sw]
                y += np.einsum("oc,cthw->othw", kernel.data[:, :, a, b, c], xs)
    out = Tensor._result(y, (x, kernel), None)
    if out.requires_grad:
        def bw(g, x=x, kernel=kernel, xp=xp):
            gxp = np.zeros_like(xp) if x.requires_grad else None
            for a in range(kt):
                for b in range(kh):
                    for c in range(kw):
                        sl = (
                            slice(None),
                            slice(a, a + st * To, st),
                            slice(b, b + sh * Ho, sh),
                            slice(c, c + sw * Wo, sw),
                        )
                        if kernel.requires_grad:
                            kernel.grad[:, :, a, b, c] += np.einsum(
                                "othw,cthw->oc", g, xp[sl]
                            )
                        if gxp is not None:
                            gxp[sl] += np.einsum(
                                "oc,othw->cthw", kernel.data[:, :, a, b, c], g
                            )
            if gxp is not None:
                x.grad += gxp[:, pt: pt + dims[0], ph: ph + dims[1], pw: pw + dims[2]]
        out._backward = bw
    return out


def conv1x1_channels(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-position channel mixing: (ch_in, ...) x (ch_out, ch_in) -> (ch_out, ...)."""
    if kernel.data.ndim != 2:
        raise ShapeError(f"conv1x1: kernel {kernel.shape} must be (ch_out, ch_in)")
    if x.shape[0] != kernel.shape[1]:
        raise ShapeError(
            f"conv1x1: x channels {x.shape} vs kernel {kernel.shape}"
        )
    rest = x.shape[1:]
    x2 = x.reshape(x.shape[0], -1)
    y2 = kernel @ x2
    return y2.reshape(kernel.shape[0], *rest)


@dataclass
class AttentionParams:
    """Projection weights for one multi-head attention layer."""
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    bo: Tensor
    heads: int

    def tensors(self):
        return {
            "wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo,
            "bq": self.bq, "bk": self.bk, "bv": self.bv, "bo": self.bo,
        }


def multi_head_attention(x: Tensor, params: AttentionParams,
                         causal_mask: bool = False) -> Tensor:
    """Scaled dot-product attention over (T, d_model) with optional causal mask."""
    T, d_model = x.shape
    h = params.heads
    if d_model % h != 0:
        raise ParameterError(
            f"d_model {d_model} not divisible by head count {h}"
        )
    dh = d_model // h
    q = linear(x, params.wq, params.bq)
    k = linear(x, params.wk, params.bk)
    v = linear(x, params.wv, params.bv)
    mask = None
    if causal_mask:
        mask = Tensor(np.triu(np.full((T, T), -1e30), k=1))
    heads_out = []
    scale = 1.0 / math.sqrt(dh)
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        qi, ki, vi = q[:, sl], k[:, sl], v[:, sl]
        scores = (qi @ ki.T) * scale
        if mask is not None:
            scores = scores + mask
        att = scores.softmax_lastdim()
        heads_out.append(att @ vi)
    merged = concat(heads_out, axis=1)
    return linear(merged, params.wo, params.bo)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return x.tanh()
    if kind == "relu":
        return x.relu()
    if kind == "softmax_lastdim":
        return x.softmax_lastdim()
    raise ParameterError(f"unknown activation kind {kind!r}")


# -- verification -------------------------------------------------------------


def grad_check(op_closure, inputs, eps: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``op_closure(*inputs)`` must return a scalar Tensor built from the given
    input tensors. Returns the max over all coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    out = op_closure(*inputs)
    backward(out)
    analytic = [np.array(t.grad, copy=True) for t in inputs if t.requires_grad]
    max_err = 0.0
    ai = 0
    for t in inputs:
        if not t.requires_grad:
            continue
        a = analytic[ai]
        ai += 1
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = float(op_closure(*inputs).data)
            flat[j] = orig - eps
            fm = float(op_closure(*inputs).data)
            flat[j] = orig
            numeric = (fp - fm) / (2.0 * eps)
            an = a.reshape(-1)[j]
            err = abs(an - numeric) / max(abs(an), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err
