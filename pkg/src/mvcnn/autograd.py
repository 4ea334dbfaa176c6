"""Minimal dense-tensor library with reverse-mode differentiation.

Implements exactly the layer set the classifier needs: 1D convolution
with same-shape zero padding, tanh, max pooling, channel concatenation,
a fused dense+softmax head, inverted dropout, cross-entropy, and Adam.
Tensors carry a [batch, ...] leading axis; the network in this package
uses [B, L, C] for convolutional activations and [B, F] after
flattening.

Graphs are built define-by-run: every op returns a new Tensor holding a
closure that routes its output gradient to its parents. Calling
``backward()`` on a scalar loss fills ``.grad`` on every tensor that
participated in producing it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChannelMismatch,
    InputTooShort,
    InvalidProbability,
    NotOneHot,
    ShapeMismatch,
)


class Tensor:
    """Dense n-dimensional array plus the autograd bookkeeping."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, dtype=None, parents=(), backward=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        """Reverse-mode sweep from a scalar; accumulates into .grad fields."""
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar loss")
        topo = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for parent in node._parents:
                visit(parent)
            topo.append(node)

        visit(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def _accumulate(tensor: Tensor, grad: np.ndarray):
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad += grad


@dataclass
class ConvFilterBank:
    """Learnable 1D filters: weights [out_channels, in_channels, width]."""

    weights: Tensor
    biases: Tensor

    def __post_init__(self):
        if self.weights.data.ndim != 3:
            raise ShapeMismatch("conv weights must be [out, in, width]")
        if self.biases.data.shape != (self.weights.data.shape[0],):
            raise ShapeMismatch("conv biases must be [out_channels]")

    @property
    def out_channels(self):
        return self.weights.data.shape[0]

    @property
    def in_channels(self):
        return self.weights.data.shape[1]

    @property
    def width(self):
        return self.weights.data.shape[2]


def conv1d_same(x: Tensor, bank: ConvFilterBank) -> Tensor:
    """Zero-padded stride-1 cross-correlation, pre-activation.

    Input [B, L, C_in] -> output [B, L, C_out]. Padding is
    floor((w-1)/2) left, ceil((w-1)/2) right, so output length always
    equals input length. tanh is applied by the caller.
    """
    if x.data.ndim != 3:
        raise ShapeMismatch(f"conv input must be [B, L, C], got {x.shape}")
    if x.data.shape[2] != bank.in_channels:
        raise ChannelMismatch(
            f"input has {x.data.shape[2]} channels, bank expects {bank.in_channels}"
        )
    batch, length, c_in = x.data.shape
    w = bank.width
    left = (w - 1) // 2
    right = w - 1 - left

    padded = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # [B, L, C_in, w]: window j of patch l reads padded position l + j
    patches = np.lib.stride_tricks.sliding_window_view(padded, w, axis=1)
    flat = patches.reshape(batch * length, c_in * w)
    # weight layout [out, in, w] -> [in*w, out] to match patch flattening
    wmat = bank.weights.data.transpose(1, 2, 0).reshape(c_in * w, bank.out_channels)
    out_data = (flat @ wmat).reshape(batch, length, bank.out_channels)
    out_data += bank.biases.data

    def backward(grad):
        grad2d = grad.reshape(batch * length, bank.out_channels)
        _accumulate(bank.biases, grad.sum(axis=(0, 1)))
        dwmat = flat.T @ grad2d
        _accumulate(
            bank.weights,
            dwmat.reshape(c_in, w, bank.out_channels).transpose(2, 0, 1),
        )
        dpatches = (grad2d @ wmat.T).reshape(batch, length, c_in, w)
        dpadded = np.zeros_like(padded)
        for j in range(w):
            dpadded[:, j : j + length, :] += dpatches[:, :, :, j]
        _accumulate(x, dpadded[:, left : left + length, :])

    return Tensor(out_data, parents=(x,), backward=backward)


def tanh_act(x: Tensor) -> Tensor:
    """Elementwise tanh; gradient is 1 - tanh^2."""
    out_data = np.tanh(x.data)

    def backward(grad):
        _accumulate(x, grad * (1.0 - out_data * out_data))

    return Tensor(out_data, parents=(x,), backward=backward)


def maxpool1d(x: Tensor, window: int = 3, stride: int = 3) -> Tensor:
    """Max pooling over the length axis of [B, L, C].

    Trailing positions that do not fill a window are dropped. The
    gradient routes to the first maximal position of each window.
    """
    if window != stride:
        raise ValueError("only window == stride pooling is supported")
    if x.data.ndim != 3:
        raise ShapeMismatch(f"pool input must be [B, L, C], got {x.shape}")
    batch, length, channels = x.data.shape
    if length < window:
        raise InputTooShort(f"length {length} < pooling window {window}")
    pooled_len = length // window
    trimmed = x.data[:, : pooled_len * window, :].reshape(
        batch, pooled_len, window, channels
    )
    out_data = trimmed.max(axis=2)

    def backward(grad):
        winners = trimmed.argmax(axis=2)  # first occurrence on ties
        dtrim = np.zeros_like(trimmed)
        np.put_along_axis(dtrim, winners[:, :, None, :], grad[:, :, None, :], axis=2)
        dx = np.zeros_like(x.data)
        dx[:, : pooled_len * window, :] = dtrim.reshape(
            batch, pooled_len * window, channels
        )
        _accumulate(x, dx)

    return Tensor(out_data, parents=(x,), backward=backward)


def concat_channels(tensors: list[Tensor]) -> Tensor:
    """Concatenate [B, L, C_i] tensors along the channel axis."""
    first = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape[:2] != first[:2]:
            raise ShapeMismatch("channel concat requires matching [B, L]")
    out_data = np.concatenate([t.data for t in tensors], axis=2)
    splits = np.cumsum([t.data.shape[2] for t in tensors])[:-1]

    def backward(grad):
        for t, piece in zip(tensors, np.split(grad, splits, axis=2)):
            _accumulate(t, piece)

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


def flatten(x: Tensor) -> Tensor:
    """Collapse all non-batch axes: [B, ...] -> [B, F]."""
    batch = x.data.shape[0]
    out_data = x.data.reshape(batch, -1)

    def backward(grad):
        _accumulate(x, grad.reshape(x.data.shape))

    return Tensor(out_data, parents=(x,), backward=backward)


def dense_softmax(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Fully-connected layer followed by a row-wise softmax.

    Logits are shifted by their row max before exponentiation, so the
    output is shift-invariant and never overflows.
    """
    if x.data.ndim != 2:
        raise ShapeMismatch(f"dense input must be [B, F], got {x.shape}")
    if weights.data.ndim != 2 or x.data.shape[1] != weights.data.shape[0]:
        raise ShapeMismatch(
            f"dense weights {weights.data.shape} incompatible with input {x.shape}"
        )
    if bias.data.shape != (weights.data.shape[1],):
        raise ShapeMismatch("dense bias must be [H]")
    logits = x.data @ weights.data + bias.data
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def backward(grad):
        # through the softmax jacobian, then the affine map
        dlogits = probs * (grad - (grad * probs).sum(axis=1, keepdims=True))
        _accumulate(weights, x.data.T @ dlogits)
        _accumulate(bias, dlogits.sum(axis=0))
        _accumulate(x, dlogits @ weights.data.T)

    return Tensor(probs, parents=(x, weights, bias), backward=backward)


def dropout(x: Tensor, keep_prob: float, train: bool, seed: int = 0) -> Tensor:
    """Inverted dropout: keep with probability keep_prob, scale by its inverse.

    Eval mode is the identity. Deterministic per seed.

    Raises:
        InvalidProbability: keep_prob outside (0, 1].
    """
    if not 0.0 < keep_prob <= 1.0:
        raise InvalidProbability(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not train or keep_prob == 1.0:
        return x
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = (rng.random(x.data.shape) < keep_prob).astype(x.data.dtype)
    scale = 1.0 / keep_prob
    out_data = x.data * mask * scale

    def backward(grad):
        _accumulate(x, grad * mask * scale)

    return Tensor(out_data, parents=(x,), backward=backward)


PROB_FLOOR = 1e-12


def cross_entropy(probs: Tensor, one_hot) -> Tensor:
    """Mean negative log-probability of the true class.

    probs is [B, H] (rows summing to 1); one_hot is a matching 0/1
    array with exactly one 1 per row. Probabilities are clipped to
    [1e-12, 1] before the log, so the loss is always finite.

    Raises:
        NotOneHot: label rows are not valid one-hot vectors.
    """
    labels = np.asarray(one_hot)
    if labels.ndim == 1:
        labels = labels[None, :]
    if labels.shape != probs.data.shape:
        raise ShapeMismatch(
            f"labels {labels.shape} do not match probabilities {probs.data.shape}"
        )
    if not (
        np.all((labels == 0) | (labels == 1))
        and np.all(labels.sum(axis=1) == 1)
    ):
        raise NotOneHot("labels must contain exactly one 1 per row")
    batch = probs.data.shape[0]
    clipped = np.clip(probs.data, PROB_FLOOR, 1.0)
    loss = -(labels * np.log(clipped)).sum() / batch

    def backward(grad):
        # clip is flat below the floor, so those entries get no gradient
        inside = probs.data >= PROB_FLOOR
        dp = -(labels * inside) / clipped / batch
        _accumulate(probs, dp * grad)

    return Tensor(np.asarray(loss, dtype=probs.data.dtype),
                  parents=(probs,), backward=backward)


# --- optimizer ---

@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators for Adam."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], learning_rate: float = 0.001):
        state = cls(learning_rate=learning_rate)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update; mutates params and state in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and state must have matching lengths")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad.shape != param.data.shape:
            raise ShapeMismatch(
                f"grad shape {grad.shape} != param shape {param.data.shape}"
            )
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad * grad
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


# --- numerical validation ---

def max_relative_error(a, b) -> float:
    """max |a-b| / max(|a|, |b|, 1e-8), elementwise over arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def grad_check(loss_fn, params: list[Tensor], h: float = 1e-5,
               n_samples: int = 24, seed: int = 0) -> float:
    """Compare analytic gradients against central finite differences.

    loss_fn() must rebuild the loss graph from the current parameter
    values (and must be deterministic: dropout off). Samples n_samples
    parameter entries uniformly across all tensors and returns the
    worst relative error.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
    ]

    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for pick in picks:
        which = int(np.searchsorted(offsets, pick, side="right") - 1)
        index = int(pick - offsets[which])
        param = params[which]
        original = param.data.flat[index]
        param.data.flat[index] = original + h
        plus = float(loss_fn().data)
        param.data.flat[index] = original - h
        minus = float(loss_fn().data)
        param.data.flat[index] = original
        numeric = (plus - minus) / (2.0 * h)
        worst = max(worst, max_relative_error(analytic[which].flat[index], numeric))
    return worst
