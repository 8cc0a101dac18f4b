"""Feed-forward and recurrent baselines trained by full-batch gradient descent.

Both networks carry analytic gradients of the squared error that are checked
against central finite differences in the test suite; that check is the
contract everything else here leans on. Training uses safeguarded full-batch
descent: the loss is monitored every epoch and the rate is halved whenever
it increases. Inverted dropout can be applied to hidden activations during
training only; a rate of 0 bypasses the masking code path entirely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lagfeat import SupervisedMatrix

# Gate order inside the stacked recurrent parameter arrays.
FORGET, INPUT, CELL, OUTPUT = 0, 1, 2, 3


class TrainingError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# ---------------------------------------------------------------------------
# Multi-layer perceptron
# ---------------------------------------------------------------------------

@dataclass
class MlpModel:
    """Dense layers with tanh hidden activations and a linear scalar output."""

    weights: list
    biases: list
    activations: tuple

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights],
                        [b.copy() for b in self.biases],
                        self.activations)


@dataclass
class MlpGradients:
    weights: list
    biases: list


def make_mlp(layer_sizes, seed: int = 0) -> MlpModel:
    """Network with the given sizes, e.g. (d, 10, 10, 1) for two hidden layers.

    Weights are drawn uniformly from [-r, r] with r = 1/sqrt(fan_in);
    biases start at zero. The output layer is linear and must have size 1.
    """
    if len(layer_sizes) < 2 or layer_sizes[-1] != 1:
        raise ValueError("layer_sizes must end in a scalar output layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        r = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    activations = ("tanh",) * (len(weights) - 1) + ("identity",)
    return MlpModel(weights, biases, activations)


def _apply_activation(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "tanh":
        return np.tanh(z)
    if tag == "identity":
        return z
    raise ValueError(f"unknown activation {tag!r}")


def mlp_forward(model: MlpModel, x: np.ndarray):
    """Single-sample forward pass; returns (prediction, cache for backprop)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.weights[0].shape[1],):
        raise ValueError(f"expected input of shape ({model.weights[0].shape[1]},), got {x.shape}")
    pre, post = [], [x]
    a = x
    for W, b, tag in zip(model.weights, model.biases, model.activations):
        z = W @ a + b
        a = _apply_activation(tag, z)
        pre.append(z)
        post.append(a)
    return float(a[0]), {"pre": pre, "post": post}


def mlp_backward(model: MlpModel, cache: dict, target: float) -> MlpGradients:
    """Gradients of (prediction - target)^2 for every weight and bias."""
    pre, post = cache["pre"], cache["post"]
    if len(pre) != len(model.weights) or post[0].shape != (model.weights[0].shape[1],):
        raise ValueError("cache does not match this model")
    prediction = float(post[-1][0])
    grad_w = [np.zeros_like(W) for W in model.weights]
    grad_b = [np.zeros_like(b) for b in model.biases]

    upstream = np.array([2.0 * (prediction - target)])
    for layer in reversed(range(len(model.weights))):
        tag = model.activations[layer]
        if tag == "tanh":
            delta = upstream * (1.0 - post[layer + 1] ** 2)
        else:
            delta = upstream
        grad_w[layer] = np.outer(delta, post[layer])
        grad_b[layer] = delta
        upstream = model.weights[layer].T @ delta
    return MlpGradients(grad_w, grad_b)


def _mlp_forward_batch(model: MlpModel, X: np.ndarray, dropout: float = 0.0,
                       rng: np.random.Generator | None = None):
    pre, post, masks = [], [X], []
    a = X
    last = len(model.weights) - 1
    for layer, (W, b, tag) in enumerate(zip(model.weights, model.biases, model.activations)):
        z = a @ W.T + b
        a = _apply_activation(tag, z)
        mask = None
        if dropout > 0.0 and layer < last:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        pre.append(z)
        post.append(a)
        masks.append(mask)
    return post[-1][:, 0], {"pre": pre, "post": post, "masks": masks}


def _mlp_backward_batch(model: MlpModel, cache: dict, y: np.ndarray) -> MlpGradients:
    """Batch gradients of mean squared error."""
    pre, post, masks = cache["pre"], cache["post"], cache["masks"]
    n = len(y)
    predictions = post[-1][:, 0]
    upstream = (2.0 / n) * (predictions - y)[:, None]
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    for layer in reversed(range(len(model.weights))):
        if masks[layer] is not None:
            upstream = upstream * masks[layer]
        if model.activations[layer] == "tanh":
            activ = post[layer + 1]
            if masks[layer] is not None:
                activ = pre[layer]
                delta = upstream * (1.0 - np.tanh(activ) ** 2)
            else:
                delta = upstream * (1.0 - activ ** 2)
        else:
            delta = upstream
        grad_w[layer] = delta.T @ post[layer]
        grad_b[layer] = delta.sum(axis=0)
        upstream = delta @ model.weights[layer]
    return MlpGradients(grad_w, grad_b)


# ---------------------------------------------------------------------------
# Recurrent cell
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Gate parameters stacked in (forget, input, cell, output) order.

    ``input_weights`` is (4, H, D), ``recurrent_weights`` (4, H, H),
    ``gate_biases`` (4, H); the readout maps the final hidden vector to a
    scalar.
    """

    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    gate_biases: np.ndarray
    readout_weights: np.ndarray
    readout_bias: float

    @property
    def hidden_dim(self) -> int:
        return self.input_weights.shape[1]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[2]

    def copy(self) -> "LstmParams":
        return LstmParams(self.input_weights.copy(), self.recurrent_weights.copy(),
                          self.gate_biases.copy(), self.readout_weights.copy(),
                          self.readout_bias)


@dataclass
class LstmGradients:
    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    gate_biases: np.ndarray
    readout_weights: np.ndarray
    readout_bias: float


@dataclass(frozen=True)
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray


def zero_state(hidden_dim: int) -> LstmState:
    return LstmState(hidden=np.zeros(hidden_dim), cell=np.zeros(hidden_dim))


def make_lstm(input_dim: int, hidden_dim: int, seed: int = 0) -> LstmParams:
    rng = np.random.default_rng(seed)
    r = 1.0 / np.sqrt(input_dim + hidden_dim)
    return LstmParams(
        input_weights=rng.uniform(-r, r, size=(4, hidden_dim, input_dim)),
        recurrent_weights=rng.uniform(-r, r, size=(4, hidden_dim, hidden_dim)),
        gate_biases=np.zeros((4, hidden_dim)),
        readout_weights=rng.uniform(-1.0 / np.sqrt(hidden_dim), 1.0 / np.sqrt(hidden_dim),
                                    size=hidden_dim),
        readout_bias=0.0,
    )


def lstm_step(params: LstmParams, state: LstmState, x: np.ndarray) -> LstmState:
    """One cell update: forget/input gates blend the carried cell state with
    the candidate values, and the output gate exposes tanh of the result."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_dim,):
        raise ValueError(f"expected input of shape ({params.input_dim},), got {x.shape}")
    h, c = state.hidden, state.cell
    pre = params.input_weights @ x + params.recurrent_weights @ h + params.gate_biases
    forget = _sigmoid(pre[FORGET])
    gate_in = _sigmoid(pre[INPUT])
    candidate = np.tanh(pre[CELL])
    cell = forget * c + gate_in * candidate
    gate_out = _sigmoid(pre[OUTPUT])
    hidden = gate_out * np.tanh(cell)
    return LstmState(hidden=hidden, cell=cell)


def lstm_forward_seq(params: LstmParams, xs: np.ndarray):
    """Fold the cell over a (T, D) sequence from a zero state and read out
    the final hidden vector; returns (prediction, cache for BPTT)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError(f"need a non-empty (T, D) sequence, got shape {xs.shape}")
    yhat, cache = _lstm_forward_batch(params, xs[None, :, :])
    return float(yhat[0]), cache


def _lstm_forward_batch(params: LstmParams, sequences: np.ndarray):
    seqs = np.asarray(sequences, dtype=float)
    n, T, D = seqs.shape
    if D != params.input_dim:
        raise ValueError(f"expected input dim {params.input_dim}, got {D}")
    H = params.hidden_dim
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    steps = []
    for t in range(T):
        x = seqs[:, t, :]
        pre = (np.einsum("ghd,nd->gnh", params.input_weights, x)
               + np.einsum("ghk,nk->gnh", params.recurrent_weights, h)
               + params.gate_biases[:, None, :])
        forget = _sigmoid(pre[FORGET])
        gate_in = _sigmoid(pre[INPUT])
        candidate = np.tanh(pre[CELL])
        cell = forget * c + gate_in * candidate
        gate_out = _sigmoid(pre[OUTPUT])
        tanh_cell = np.tanh(cell)
        hidden = gate_out * tanh_cell
        steps.append({"x": x, "h_prev": h, "c_prev": c, "forget": forget,
                      "gate_in": gate_in, "candidate": candidate, "gate_out": gate_out,
                      "cell": cell, "tanh_cell": tanh_cell})
        h, c = hidden, cell
    yhat = h @ params.readout_weights + params.readout_bias
    return yhat, {"steps": steps, "h_last": h, "yhat": yhat}


def lstm_backward_seq(params: LstmParams, cache: dict, target: float) -> LstmGradients:
    """Backpropagation through time of (prediction - target)^2."""
    grads = _lstm_backward_batch(params, cache, np.array([float(target)]), mean_loss=False)
    return grads


def _lstm_backward_batch(params: LstmParams, cache: dict, y: np.ndarray,
                         mean_loss: bool = True, readout_mask: np.ndarray | None = None) -> LstmGradients:
    steps, h_last, yhat = cache["steps"], cache["h_last"], cache["yhat"]
    n = len(y)
    scale = 2.0 / n if mean_loss else 2.0
    dyhat = scale * (yhat - y)

    h_for_readout = h_last if readout_mask is None else h_last * readout_mask
    d_readout_w = dyhat @ h_for_readout
    d_readout_b = float(dyhat.sum())
    dh = dyhat[:, None] * params.readout_weights[None, :]
    if readout_mask is not None:
        dh = dh * readout_mask
    dc = np.zeros_like(dh)

    dwx = np.zeros_like(params.input_weights)
    dwh = np.zeros_like(params.recurrent_weights)
    dbias = np.zeros_like(params.gate_biases)

    for step in reversed(steps):
        forget, gate_in = step["forget"], step["gate_in"]
        candidate, gate_out = step["candidate"], step["gate_out"]
        tanh_cell = step["tanh_cell"]

        d_out = dh * tanh_cell
        dc = dc + dh * gate_out * (1.0 - tanh_cell ** 2)
        d_forget = dc * step["c_prev"]
        d_in = dc * candidate
        d_candidate = dc * gate_in

        pre_grads = np.empty((4,) + dh.shape)
        pre_grads[FORGET] = d_forget * forget * (1.0 - forget)
        pre_grads[INPUT] = d_in * gate_in * (1.0 - gate_in)
        pre_grads[CELL] = d_candidate * (1.0 - candidate ** 2)
        pre_grads[OUTPUT] = d_out * gate_out * (1.0 - gate_out)

        dwx += np.einsum("gnh,nd->ghd", pre_grads, step["x"])
        dwh += np.einsum("gnh,nk->ghk", pre_grads, step["h_prev"])
        dbias += pre_grads.sum(axis=1)

        dh = np.einsum("ghk,gnh->nk", params.recurrent_weights, pre_grads)
        dc = dc * forget

    return LstmGradients(dwx, dwh, dbias, d_readout_w, d_readout_b)


def sequence_inputs(m: SupervisedMatrix) -> np.ndarray:
    """Per-year input sequences for the recurrent model, oldest year first.

    Each design-matrix row becomes a (lag+1, p+1) sequence: the p predictor
    values for that year plus one slot holding the known target for past
    years (zero for the year being predicted, where it is unknown).
    """
    lag = m.lag
    p = (m.d - lag) // (lag + 1)
    if p * (lag + 1) + lag != m.d:
        raise ValueError(f"matrix width {m.d} is not lag-structured for lag {lag}")
    seqs = np.zeros((m.n, lag + 1, p + 1))
    for step in range(lag + 1):
        offset = lag - step
        seqs[:, step, :p] = m.X[:, offset * p:(offset + 1) * p]
        if offset >= 1:
            seqs[:, step, p] = m.X[:, p * (lag + 1) + (offset - 1)]
    return seqs


# ---------------------------------------------------------------------------
# Shared training loop
# ---------------------------------------------------------------------------

def train_gd(model, data, epochs: int = 500, rate: float = 0.05, dropout: float = 0.0,
             seed: int = 0):
    """Safeguarded full-batch gradient descent on mean squared error.

    ``data`` is a SupervisedMatrix or an (inputs, targets) pair; recurrent
    models take (n, T, D) sequences, built automatically from a
    SupervisedMatrix via :func:`sequence_inputs`. Dropout masks hidden
    activations (inverted scaling) during training only. The rate is halved
    whenever the monitored loss increases; a non-finite loss raises
    TrainingError with the offending epoch. Deterministic given ``seed``.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout must lie in [0, 1), got {dropout}")

    if isinstance(model, MlpModel):
        if isinstance(data, SupervisedMatrix):
            inputs, targets = data.X, data.y
        else:
            inputs, targets = data
        return _train_mlp(model.copy(), np.asarray(inputs, dtype=float),
                          np.asarray(targets, dtype=float), epochs, rate, dropout, seed)
    if isinstance(model, LstmParams):
        if isinstance(data, SupervisedMatrix):
            inputs, targets = sequence_inputs(data), data.y
        else:
            inputs, targets = data
        return _train_lstm(model.copy(), np.asarray(inputs, dtype=float),
                           np.asarray(targets, dtype=float), epochs, rate, dropout, seed)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _check_loss(loss: float, epoch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingError(epoch, loss)


def _train_mlp(model: MlpModel, X, y, epochs, rate, dropout, seed) -> MlpModel:
    rng = np.random.default_rng(seed)
    previous = np.inf
    for epoch in range(1, epochs + 1):
        yhat, cache = _mlp_forward_batch(model, X, dropout, rng)
        loss = float(np.mean((yhat - y) ** 2))
        _check_loss(loss, epoch)
        if loss > previous:
            rate *= 0.5
        previous = loss
        grads = _mlp_backward_batch(model, cache, y)
        for W, b, gw, gb in zip(model.weights, model.biases, grads.weights, grads.biases):
            W -= rate * gw
            b -= rate * gb
    return model


def _train_lstm(params: LstmParams, sequences, y, epochs, rate, dropout, seed) -> LstmParams:
    rng = np.random.default_rng(seed)
    previous = np.inf
    for epoch in range(1, epochs + 1):
        yhat, cache = _lstm_forward_batch(params, sequences)
        mask = None
        if dropout > 0.0:
            mask = (rng.random(cache["h_last"].shape) >= dropout) / (1.0 - dropout)
            yhat = (cache["h_last"] * mask) @ params.readout_weights + params.readout_bias
            cache = dict(cache, yhat=yhat)
        loss = float(np.mean((yhat - y) ** 2))
        _check_loss(loss, epoch)
        if loss > previous:
            rate *= 0.5
        previous = loss
        grads = _lstm_backward_batch(params, cache, y, readout_mask=mask)
        params.input_weights -= rate * grads.input_weights
        params.recurrent_weights -= rate * grads.recurrent_weights
        params.gate_biases -= rate * grads.gate_biases
        params.readout_weights -= rate * grads.readout_weights
        params.readout_bias -= rate * grads.readout_bias
    return params


def predict_mlp(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.weights[0].shape[1]:
        raise ValueError(f"expected {model.weights[0].shape[1]} features, got shape {X.shape}")
    yhat, _ = _mlp_forward_batch(model, X)
    return yhat


def predict_lstm(params: LstmParams, sequences: np.ndarray) -> np.ndarray:
    yhat, _ = _lstm_forward_batch(params, np.asarray(sequences, dtype=float))
    return yhat
