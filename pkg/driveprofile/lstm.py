"""Stacked LSTM with a dense regression head, forward pass and exact BPTT gradients.

Gate blocks are ordered input (i), forget (f), candidate (g), output (o):

    i = sigmoid(W_i x + U_i h + b_i)    f = sigmoid(W_f x + U_f h + b_f)
    g = tanh(W_g x + U_g h + b_g)       o = sigmoid(W_o x + U_o h + b_o)
    c' = f * c + i * g                  h' = o * tanh(c')

Only the top layer's final hidden state feeds the head (sequence-to-one).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from .errors import ModelError
from .models import NUM_FEATURES

GATES: Tuple[str, ...] = ("i", "f", "g", "o")

Gradients = Dict[str, np.ndarray]


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


@dataclass
class LstmModel:
    hidden_size: int
    num_layers: int
    params: Dict[str, np.ndarray]
    input_size: int = NUM_FEATURES
    dense_size: int = 0
    window_size: int = 0

    @property
    def output_size(self) -> int:
        return self.params["head.bias"].shape[0]

    def names(self) -> List[str]:
        return list(self.params)

    def parameter_count(self) -> int:
        return sum(int(tensor.size) for tensor in self.params.values())

    def signature(self) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
        return tuple((name, tensor.shape) for name, tensor in self.params.items())

    def copy(self) -> "LstmModel":
        return LstmModel(
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            params={name: tensor.copy() for name, tensor in self.params.items()},
            input_size=self.input_size,
            dense_size=self.dense_size,
            window_size=self.window_size,
        )

    def zeros_like(self) -> Gradients:
        return {name: np.zeros_like(tensor) for name, tensor in self.params.items()}

    def layer_input_size(self, layer: int) -> int:
        return self.input_size if layer == 0 else self.hidden_size

    def stacked(self, layer: int, dtype: type = np.float64) -> Tuple[np.ndarray, ...]:
        """(W, U, b) with the four gate blocks stacked along the first axis."""
        prefix = f"lstm{layer}"
        return tuple(
            np.concatenate([self.params[f"{prefix}.{kind}_{gate}"] for gate in GATES]).astype(
                dtype, copy=False
            )
            for kind in ("W", "U", "b")
        )


def parameter_shapes(
    hidden_size: int,
    num_layers: int,
    input_size: int = NUM_FEATURES,
    dense_size: int = 0,
    output_size: int = NUM_FEATURES,
) -> Dict[str, Tuple[int, ...]]:
    """Canonical parameter order; checkpoints store tensors in exactly this order."""
    shapes: Dict[str, Tuple[int, ...]] = {}
    for layer in range(num_layers):
        in_dim = input_size if layer == 0 else hidden_size
        for gate in GATES:
            shapes[f"lstm{layer}.W_{gate}"] = (hidden_size, in_dim)
        for gate in GATES:
            shapes[f"lstm{layer}.U_{gate}"] = (hidden_size, hidden_size)
        for gate in GATES:
            shapes[f"lstm{layer}.b_{gate}"] = (hidden_size,)
    head_in = hidden_size
    if dense_size:
        shapes["dense.weight"] = (dense_size, hidden_size)
        shapes["dense.bias"] = (dense_size,)
        head_in = dense_size
    shapes["head.weight"] = (output_size, head_in)
    shapes["head.bias"] = (output_size,)
    return shapes


def init_model(
    hidden_size: int,
    num_layers: int,
    seed: int,
    dense_size: int = 0,
    input_size: int = NUM_FEATURES,
    window_size: int = 0,
) -> LstmModel:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases, forget bias 1."""
    if hidden_size < 1 or num_layers < 1:
        raise ModelError(
            f"hidden_size and num_layers must be >= 1, got {hidden_size} and {num_layers}"
        )
    if dense_size < 0 or input_size < 1:
        raise ModelError(f"invalid sizes: dense_size={dense_size}, input_size={input_size}")

    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_size)
    params: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(hidden_size, num_layers, input_size, dense_size).items():
        if not is_bias(name):
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".b_f"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return LstmModel(
        hidden_size=hidden_size,
        num_layers=num_layers,
        params=params,
        input_size=input_size,
        dense_size=dense_size,
        window_size=window_size,
    )


@dataclass
class LayerCache:
    inputs: np.ndarray
    preact: np.ndarray
    gates: np.ndarray
    cells: np.ndarray
    hidden: np.ndarray


@dataclass
class ForwardCache:
    layers: List[LayerCache]
    features: np.ndarray
    prediction: np.ndarray
    signature: Tuple[Tuple[str, Tuple[int, ...]], ...]
    batched: bool
    dense_out: Optional[np.ndarray] = field(default=None)

    def __len__(self) -> int:
        return int(self.layers[0].inputs.shape[1])


def _activate(preact: np.ndarray, hidden: int) -> np.ndarray:
    gates = expit(preact)
    gates[:, 2 * hidden : 3 * hidden] = np.tanh(preact[:, 2 * hidden : 3 * hidden])
    return gates


def forward(
    model: LstmModel, inputs: np.ndarray, dtype: type = np.float64
) -> Tuple[np.ndarray, ForwardCache]:
    """Predict the next frame for one (W, 12) sequence or a (B, W, 12) batch."""
    x = np.asarray(inputs, dtype=dtype)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_size or x.shape[1] < 1:
        raise ModelError(
            f"expected input of shape (W, {model.input_size}) with W >= 1, "
            f"got {np.shape(inputs)}"
        )

    batch, steps, _ = x.shape
    hidden = model.hidden_size
    layers: List[LayerCache] = []
    for layer in range(model.num_layers):
        w, u, b = model.stacked(layer, dtype)
        projected = x @ w.T + b
        preact = np.empty((batch, steps, 4 * hidden), dtype=dtype)
        gates = np.empty_like(preact)
        cells = np.empty((batch, steps, hidden), dtype=dtype)
        states = np.empty_like(cells)
        h = np.zeros((batch, hidden), dtype=dtype)
        c = np.zeros((batch, hidden), dtype=dtype)
        for t in range(steps):
            z = projected[:, t] + h @ u.T
            a = _activate(z, hidden)
            c = a[:, hidden : 2 * hidden] * c + a[:, :hidden] * a[:, 2 * hidden : 3 * hidden]
            h = a[:, 3 * hidden :] * np.tanh(c)
            preact[:, t], gates[:, t], cells[:, t], states[:, t] = z, a, c, h
        layers.append(LayerCache(inputs=x, preact=preact, gates=gates, cells=cells, hidden=states))
        x = states

    features = x[:, -1]
    dense_out = None
    if model.dense_size:
        dense_out = np.tanh(
            features @ model.params["dense.weight"].T.astype(dtype, copy=False)
            + model.params["dense.bias"].astype(dtype, copy=False)
        )
    head_in = features if dense_out is None else dense_out
    prediction = head_in @ model.params["head.weight"].T.astype(dtype, copy=False) + model.params[
        "head.bias"
    ].astype(dtype, copy=False)

    cache = ForwardCache(
        layers=layers,
        features=features,
        prediction=prediction,
        signature=model.signature(),
        batched=batched,
        dense_out=dense_out,
    )
    return (prediction if batched else prediction[0]), cache


def backward(model: LstmModel, cache: ForwardCache, grad_output: np.ndarray) -> Gradients:
    """Gradients of sum(prediction * grad_output) with respect to every parameter."""
    if cache.signature != model.signature():
        raise ModelError("forward cache was produced by a model with different dimensions")
    g = np.asarray(grad_output, dtype=np.float64).reshape(cache.prediction.shape)
    grads = model.zeros_like()
    hidden = model.hidden_size

    head_in = cache.features if cache.dense_out is None else cache.dense_out
    grads["head.weight"] = g.T @ head_in
    grads["head.bias"] = g.sum(axis=0)
    d_features = g @ model.params["head.weight"]
    if cache.dense_out is not None:
        d_dense = d_features * (1.0 - cache.dense_out**2)
        grads["dense.weight"] = d_dense.T @ cache.features
        grads["dense.bias"] = d_dense.sum(axis=0)
        d_features = d_dense @ model.params["dense.weight"]

    top = cache.layers[-1]
    d_states = np.zeros_like(top.hidden)
    d_states[:, -1] = d_features
    for layer in reversed(range(model.num_layers)):
        lc = cache.layers[layer]
        w, u, _ = model.stacked(layer)
        batch, steps, _ = lc.hidden.shape
        d_preact = np.empty_like(lc.preact)
        dh_next = np.zeros((batch, hidden))
        dc_next = np.zeros((batch, hidden))
        for t in reversed(range(steps)):
            a = lc.gates[:, t]
            i, f = a[:, :hidden], a[:, hidden : 2 * hidden]
            cand, o = a[:, 2 * hidden : 3 * hidden], a[:, 3 * hidden :]
            c_prev = lc.cells[:, t - 1] if t > 0 else np.zeros((batch, hidden))
            tanh_c = np.tanh(lc.cells[:, t])

            dh = d_states[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c**2)
            dz = np.concatenate(
                (
                    dc * cand * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - cand**2),
                    dh * tanh_c * o * (1.0 - o),
                ),
                axis=1,
            )
            d_preact[:, t] = dz
            dc_next = dc * f
            dh_next = dz @ u

        h_prev = np.concatenate((np.zeros((batch, 1, hidden)), lc.hidden[:, :-1]), axis=1)
        flat = d_preact.reshape(-1, 4 * hidden)
        d_w = flat.T @ lc.inputs.reshape(-1, lc.inputs.shape[2])
        d_u = flat.T @ h_prev.reshape(-1, hidden)
        d_b = flat.sum(axis=0)
        for k, gate in enumerate(GATES):
            block = slice(k * hidden, (k + 1) * hidden)
            grads[f"lstm{layer}.W_{gate}"] = d_w[block]
            grads[f"lstm{layer}.U_{gate}"] = d_u[block]
            grads[f"lstm{layer}.b_{gate}"] = d_b[block]
        d_states = d_preact @ w
    return grads
