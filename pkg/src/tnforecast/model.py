"""Tree tensor network model: 7 inputs -> 5 -> 3 -> 1 output through rank-4 contractions.

Node ``j`` of layer ``l`` contracts nodes ``j, j+1, j+2`` of layer ``l-1``.
Layers 1 and 2 apply the model's activation (logistic sigmoid by default),
the output layer does not.  In homogeneous mode
each layer stores a single tensor shared by all of its nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import Scaler
from .dynamics import fmt
from .tensor_core import (
    ACTIVATIONS,
    ContractionCache,
    ShapeError,
    activation,
    activation_derivative,
    as_weight,
    contract3,
    contract3_backward,
)

WINDOW = 7
ARITY = 3
FORMAT_VERSION = 1
DEFAULT_ACTIVATION = "sigmoid"


class ParamMode(str, Enum):
    HOMOGENEOUS = "homogeneous"
    INHOMOGENEOUS = "inhomogeneous"


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    d: int
    D: int

    window: int = WINDOW
    arity: int = ARITY

    @property
    def layer_node_counts(self) -> list[int]:
        counts = [self.window]
        while counts[-1] > 1:
            counts.append(counts[-1] - (self.arity - 1))
        return counts

    def layer_shapes(self) -> list[tuple[int, int, int, int]]:
        d, D = self.d, self.D
        return [(D, d, d, d), (D, D, D, D), (d, D, D, D)]


@dataclass
class TnmModel:
    d: int
    D: int
    mode: ParamMode
    seed: int
    weights: list[list[np.ndarray]]
    scaler: Scaler | None = field(default=None)
    activation: str = DEFAULT_ACTIVATION

    @property
    def topology(self) -> Topology:
        return Topology(self.d, self.D)

    def layer_tensor(self, layer: int, node: int) -> np.ndarray:
        ws = self.weights[layer]
        return ws[0] if len(ws) == 1 else ws[node]

    def copy(self) -> "TnmModel":
        return TnmModel(self.d, self.D, self.mode, self.seed,
                        [[w.copy() for w in layer] for layer in self.weights],
                        self.scaler, self.activation)

    def flat_params(self) -> list[np.ndarray]:
        return [w for layer in self.weights for w in layer]


def stored_counts(mode: ParamMode) -> list[int]:
    mode = ParamMode(mode)
    if mode is ParamMode.HOMOGENEOUS:
        return [1, 1, 1]
    return Topology(1, 1).layer_node_counts[1:]


def build_model(d: int, D: int, mode=ParamMode.INHOMOGENEOUS, seed: int = 0,
                activation: str = DEFAULT_ACTIVATION) -> TnmModel:
    """Weights ~ U[-s, s] with s = fan_in**-0.5, fan_in the product of the three contracted dims."""
    if d < 1 or D < 1:
        raise ValueError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    mode = ParamMode(mode)
    _activation_check(activation)
    rng = np.random.default_rng(seed)
    weights = []
    for shape, count in zip(Topology(d, D).layer_shapes(), stored_counts(mode)):
        bound = float(np.prod(shape[1:])) ** -0.5
        weights.append([rng.uniform(-bound, bound, size=shape) for _ in range(count)])
    return TnmModel(d, D, mode, seed, weights, activation=activation)


def _activation_check(kind: str) -> None:
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)}")


def param_count(model: TnmModel) -> int:
    return sum(w.size for w in model.flat_params())


def tie(model: TnmModel, mode: ParamMode) -> TnmModel:
    """Re-express ``model`` in another mode.

    Going homogeneous -> inhomogeneous replicates each shared tensor; the
    reverse requires all node tensors of a layer to be equal.
    """
    mode = ParamMode(mode)
    if mode is model.mode:
        return model.copy()
    if mode is ParamMode.INHOMOGENEOUS:
        weights = [[layer[0].copy() for _ in range(n)]
                   for layer, n in zip(model.weights, stored_counts(mode))]
    else:
        weights = []
        for layer in model.weights:
            if any(not np.array_equal(layer[0], w) for w in layer[1:]):
                raise ValueError("layer tensors differ; cannot tie")
            weights.append([layer[0].copy()])
    return TnmModel(model.d, model.D, mode, model.seed, weights, model.scaler, model.activation)


def _as_batch(model: TnmModel, windows) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != WINDOW or x.shape[2] != model.d:
        raise ShapeError(f"expected windows of shape (B, {WINDOW}, {model.d}), got {np.shape(windows)}")
    return x, single


def forward(model: TnmModel, windows):
    """Predict the next state for one window ``(7, d)`` or a batch ``(B, 7, d)``.

    Returns ``(prediction, cache)``; the cache is a list of layers, each a
    list of per-node :class:`ContractionCache`.
    """
    x, single = _as_batch(model, windows)
    nodes = [x[:, j] for j in range(WINDOW)]
    cache = []
    n_layers = len(model.weights)
    for layer in range(n_layers):
        last = layer == n_layers - 1
        out, layer_cache = [], []
        for j in range(len(nodes) - ARITY + 1):
            inputs = (nodes[j], nodes[j + 1], nodes[j + 2])
            pre = contract3(model.layer_tensor(layer, j), *inputs)
            post = pre if last else activation(pre, model.activation)
            layer_cache.append(ContractionCache(inputs, pre, post))
            out.append(post)
        cache.append(layer_cache)
        nodes = out
    pred = nodes[0]
    return (pred[0] if single else pred), cache


def predict(model: TnmModel, windows) -> np.ndarray:
    return forward(model, windows)[0]


def backward(model: TnmModel, cache, grad_prediction) -> list[list[np.ndarray]]:
    """Weight gradients of ``sum(grad_prediction * prediction)``, summed over the batch.

    The returned structure mirrors ``model.weights``: shared tensors receive
    the sum of their nodes' gradients.
    """
    counts = [len(c) for c in cache]
    if counts != Topology(model.d, model.D).layer_node_counts[1:]:
        raise RuntimeError(f"cache has node counts {counts}, not produced by this model")
    g = np.asarray(grad_prediction, dtype=np.float64)
    if g.ndim == 1:
        g = g[None]
    if g.shape != cache[-1][0].post_activation.reshape(-1, model.d).shape:
        raise RuntimeError(f"gradient shape {g.shape} does not match cache output")

    grads = [[np.zeros_like(w) for w in layer] for layer in model.weights]
    upstream = [g]
    top = len(cache) - 1
    for layer in range(top, -1, -1):
        lc = cache[layer]
        below = [np.zeros_like(lc[0].inputs[0]) for _ in range(len(lc) + ARITY - 1)]
        shared = len(model.weights[layer]) == 1
        for j, node in enumerate(lc):
            u = upstream[j]
            if layer < top:
                u = u * activation_derivative(node.post_activation, model.activation)
            gw, ga, gb, gc = contract3_backward(model.layer_tensor(layer, j), *node.inputs, u)
            grads[layer][0 if shared else j] += gw
            below[j] += ga
            below[j + 1] += gb
            below[j + 2] += gc
        upstream = below
    return grads


# -- persistence ---------------------------------------------------------

def serialize(model: TnmModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "tnm",
        "d": model.d,
        "D": model.D,
        "mode": model.mode.value,
        "seed": model.seed,
        "activation": model.activation,
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "layers": [[{"dims": list(w.shape), "values": [float(v) for v in w.ravel()]} for w in layer]
                   for layer in model.weights],
    }
    return _encode(doc)


def _encode(doc: dict) -> str:
    # json.dumps writes shortest-repr floats; weights are written at 17 digits instead
    def enc(obj, indent=0):
        pad = " " * indent
        if isinstance(obj, dict):
            items = [f'{pad} {json.dumps(k)}: {enc(v, indent + 1).lstrip()}' for k, v in obj.items()]
            return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(obj, list):
            if all(isinstance(v, float) for v in obj) and obj:
                return pad + "[" + ", ".join(fmt(v) for v in obj) + "]"
            if all(isinstance(v, int) for v in obj):
                return pad + json.dumps(obj)
            return pad + "[\n" + ",\n".join(enc(v, indent + 1) for v in obj) + "\n" + pad + "]"
        if isinstance(obj, float):
            return pad + fmt(obj)
        return pad + json.dumps(obj)

    return enc(doc) + "\n"


def deserialize(text: str) -> TnmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a JSON document: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    if doc.get("kind") != "tnm":
        raise ModelFormatError(f"unsupported kind {doc.get('kind')!r}")
    try:
        d, D = int(doc["d"]), int(doc["D"])
        mode = ParamMode(doc["mode"])
        seed = int(doc["seed"])
        # documents without the key predate configurable activations
        act = str(doc.get("activation", "tanh"))
        _activation_check(act)
        scaler = None if doc.get("scaler") is None else Scaler.from_dict(doc["scaler"])
        layers = doc["layers"]
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc

    expected = Topology(d, D).layer_shapes()
    counts = stored_counts(mode)
    if len(layers) != len(expected) or [len(layer) for layer in layers] != counts:
        raise ModelFormatError(f"expected per-layer tensor counts {counts}")
    weights = []
    for shape, layer in zip(expected, layers):
        tensors = []
        for entry in layer:
            dims = tuple(entry["dims"])
            if dims != shape:
                raise ModelFormatError(f"tensor dims {dims} do not match topology {shape}")
            try:
                tensors.append(as_weight(entry["values"], dims))
            except (ShapeError, ValueError) as exc:
                raise ModelFormatError(str(exc)) from exc
        weights.append(tensors)
    return TnmModel(d, D, mode, seed, weights, scaler, act)


def save_model(model: TnmModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize(model))


def load_model(path) -> TnmModel:
    with open(path) as fh:
        return deserialize(fh.read())
