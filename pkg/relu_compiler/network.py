"""Explicit feed-forward networks: the single compilation target.

Layers are evaluated as ``activation(W x + b)`` in order; a network with no
layers is the identity on its input. Dot products accumulate one input column
at a time, left to right, with the bias added last, so results never depend on
the BLAS build. Zero weights are skipped; adding ``0 * x`` is exact anyway.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, InvariantViolation, NotThreeLayer, ParseError
from .settings import compiler_config
from .utils import format_float, parse_json

logger = logging.getLogger(__name__)

ACTIVATION_KINDS = ("relu", "modified_relu", "sigmoid", "linear")


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"
    k: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise InvariantViolation(f"unknown activation '{self.kind}'")
        if self.kind == "modified_relu" and not self.k > 0:
            raise InvariantViolation(f"modified ReLU needs k > 0, got {self.k}")

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def modified_relu(cls, k: float, b: float):
        return cls("modified_relu", float(k), float(b))

    @classmethod
    def sigmoid(cls):
        return cls("sigmoid")

    @classmethod
    def linear(cls):
        return cls("linear")

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "modified_relu":
            return np.maximum(self.k * z + self.b, 0.0)
        if self.kind == "sigmoid":
            return expit(z)
        return z

    def to_json(self):
        if self.kind == "modified_relu":
            return {"modified_relu": {"k": self.k, "b": self.b}}
        return self.kind

    @classmethod
    def from_json(cls, data, line=None):
        if isinstance(data, str) and data in ("relu", "sigmoid", "linear"):
            return cls(data)
        if isinstance(data, dict) and set(data) == {"modified_relu"}:
            params = data["modified_relu"]
            try:
                return cls.modified_relu(params["k"], params["b"])
            except (KeyError, TypeError) as e:
                raise ParseError(f"modified_relu needs numeric k and b ({e})", line=line, field="activation")
        raise ParseError(f"unsupported activation {data!r}", line=line, field="activation")


def _sparse_columns(weights: np.ndarray):
    columns = []
    for j in range(weights.shape[1]):
        rows = np.flatnonzero(weights[:, j])
        if rows.size:
            columns.append((j, rows, weights[rows, j]))
    return columns


def _accumulate(x, columns, biases) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros((x.shape[0], biases.shape[0]))
    for j, rows, w in columns:
        out[:, rows] += x[:, j, None] * w
    return out + biases


def affine(x, weights, biases) -> np.ndarray:
    """``W x + b`` for each row of ``x`` in the fixed network evaluation order."""
    weights = np.array(weights, dtype=float, ndmin=2)
    return _accumulate(x, _sparse_columns(weights), np.asarray(biases, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation = field(default_factory=Activation.relu)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float, ndmin=2)
        biases = np.array(self.biases, dtype=float).reshape(-1)
        if weights.ndim != 2:
            raise InvariantViolation("layer weights must be a matrix")
        if biases.shape[0] != weights.shape[0]:
            raise InvariantViolation(
                f"layer has {weights.shape[0]} weight rows but {biases.shape[0]} biases")
        weights.setflags(write=False)
        biases.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "_columns", _sparse_columns(weights))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        return _accumulate(x, self._columns, self.biases)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.activation.apply(self.pre_activation(x))

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases)
                and self.activation == other.activation)


@dataclass(frozen=True, eq=False)
class Network:
    input_dim: int
    layers: Tuple[Layer, ...] = ()
    metadata: str = ""

    def __post_init__(self):
        layers = tuple(self.layers)
        width = int(self.input_dim)
        if width < 1:
            raise InvariantViolation("input_dim must be at least 1")
        for i, layer in enumerate(layers):
            if layer.in_dim != width:
                raise InvariantViolation(
                    f"layer {i} expects {layer.in_dim} inputs but receives {width}")
            width = layer.out_dim
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "layers", layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else self.input_dim

    @property
    def hidden_depth(self) -> int:
        return max(len(self.layers) - 1, 0)

    @property
    def widths(self):
        return [layer.out_dim for layer in self.layers]

    def prefix(self, k: int) -> "Network":
        return Network(self.input_dim, self.layers[:k], self.metadata)

    def with_metadata(self, metadata: str) -> "Network":
        return Network(self.input_dim, self.layers, metadata)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.input_dim == other.input_dim
                and self.metadata == other.metadata
                and len(self.layers) == len(other.layers)
                and all(a == b for a, b in zip(self.layers, other.layers)))


def forward_batch(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected points of width {net.input_dim}, got shape {X.shape}")
    out = X
    for layer in net.layers:
        out = layer.apply(out)
    return out


def forward(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise DimensionMismatch(f"expected {net.input_dim} inputs, got {x.shape[0]}")
    return forward_batch(net, x.reshape(1, -1))[0]


def layer_outputs(net: Network, X) -> list:
    """Post-activation values of every layer, for structural inspection."""
    out = np.asarray(X, dtype=float)
    trace = []
    for layer in net.layers:
        out = layer.apply(out)
        trace.append(out)
    return trace


def classify_output(y: float, tol_cls: Optional[float] = None) -> Optional[int]:
    """0 for an exact zero, 1 above ``tol_cls``, None (ambiguous) in between."""
    tol_cls = compiler_config.cls_tol if tol_cls is None else tol_cls
    if y > tol_cls:
        return 1
    if y <= 0.0:
        return 0
    return None


def predict_class(net: Network, X) -> np.ndarray:
    """Argmax over output units; ``np.argmax`` already favours the lowest index."""
    return np.argmax(forward_batch(net, X), axis=1)


def interference_halfspace(net: Network, unit: int):
    """Half-space a hidden unit of a 3-layer network influences, or None."""
    from .geometry import Hyperplane, Side

    if len(net.layers) != 2:
        raise NotThreeLayer(f"network has {len(net.layers) + 1} layers, expected 3")
    hidden, output = net.layers
    if not 0 <= unit < hidden.out_dim:
        raise ValueError(f"hidden unit {unit} out of range 0..{hidden.out_dim - 1}")
    if not np.any(output.weights[:, unit] != 0.0):
        return None
    if not np.any(hidden.weights[unit] != 0.0):
        # constant unit: no hyperplane to report
        return None
    return Hyperplane(hidden.weights[unit], hidden.biases[unit]), Side.POSITIVE


def _dump(obj) -> str:
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_dump(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise InvariantViolation("networks must not contain non-finite parameters")
        return format_float(obj)
    return json.dumps(obj)


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation.to_json(),
            }
            for layer in net.layers
        ],
        "metadata": net.metadata,
    }


def serialize(net: Network) -> bytes:
    """JSON document with every scalar written to 17 significant digits."""
    doc = network_to_dict(net)
    layers = ",\n".join("    " + _dump(layer) for layer in doc["layers"])
    text = (
        "{\n"
        f'  "input_dim": {net.input_dim},\n'
        f'  "layers": [\n{layers}\n  ],\n' if doc["layers"] else
        "{\n"
        f'  "input_dim": {net.input_dim},\n'
        '  "layers": [],\n'
    )
    text += f'  "metadata": {json.dumps(net.metadata)}\n}}\n'
    return text.encode("utf-8")


def _number(value, line, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", line=line, field=name)
    return float(value)


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise ParseError("network document must be an object")
    if "input_dim" not in doc or isinstance(doc["input_dim"], bool) or not isinstance(doc["input_dim"], int):
        raise ParseError("missing or non-integer input_dim", field="input_dim")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise ParseError("layers must be a list", field="layers")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"layers[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("layer must be an object", field=where)
        for key in ("weights", "biases", "activation"):
            if key not in raw:
                raise ParseError(f"layer is missing '{key}'", field=f"{where}.{key}")
        rows = raw["weights"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise ParseError("weights must be a list of rows", field=f"{where}.weights")
        if len({len(r) for r in rows}) > 1:
            raise ParseError("weight rows differ in length", field=f"{where}.weights")
        weights = [[_number(v, None, f"{where}.weights") for v in r] for r in rows]
        if not isinstance(raw["biases"], list):
            raise ParseError("biases must be a list", field=f"{where}.biases")
        biases = [_number(v, None, f"{where}.biases") for v in raw["biases"]]
        activation = Activation.from_json(raw["activation"])
        width = len(weights[0]) if weights else 0
        layers.append(Layer(np.array(weights, dtype=float).reshape(len(weights), width), biases, activation))
    metadata = doc.get("metadata", "")
    if not isinstance(metadata, str):
        raise ParseError("metadata must be a string", field="metadata")
    return Network(doc["input_dim"], tuple(layers), metadata)


def deserialize(data) -> Network:
    try:
        doc = parse_json(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno)
    return network_from_dict(doc)


def save_network(net: Network, path: str) -> str:
    with open(path, "wb") as f:
        f.write(serialize(net))
    logger.info("wrote network (%d layers, widths %s) to %s", len(net.layers), net.widths, path)
    return path


def load_network(path: str) -> Network:
    with open(path, "rb") as f:
        return deserialize(f.read())


def stack_parallel(blocks: Sequence[Layer], shared_input: bool) -> Layer:
    """Place layers side by side: block-diagonal, or all reading the same input."""
    activation = blocks[0].activation
    if any(b.activation != activation for b in blocks):
        raise InvariantViolation("parallel blocks must share an activation")
    if shared_input:
        weights = np.vstack([b.weights for b in blocks])
    else:
        rows = sum(b.out_dim for b in blocks)
        cols = sum(b.in_dim for b in blocks)
        weights = np.zeros((rows, cols))
        r = c = 0
        for b in blocks:
            weights[r:r + b.out_dim, c:c + b.in_dim] = b.weights
            r += b.out_dim
            c += b.in_dim
    return Layer(weights, np.concatenate([b.biases for b in blocks]), activation)
