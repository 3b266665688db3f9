"""Stand-alone sigmoid and modified-ReLU gadgets with measurable error."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import SingularBundle, UnsupportedActivation
from .geometry import AffineMap, Hyperplane, Hyperrectangle, bundle_matrix, bundle_offsets, is_nonsingular
from .network import Activation, Layer, Network, affine, forward_batch
from .settings import compiler_config

logger = logging.getLogger(__name__)

DEFAULT_GRID = 100
DEFAULT_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class SigmoidTransmit:
    """``readout(sigmoid(eps * (Wx + b)))``, close to ``Wx + b`` for small eps.

    The readout folds the ``4/eps`` gain and the ``-2/eps`` shift.
    """

    bundle: Tuple[Hyperplane, ...]
    eps: float
    readout: AffineMap

    @property
    def weights(self) -> np.ndarray:
        return bundle_matrix(self.bundle)

    @property
    def biases(self) -> np.ndarray:
        return bundle_offsets(self.bundle)

    def evaluate(self, X) -> np.ndarray:
        z = affine(X, self.weights, self.biases)
        return affine(expit(self.eps * z), self.readout.matrix, self.readout.shift)

    def exact(self, X) -> np.ndarray:
        return affine(X, self.weights, self.biases)

    def to_network(self) -> Network:
        squash = Layer(self.eps * self.weights, self.eps * self.biases, Activation.sigmoid())
        readout = Layer(self.readout.matrix, self.readout.shift, Activation.linear())
        return Network(self.weights.shape[1], (squash, readout), f"sigmoid transmit eps={self.eps!r}")

    def sup_error(self, box: Optional[Hyperrectangle] = None, grid: int = DEFAULT_GRID) -> float:
        """Max |evaluation - exact| over a regular grid on ``box`` (default [-1, 1]^n)."""
        n = self.weights.shape[1]
        box = Hyperrectangle(-np.ones(n), np.ones(n)) if box is None else box
        axes = [np.linspace(lo, up, grid) for lo, up in zip(box.lower, box.upper)]
        X = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        return float(np.max(np.abs(self.evaluate(X) - self.exact(X))))


def sigmoid_transmit(bundle: Sequence[Hyperplane], eps: float, tol: Optional[float] = None) -> SigmoidTransmit:
    if not eps > 0:
        raise ValueError(f"transmit scale must be positive, got {eps}")
    bundle = tuple(bundle)
    if not is_nonsingular(bundle_matrix(bundle), tol):
        raise SingularBundle("sigmoid transmit needs a nonsingular bundle")
    n = len(bundle)
    readout = AffineMap((4.0 / eps) * np.eye(n), np.full(n, -2.0 / eps))
    return SigmoidTransmit(bundle, float(eps), readout)


@dataclass(frozen=True)
class ExclusionGate:
    h: Hyperplane
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"gate sharpness must be positive, got {self.beta}")
        object.__setattr__(self, "h", self.h.unit())

    def evaluate(self, X) -> np.ndarray:
        return expit(self.beta * self.h.value(np.atleast_2d(np.asarray(X, dtype=float))))


def exclusion_gate_error(gate: ExclusionGate, margin):
    """Worst residual of the gate over the zero side at distance >= margin."""
    m = np.asarray(margin, dtype=float)
    if np.any(m <= 0):
        raise ValueError("margin must be positive")
    out = expit(-gate.beta * m)
    return float(out) if out.ndim == 0 else out


def fold_modified_relu(net: Network) -> Network:
    """Plain-ReLU network computing the same function as ``net``."""
    layers = []
    for i, layer in enumerate(net.layers):
        act = layer.activation
        if act.kind == "relu":
            layers.append(layer)
        elif act.kind == "modified_relu":
            layers.append(Layer(act.k * layer.weights, act.k * layer.biases + act.b, Activation.relu()))
        else:
            raise UnsupportedActivation(f"layer {i} uses '{act.kind}'; only relu and modified_relu fold")
    return Network(net.input_dim, tuple(layers), net.metadata)


def check_modified_relu_equiv(net: Network, samples: int = DEFAULT_SAMPLES,
                              seed: Optional[int] = None, scale: float = 1.0):
    """Fold ``net`` and report the max output deviation over seeded samples."""
    plain = fold_modified_relu(net)
    seed = compiler_config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    X = rng.uniform(-scale, scale, size=(samples, net.input_dim))
    deviation = float(np.max(np.abs(forward_batch(net, X) - forward_batch(plain, X)))) if samples else 0.0
    logger.debug("modified ReLU fold: max deviation %.3g over %d samples", deviation, samples)
    return plain, deviation


def random_modified_net(rng: np.random.Generator, input_dim: int = 3, widths=(4, 1)) -> Network:
    layers, prev = [], input_dim
    for width in widths:
        k = rng.uniform(0.1, 10.0)
        b = rng.uniform(-5.0, 5.0)
        act = Activation.modified_relu(k, b) if rng.random() < 0.7 else Activation.relu()
        layers.append(Layer(rng.normal(size=(width, prev)) / np.sqrt(prev), rng.normal(size=width), act))
        prev = width
    return Network(input_dim, tuple(layers), "random modified-ReLU network")
