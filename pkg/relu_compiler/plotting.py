"""Pixel-grid SVG rendering of 2-D networks."""
import logging
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from . import __version__  # noqa: E402
from .errors import DimensionMismatch  # noqa: E402
from .geometry import Hyperrectangle  # noqa: E402
from .haar import HaarFunction  # noqa: E402
from .network import Network, forward_batch  # noqa: E402
from .utils import jsonify  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no date keep the SVG bytes stable across runs
plt.rcParams["svg.hashsalt"] = "relu-compiler"


def rasterize(net: Network, bounds: Hyperrectangle, resolution: int) -> np.ndarray:
    """Output on a ``resolution`` x ``resolution`` pixel-centre grid, rows indexed by y.

    Single-output networks give their value; multi-output networks give the argmax class.
    """
    if net.input_dim != 2 or bounds.dim != 2:
        raise DimensionMismatch("plotting needs a 2-D network and 2-D bounds")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    xs = bounds.lower[0] + (np.arange(resolution) + 0.5) * bounds.sides[0] / resolution
    ys = bounds.lower[1] + (np.arange(resolution) + 0.5) * bounds.sides[1] / resolution
    gx, gy = np.meshgrid(xs, ys)
    Y = forward_batch(net, np.stack([gx.ravel(), gy.ravel()], axis=1))
    if Y.shape[1] == 1:
        return Y[:, 0].reshape(resolution, resolution)
    return np.argmax(Y, axis=1).reshape(resolution, resolution).astype(float)


def plot_network(net: Network, bounds: Hyperrectangle, resolution: int, path: str,
                 haar: Optional[HaarFunction] = None, title: Optional[str] = None,
                 provenance: Optional[dict] = None) -> str:
    image = rasterize(net, bounds, resolution)
    classes = net.output_dim > 1

    fig, ax = plt.subplots(figsize=(6, 6))
    extent = (bounds.lower[0], bounds.upper[0], bounds.lower[1], bounds.upper[1])
    shown = ax.imshow(image, origin="lower", extent=extent, interpolation="nearest",
                      cmap="tab10" if classes else "viridis", aspect="auto")
    fig.colorbar(shown, ax=ax, label="class" if classes else "output")
    if haar is not None:
        for box in haar.boxes:
            ax.add_patch(Rectangle(tuple(box.lower), box.sides[0], box.sides[1],
                                   fill=False, edgecolor="white", linewidth=0.6))
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    metadata = {"Date": None, "Creator": f"relu-compiler {__version__}"}
    if provenance is not None:
        metadata["Description"] = jsonify(provenance)
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    logger.info("plot written to %s (%dx%d pixels)", path, resolution, resolution)
    return path
