import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import pandas as pd

from . import __version__
from .settings import compiler_config
from .utils import jsonify

logger = logging.getLogger(__name__)

TOOL_NAME = "relu-compiler"


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's outputs. No timestamps, so reruns compare equal."""

    subcommand: str
    inputs: Tuple[str, ...] = ()
    output: Optional[str] = None
    seed: int = field(default_factory=lambda: compiler_config.seed)
    tolerances: Dict[str, float] = field(default_factory=lambda: {
        "side_tol": compiler_config.side_tol,
        "cls_tol": compiler_config.cls_tol,
        "singular_tol": compiler_config.singular_tol,
    })
    tighten: Optional[Dict[str, Any]] = None
    sampler: Optional[Dict[str, Any]] = None
    plot: Optional[Dict[str, Any]] = None
    projection: Optional[Dict[str, Any]] = None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["inputs"] = list(self.inputs)
        return doc


def provenance(config: Optional[RunConfig]) -> dict:
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "run_config": config.to_dict() if config is not None else None,
    }


class ArtifactWriter:
    def __init__(self, export_dir: Optional[str] = None, config: Optional[RunConfig] = None):
        self.export_dir = export_dir or compiler_config.export_dir
        self.config = config
        os.makedirs(self.export_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        if os.path.isabs(filename) or os.path.dirname(filename):
            return filename
        return os.path.join(self.export_dir, filename)

    def save_json(self, doc: dict, filename: str) -> str:
        """Write ``doc`` with a ``provenance`` block; keys are sorted so equal content is equal bytes."""
        filepath = self.path(filename)
        body = dict(doc)
        body["provenance"] = provenance(self.config)
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(jsonify(body))
            f.write("\n")
        logger.debug("wrote %s", filepath)
        return filepath

    def save_csv(self, df: pd.DataFrame, filename: str) -> str:
        """Save DataFrame to CSV and return the file path"""
        if df.empty:
            return ""
        filepath = self.path(filename if filename.endswith(".csv") else f"{filename}.csv")
        df.to_csv(filepath, index=False)
        logger.debug("wrote %s (%d rows)", filepath, len(df))
        return filepath

    def save_report(self, report, filename: str) -> str:
        return self.save_json(report.to_dict(), filename)
