"""Oracle-equivalence harness and the checks behind every acceptance report.

A report is a list of named criteria (value, threshold, comparison); it
passes when every criterion does. Nothing in a report depends on wall-clock
time, so equal inputs and seeds give byte-identical JSON.
"""
import logging
import operator
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DomainMismatch
from .gadgets import (
    ExclusionGate,
    check_modified_relu_equiv,
    exclusion_gate_error,
    random_modified_net,
    sigmoid_transmit,
)
from .geometry import Hyperplane, Hyperrectangle
from .haar import BUILTIN_FUNCTIONS, TightenParams, error_bound, haar_project, omega
from .haar_compiler import INSIDE, REJECTED, HaarAssembly, assemble_haar, measure_error, plateau_inset
from .network import Layer, Network, affine, forward_batch, layer_outputs
from .samplers import UniformBox, far_outside
from .settings import compiler_config
from .tree_compiler import ForestAssembly, TreeAssembly, margin_ok
from .utils import jsonify

logger = logging.getLogger(__name__)

OPS = {"<=": operator.le, "<": operator.lt, ">=": operator.ge, ">": operator.gt, "==": operator.eq}

PLATEAU_TOL = 1e-9
EXCLUSION_TOL = 1e-12
TRANSMIT_TOL = 1e-12
GRADIENT_VARIATION = 1e-5


@dataclass
class Criterion:
    name: str
    value: Any
    threshold: Any
    op: str = "<="

    @property
    def passed(self) -> bool:
        if self.value is None or (isinstance(self.value, float) and np.isnan(self.value)):
            return False
        return bool(OPS[self.op](self.value, self.threshold))

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "op": self.op,
                "threshold": self.threshold, "passed": self.passed}


@dataclass
class VerificationReport:
    subject: str
    samples: int = 0
    seed: Optional[int] = None
    agreement_rate: Optional[float] = None
    max_abs_error: Optional[float] = None
    filtered_out: int = 0
    vacuous: bool = False
    criteria: List[Criterion] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    def check(self, name: str, value, threshold, op: str = "<=") -> Criterion:
        if isinstance(value, (np.floating, np.integer, np.bool_)):
            value = value.item()
        criterion = Criterion(name, value, threshold, op)
        self.criteria.append(criterion)
        return criterion

    @property
    def passed(self) -> bool:
        return bool(self.criteria) and all(c.passed for c in self.criteria)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "samples": self.samples,
            "seed": self.seed,
            "agreement_rate": self.agreement_rate,
            "max_abs_error": self.max_abs_error,
            "filtered_out": self.filtered_out,
            "vacuous": self.vacuous,
            "pass": self.passed,
            "criteria": [c.to_dict() for c in self.criteria],
            "details": self.details,
        }

    def to_json(self) -> str:
        return jsonify(self.to_dict())

    def to_table(self) -> pd.DataFrame:
        rows = [c.to_dict() for c in self.criteria]
        return pd.DataFrame(rows, columns=["name", "value", "op", "threshold", "passed"])


@dataclass
class ExclusionResult:
    ok: bool
    witness: Optional[np.ndarray]
    checked: int
    vacuous: bool


@dataclass
class TreeOracle:
    assembly: TreeAssembly


@dataclass
class ForestOracle:
    assembly: ForestAssembly


@dataclass
class HaarOracle:
    assembly: HaarAssembly


def _oracle_dim(oracle) -> int:
    if isinstance(oracle, TreeOracle):
        return oracle.assembly.tree.input_dim
    if isinstance(oracle, ForestOracle):
        return oracle.assembly.forest.input_dim
    return oracle.assembly.function.dim


def readout_labels(y: np.ndarray, tol_cls: Optional[float] = None) -> np.ndarray:
    """Vectorised readout: 1 above tol_cls, 0 at exactly 0, -1 when ambiguous."""
    tol_cls = compiler_config.cls_tol if tol_cls is None else tol_cls
    return np.where(y > tol_cls, 1, np.where(y <= 0.0, 0, -1))


def mutual_exclusivity(assembly: TreeAssembly, X, layer_offset: int = 0,
                       hidden=None) -> np.ndarray:
    """True where exactly one leaf's final units are positive and the rest are zero."""
    if not assembly.layout:
        return np.ones(np.atleast_2d(X).shape[0], dtype=bool)
    if hidden is None:
        hidden = layer_outputs(assembly.network, X)[-2]
    blocks = assembly.layout[-1]
    active = np.zeros(hidden.shape[0], dtype=int)
    clean = np.ones(hidden.shape[0], dtype=bool)
    for b in blocks:
        units = hidden[:, layer_offset + b.start:layer_offset + b.stop]
        all_pos = np.all(units > 0, axis=1)
        all_zero = np.all(units == 0, axis=1)
        active += all_pos
        clean &= all_pos | all_zero
    return clean & (active == 1)


def forest_mutual_exclusivity(assembly: ForestAssembly, X) -> np.ndarray:
    hidden = layer_outputs(assembly.network, X)[-2] if assembly.network.hidden_depth else None
    if hidden is None:
        return np.ones(np.atleast_2d(X).shape[0], dtype=bool)
    offsets = assembly.unit_offsets(assembly.network.hidden_depth)
    masks = [mutual_exclusivity(t, X, off, hidden) for t, off in zip(assembly.trees, offsets)]
    return np.logical_and.reduce(masks)


def _tree_agreement(net, assembly: TreeAssembly, X):
    predicted = readout_labels(forward_batch(net, X)[:, 0])
    return predicted == assembly.tree.predict_batch(X)


def _forest_oracle(assembly: ForestAssembly, X):
    """Class claimed by exactly one tree, -1 where no tree or several trees claim the point."""
    votes = np.stack([tree.predict_batch(X) for _, tree in assembly.forest.trees], axis=1)
    claims = votes == 1
    labels = np.where(claims.sum(axis=1) == 1, claims.argmax(axis=1), -1)
    return np.where(np.any(votes < 0, axis=1), -1, labels)


def haar_clean_plateau(assembly: HaarAssembly, X) -> np.ndarray:
    """Points in some cell inset by 2*eps that every other module rejects."""
    eps = assembly.params.outer_offset
    X = np.atleast_2d(X)
    regions = assembly.regions(X)
    keep = np.zeros(X.shape[0], dtype=bool)
    for j, module in enumerate(assembly.modules):
        inset = plateau_inset(module.cell, eps)
        if inset is None:
            continue
        mine = inset.contains(X) & (regions[:, j] == INSIDE)
        others = np.delete(regions, j, axis=1)
        keep |= mine & np.all(others == REJECTED, axis=1)
    return keep


def equivalence_report(net: Network, oracle, sampler, samples: int, seed: Optional[int] = None,
                       delta: Optional[float] = None, workers: Optional[int] = None,
                       calibration=None, min_agreement: float = 0.999,
                       max_filtered: Optional[float] = 0.05) -> VerificationReport:
    if delta is not None and delta < 0:
        raise ValueError("margin must be non-negative")
    if net.input_dim != _oracle_dim(oracle):
        raise DomainMismatch(f"network takes {net.input_dim} inputs, oracle is {_oracle_dim(oracle)}-D")
    seed = compiler_config.seed if seed is None else seed
    X = sampler.draw(samples, seed, workers)
    report = VerificationReport(type(oracle).__name__.replace("Oracle", "").lower(), samples=samples, seed=seed)

    if isinstance(oracle, HaarOracle):
        keep = haar_clean_plateau(oracle.assembly, X)
        kept = X[keep]
        if kept.shape[0]:
            target = oracle.assembly.function.evaluate(kept)
            err = np.abs(forward_batch(net, kept)[:, 0] - target)
            report.max_abs_error = float(err.max())
            report.agreement_rate = float(np.mean(err <= PLATEAU_TOL))
        report.filtered_out = int((~keep).sum())
        report.vacuous = kept.shape[0] == 0
        report.check("kept_samples", int(kept.shape[0]), 1, ">=")
        report.check("plateau_max_abs_error", report.max_abs_error, PLATEAU_TOL, "<=")
        return report

    assembly = oracle.assembly
    keep = margin_ok(assembly, X, delta)
    if isinstance(oracle, ForestOracle):
        oracle_labels = _forest_oracle(assembly, X)
        keep &= oracle_labels >= 0
        kept = X[keep]
        agree = forward_batch(net, kept).argmax(axis=1) == oracle_labels[keep] if kept.shape[0] else np.zeros(0)
    else:
        kept = X[keep]
        agree = _tree_agreement(net, assembly, kept) if kept.shape[0] else np.zeros(0)

    report.filtered_out = int((~keep).sum())
    report.vacuous = kept.shape[0] == 0
    report.agreement_rate = float(np.mean(agree)) if agree.size else None
    report.details["margin"] = (assembly.gamma / 2.0) if delta is None else delta
    report.check("kept_samples", int(kept.shape[0]), 1, ">=")
    report.check("agreement_rate", report.agreement_rate, min_agreement, ">=")
    if max_filtered is not None and samples:
        report.check("filtered_fraction", report.filtered_out / samples, max_filtered, "<")

    if calibration is not None:
        points, labels = calibration
        points = np.asarray(points, dtype=float)
        if isinstance(oracle, ForestOracle):
            calib_agree = forward_batch(net, points).argmax(axis=1) == np.asarray(labels)
            exclusive = forest_mutual_exclusivity(assembly, points)
        else:
            calib_agree = readout_labels(forward_batch(net, points)[:, 0]) == np.asarray(labels)
            exclusive = mutual_exclusivity(assembly, points)
        report.check("calibration_agreement", float(np.mean(calib_agree)) if calib_agree.size else 1.0, 1.0, "==")
        report.check("mutual_exclusivity", float(np.mean(exclusive)) if exclusive.size else 1.0, 1.0, "==")
    return report


def exclusion_check(net: Network, points, background: float = 0.0, tol: float = EXCLUSION_TOL,
                    trace: bool = True) -> ExclusionResult:
    """Every point must give ``background`` and, with ``trace``, a zero layer that stays zero."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.size == 0:
        return ExclusionResult(True, None, 0, True)
    outputs = layer_outputs(net, X)
    bad = np.abs(outputs[-1][:, 0] - background) > tol
    if trace and len(outputs) > 1:
        hidden = outputs[:-1]
        zero = np.stack([np.all(h == 0, axis=1) for h in hidden], axis=1)
        first = np.argmax(zero, axis=1)
        has_zero = zero.any(axis=1)
        after = np.arange(zero.shape[1])[None, :] >= first[:, None]
        stays = np.all(zero | ~after, axis=1)
        bad |= ~(has_zero & stays)
    if np.any(bad):
        witness = X[int(np.argmax(bad))]
        return ExclusionResult(False, witness, X.shape[0], False)
    return ExclusionResult(True, None, X.shape[0], False)


def transmit_check(layer: Layer, points) -> float:
    """Max |layer(x) - (Wx + b)| in the infinity norm over ``points``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.size == 0:
        return 0.0
    exact = affine(X, layer.weights, layer.biases)
    return float(np.max(np.abs(layer.apply(X) - exact)))


def positive_region_points(layer: Layer, count: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Points where every pre-activation of ``layer`` is positive."""
    y = rng.uniform(0.05, scale, size=(count, layer.out_dim))
    return np.linalg.solve(layer.weights, (y - layer.biases).T).T


def transmit_report(bundles: int = 100, points: int = 10_000, dim: int = 3,
                    seed: Optional[int] = None) -> VerificationReport:
    from .geometry import transmit_layer

    seed = compiler_config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(bundles):
        while True:
            normals = rng.normal(size=(dim, dim))
            if abs(np.linalg.det(normals)) > 0.1:
                break
        bundle = [Hyperplane(w, b) for w, b in zip(normals, rng.normal(size=dim))]
        layer = transmit_layer(bundle)
        worst = max(worst, transmit_check(layer, positive_region_points(layer, points, rng)))
    report = VerificationReport("transmit", samples=bundles * points, seed=seed, max_abs_error=worst)
    report.check("transmit_max_deviation", worst, TRANSMIT_TOL, "<=")
    return report


def plateau_check(assembly: HaarAssembly, samples: int = 10_000, seed: Optional[int] = None,
                  workers: Optional[int] = None, gradient_points: int = 50) -> VerificationReport:
    """Plateau exactness and the single-affine-piece property, per cell."""
    seed = compiler_config.seed if seed is None else seed
    eps = assembly.params.outer_offset
    per_cell = max(1, samples // len(assembly.modules))
    report = VerificationReport("plateau", seed=seed)
    worst, variation, used, filtered, skipped = 0.0, 0.0, 0, 0, 0
    for j, module in enumerate(assembly.modules):
        inset = plateau_inset(module.cell, eps)
        if inset is None:
            skipped += 1
            continue
        X = UniformBox(inset.lower, inset.upper).draw(per_cell, seed + j, workers)
        keep = haar_clean_plateau(assembly, X)
        filtered += int((~keep).sum())
        X = X[keep]
        if not X.shape[0]:
            continue
        used += X.shape[0]
        err = np.abs(forward_batch(assembly.network, X)[:, 0] - assembly.function.values[j])
        worst = max(worst, float(err.max()))
        grads = module.aggregate_gradient(X[:gradient_points])
        scale = float(np.max(np.abs(grads))) or 1.0
        variation = max(variation, float(np.max(np.abs(grads - grads[0]))) / scale)
    report.samples, report.filtered_out, report.max_abs_error = used, filtered, worst
    report.vacuous = used == 0
    report.details["cells_without_plateau"] = skipped
    report.check("kept_samples", used, 1, ">=")
    report.check("cells_without_plateau", skipped, 0, "==")
    report.check("plateau_max_abs_error", worst, PLATEAU_TOL, "<=")
    report.check("aggregate_gradient_variation", variation, GRADIENT_VARIATION, "<=")
    return report


def exclusion_report(assembly: HaarAssembly, samples: int = 10_000, seed: Optional[int] = None,
                     workers: Optional[int] = None) -> VerificationReport:
    """Far-outside points (> 2*eps from every cell, off the wedges) give exactly the output bias."""
    seed = compiler_config.seed if seed is None else seed
    eps = assembly.params.outer_offset
    bounds = assembly.domain.inflate(0.2 * assembly.domain.sides)
    X = far_outside(assembly.function.boxes, 2 * eps, bounds, samples, seed, workers)
    clean = assembly.clean_outside(X) if X.shape[0] else np.zeros(0, dtype=bool)
    points = X[clean]
    report = VerificationReport("exclusion", samples=int(X.shape[0]), seed=seed,
                                filtered_out=int((~clean).sum()))
    whole = exclusion_check(assembly.network, points, background=assembly.baseline, trace=False)
    modules_ok = all(exclusion_check(m.network(), points).ok for m in assembly.modules)
    out = forward_batch(assembly.network, points)[:, 0] if points.shape[0] else np.zeros(0)
    report.max_abs_error = float(np.max(np.abs(out - assembly.baseline))) if out.size else 0.0
    report.vacuous = whole.vacuous
    if whole.witness is not None:
        report.details["witness"] = whole.witness.tolist()
    report.check("kept_samples", int(points.shape[0]), 1, ">=")
    report.check("far_outside_max_abs_error", report.max_abs_error, EXCLUSION_TOL, "<=")
    report.check("zero_layer_propagates", int(modules_ok and whole.ok), 1, "==")
    return report


def haar_structure_report(assembly: HaarAssembly) -> VerificationReport:
    n, m = assembly.function.dim, len(assembly.modules)
    net = assembly.network
    expected = [2 * m, m] if n == 1 else [m * n] * (2 * n)
    report = VerificationReport("haar_structure")
    report.details.update({"dim": n, "cells": m, "widths": net.widths})
    report.check("hidden_depth", net.hidden_depth, 2 * n + 1, "==")
    report.check("separation_width_mismatches",
                 sum(w != e for w, e in zip(net.widths[:2 * n], expected)), 0, "==")
    return report


def tree_structure_report(assembly: TreeAssembly) -> VerificationReport:
    report = VerificationReport("tree_structure")
    report.details["widths"] = assembly.network.widths
    report.check("layer_count", len(assembly.network.layers), assembly.tree.depth + 1, "==")
    return report


def haar_bound_report(assembly: HaarAssembly, sampler=None) -> VerificationReport:
    er = measure_error(assembly.network, assembly.function, sampler, assembly.params)
    report = VerificationReport("haar_bound", samples=er.samples, seed=er.seed)
    report.details.update(er.to_dict())
    report.check("error_minus_bound", er.l1_error - er.bound, PLATEAU_TOL, "<=")
    return report


def convergence_report(f, ladder: Sequence[float] = (0.08, 0.04, 0.02, 0.01), wedge_scale: float = 0.01,
                       sampler=None, final_fraction: float = 0.02) -> VerificationReport:
    errors = []
    for eps in ladder:
        assembly = assemble_haar(f, TightenParams(eps, wedge_scale))
        errors.append(measure_error(assembly.network, f, sampler, assembly.params).l1_error)
    w = omega(f)
    report = VerificationReport("haar_convergence")
    report.details.update({"ladder": list(ladder), "errors": errors, "omega": w})
    increases = sum(b > a for a, b in zip(errors, errors[1:]))
    report.check("error_increases", increases, 0, "==")
    report.check("final_error_over_omega", errors[-1] / w if w else 0.0, final_fraction, "<=")
    return report


def demo_report(fn: str = "product_sine", resolution: int = 16, eps: float = 0.005,
                wedge_scale: float = 1e-3, samples: int = 10_000, seed: Optional[int] = None,
                workers: Optional[int] = None) -> VerificationReport:
    """Project a continuous function, compile it, and compare against the function itself."""
    seed = compiler_config.seed if seed is None else seed
    g = BUILTIN_FUNCTIONS[fn]
    unit = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    f = haar_project(g, unit, resolution)
    assembly = assemble_haar(f, TightenParams(eps, wedge_scale), workers=workers)
    X = UniformBox(unit.lower, unit.upper).draw(samples * 4, seed, workers)
    keep = haar_clean_plateau(assembly, X)
    X = X[keep][:samples]
    net_error = float(np.max(np.abs(forward_batch(assembly.network, X)[:, 0] - g(X)))) if X.size else float("nan")
    haar_error = float(np.max(np.abs(f.evaluate(X) - g(X)))) if X.size else float("nan")
    bounds = error_bound(f, assembly.params)
    report = VerificationReport("demo", samples=int(X.shape[0]), seed=seed, max_abs_error=net_error,
                                filtered_out=int((~keep).sum()))
    report.details.update({"function": fn, "resolution": resolution, "outer_offset": eps,
                           "projection_sup_error": haar_error, "bound": bounds.bound})
    report.check("kept_samples", int(X.shape[0]), 1, ">=")
    report.check("sup_error_excess", net_error - haar_error, 1e-6, "<=")
    return report


def gadget_report(seed: Optional[int] = None, nets: int = 20,
                  ladder: Sequence[float] = (0.1, 0.05, 0.025, 0.0125)) -> VerificationReport:
    seed = compiler_config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    deviation = max(check_modified_relu_equiv(random_modified_net(rng), seed=seed + i)[1] for i in range(nets))
    gate = exclusion_gate_error(ExclusionGate(Hyperplane([1.0, 0.0], 0.0), 100.0), 0.1)
    bundle = [Hyperplane([1.0, 0.0], 0.0), Hyperplane([0.0, 1.0], 0.0)]
    sup = [sigmoid_transmit(bundle, eps).sup_error() for eps in ladder]
    ratios = [b / a for a, b in zip(sup, sup[1:])]
    report = VerificationReport("gadgets", seed=seed)
    report.details.update({"transmit_sup_errors": sup, "gate_value": gate})
    report.check("modified_relu_deviation", deviation, 1e-12, "<=")
    report.check("gate_value_error", abs(gate - 4.5398e-5), 1e-9, "<=")
    report.check("transmit_worst_ratio", max(ratios), 0.6, "<=")
    return report
