"""Acceptance run: compiles randomized trees, forests and Haar functions, checks
every compiled network against its source and exports one report per criterion.

Usage: python pipeline.py   (seed, workers and export dir come from the environment)
"""
import sys
import time

import numpy as np
import pandas as pd

from relu_compiler.artifacts import ArtifactWriter, RunConfig
from relu_compiler.datasets import adjacent_pair, random_forest_instance, random_haar_grid, random_oblique_tree
from relu_compiler.geometry import Hyperrectangle
from relu_compiler.haar import HaarFunction, TightenParams
from relu_compiler.haar_compiler import assemble_haar
from relu_compiler.logging_settings import configure_logging
from relu_compiler.samplers import UniformBox, inflated_bbox
from relu_compiler.settings import compiler_config
from relu_compiler.tree_compiler import assemble_forest, assemble_tree
from relu_compiler.utils import jsonify
from relu_compiler.verify import (
    ForestOracle,
    TreeOracle,
    VerificationReport,
    convergence_report,
    demo_report,
    equivalence_report,
    exclusion_report,
    gadget_report,
    haar_bound_report,
    haar_structure_report,
    plateau_check,
    transmit_report,
    tree_structure_report,
)

TREE_DIMS = (2, 3, 5)
TREE_COUNT = 50
TREE_SAMPLES = 100_000
FOREST_COUNT = 20
HAAR_COUNT = 50
HAAR_PARAMS = TightenParams(0.05, 0.1)
# grid cells have side 0.2; this offset leaves a 0.12-wide plateau inset
EXACTNESS_PARAMS = TightenParams(0.02, 0.1)


def _sampler_for(points):
    box = inflated_bbox(points, 0.2)
    return UniformBox(box.lower, box.upper)


def tree_equivalence(seed):
    report = VerificationReport("tree_equivalence", seed=seed)
    rows, structure_misses = [], 0
    for i in range(TREE_COUNT):
        n, depth = TREE_DIMS[i % len(TREE_DIMS)], 1 + i % 5
        tree, data = random_oblique_tree(n, depth, 200, np.random.default_rng(seed + i))
        assembly = assemble_tree(tree, data)
        r = equivalence_report(assembly.network, TreeOracle(assembly), _sampler_for(data.points),
                               TREE_SAMPLES, seed + i, calibration=(data.points, data.labels))
        structure_misses += int(not tree_structure_report(assembly).passed)
        values = {c.name: c.value for c in r.criteria}
        rows.append({"instance": i, "dim": n, "depth": tree.depth, "gamma": assembly.gamma,
                     "agreement_rate": r.agreement_rate, "filtered_fraction": r.filtered_out / TREE_SAMPLES,
                     "calibration_agreement": values["calibration_agreement"]})
    table = pd.DataFrame(rows)
    report.samples = TREE_COUNT * TREE_SAMPLES
    report.check("min_calibration_agreement", float(table["calibration_agreement"].min()), 1.0, "==")
    report.check("min_agreement_rate", float(table["agreement_rate"].min()), 0.999, ">=")
    report.check("max_filtered_fraction", float(table["filtered_fraction"].max()), 0.05, "<")
    report.check("layer_count_mismatches", structure_misses, 0, "==")
    return report, table


def forest_equivalence(seed):
    report = VerificationReport("forest_equivalence", seed=seed)
    rows = []
    for i in range(FOREST_COUNT):
        n, depth = (2, 3)[i % 2], 2 + i % 2
        forest, data = random_forest_instance(n, 3, depth, 150, np.random.default_rng(seed + 1000 + i))
        assembly = assemble_forest(forest, data)
        r = equivalence_report(assembly.network, ForestOracle(assembly), _sampler_for(data.points),
                               10_000, seed + i, calibration=(data.points, data.labels), max_filtered=None)
        values = {c.name: c.value for c in r.criteria}
        rows.append({"instance": i, "dim": n, "depth": depth, "agreement_rate": r.agreement_rate,
                     "calibration_agreement": values["calibration_agreement"],
                     "mutual_exclusivity": values["mutual_exclusivity"]})
    table = pd.DataFrame(rows)
    report.check("min_calibration_agreement", float(table["calibration_agreement"].min()), 1.0, "==")
    report.check("min_mutual_exclusivity", float(table["mutual_exclusivity"].min()), 1.0, "==")
    return report, table


def haar_bound(seed):
    report = VerificationReport("haar_bound", seed=seed)
    rows = []
    for i in range(HAAR_COUNT):
        f = random_haar_grid(1 + i % 20, np.random.default_rng(seed + 2000 + i), centered=True)
        r = haar_bound_report(assemble_haar(f, HAAR_PARAMS))
        rows.append({"instance": i, "cells": len(f), "l1_error": r.details["l1_error"],
                     "l2_error": r.details["l2_error"], "bound": r.details["bound"], "within_bound": r.passed})
    table = pd.DataFrame(rows)
    report.check("instances_over_bound", int((~table["within_bound"]).sum()), 0, "==")
    ladder = convergence_report(adjacent_pair())
    report.criteria.extend(ladder.criteria)
    report.details["ladder"] = ladder.details
    return report, table


def exactness(seed):
    f = random_haar_grid(8, np.random.default_rng(seed + 3000))
    assembly = assemble_haar(f, EXACTNESS_PARAMS)
    report = VerificationReport("exactness", seed=seed)
    for part in (plateau_check(assembly, 10_000, seed), exclusion_report(assembly, 10_000, seed),
                 transmit_report(100, 10_000, seed=seed)):
        for c in part.criteria:
            c.name = f"{part.subject}.{c.name}"
        report.criteria.extend(part.criteria)
    return report, None


def structure_laws(seed):
    rng = np.random.default_rng(seed + 4000)
    report = VerificationReport("structure_laws", seed=seed)
    instances = [random_haar_grid(m, rng) for m in (1, 5, 10, 20)]
    instances.append(HaarFunction([(Hyperrectangle([0.0], [1.0]), 2.0), (Hyperrectangle([2.0], [3.0]), -1.0)]))
    instances.append(HaarFunction([(Hyperrectangle([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), 1.5)]))
    misses, rows = 0, []
    for f in instances:
        r = haar_structure_report(assemble_haar(f, HAAR_PARAMS))
        misses += int(not r.passed)
        rows.append({"dim": f.dim, "cells": len(f), "widths": str(r.details["widths"]), "passed": r.passed})
    report.check("haar_structure_mismatches", misses, 0, "==")
    return report, pd.DataFrame(rows)


def demo(seed):
    return demo_report(seed=seed), None


def gadgets(seed):
    return gadget_report(seed=seed), None


CRITERIA = [
    ("1_tree_equivalence", tree_equivalence),
    ("2_forest_equivalence", forest_equivalence),
    ("3_haar_bound", haar_bound),
    ("4_exactness", exactness),
    ("5_structure_laws", structure_laws),
    ("6_demo", demo),
    ("7_gadgets", gadgets),
]


def main():
    configure_logging(compiler_config.log_level)
    seed = compiler_config.seed
    writer = ArtifactWriter(compiler_config.export_dir, RunConfig(subcommand="pipeline", seed=seed))
    summary, first_pass = [], {}

    print(f"Running acceptance criteria (seed {seed})...")
    for name, criterion in CRITERIA:
        print(f"\n--- {name} ---")
        started = time.perf_counter()
        try:
            report, table = criterion(seed)
        except Exception as e:
            print(f"    ❌ {name} raised {type(e).__name__}: {e}")
            summary.append({"criterion": name, "passed": False, "seconds": time.perf_counter() - started})
            continue
        seconds = time.perf_counter() - started
        first_pass[name] = jsonify(report.to_dict())
        writer.save_report(report, f"{name}.json")
        if table is not None:
            writer.save_csv(table, f"{name}_instances")
        print(report.to_table().to_string(index=False))
        print(f"    {'✓' if report.passed else '❌'} {name} ({seconds:.1f}s)")
        summary.append({"criterion": name, "passed": report.passed, "seconds": round(seconds, 1)})

    print("\n--- 8_determinism ---")
    determinism = VerificationReport("determinism", seed=seed)
    for name, criterion in CRITERIA:
        if name not in first_pass:
            continue
        again = jsonify(criterion(seed)[0].to_dict())
        determinism.check(f"{name}.identical", int(again == first_pass[name]), 1, "==")
    writer.save_report(determinism, "8_determinism.json")
    print(determinism.to_table().to_string(index=False))
    summary.append({"criterion": "8_determinism", "passed": determinism.passed, "seconds": None})

    table = pd.DataFrame(summary)
    writer.save_csv(table, "summary")
    print("\n" + table.to_string(index=False))
    if table["passed"].all():
        print("\n✅ All acceptance criteria passed!")
        return 0
    print("\n❌ Some acceptance criteria failed.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
