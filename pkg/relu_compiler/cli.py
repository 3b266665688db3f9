"""``relu-compiler`` command line."""
import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from . import __version__
from .artifacts import ArtifactWriter, RunConfig, provenance
from .datasets import read_calibration_csv
from .errors import CompilerError, ConstructionError, DimensionMismatch
from .gadgets import ExclusionGate, check_modified_relu_equiv, exclusion_gate_error, sigmoid_transmit
from .geometry import Hyperplane, Hyperrectangle
from .haar import BUILTIN_FUNCTIONS, TightenParams, haar_project, load_haar, save_haar
from .haar_compiler import assemble_haar, measure_error
from .logging_settings import configure_logging
from .network import Network, forward, load_network, save_network
from .samplers import UniformBox, inflated_bbox
from .settings import compiler_config
from .tree_compiler import assemble_forest, assemble_tree
from .trees import load_forest, load_tree
from .utils import format_float, parse_box, parse_vector
from .verify import PLATEAU_TOL, ForestOracle, HaarOracle, TreeOracle, equivalence_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_CONSTRUCTION = 3

# options whose values may start with '-' (negative coordinates)
VECTOR_OPTIONS = ("--point", "--domain", "--bounds", "--box", "--normals", "--offsets")


def _tighten(args) -> TightenParams:
    gain = None if args.gain in (None, "auto") else float(args.gain)
    return TightenParams(args.eps, args.wedge, gain)


def _stamp(net: Network, config: RunConfig) -> Network:
    return net.with_metadata(json.dumps({"summary": net.metadata, **provenance(config)}, sort_keys=True))


def _config(args, inputs=(), output=None, **extra) -> RunConfig:
    seed = getattr(args, "seed", None)
    return RunConfig(subcommand=args.command, inputs=tuple(inputs), output=output,
                     seed=compiler_config.seed if seed is None else seed, **extra)


def cmd_compile_tree(args) -> int:
    tree = load_tree(args.tree)
    data = read_calibration_csv(args.data, tree.input_dim)
    assembly = assemble_tree(tree, data)
    save_network(_stamp(assembly.network, _config(args, [args.tree, args.data], args.out)), args.out)
    print(f"✓ tree of depth {tree.depth} compiled to {args.out} (widths {assembly.network.widths})")
    return EXIT_OK


def cmd_compile_forest(args) -> int:
    forest = load_forest(args.forest)
    data = read_calibration_csv(args.data, forest.input_dim)
    assembly = assemble_forest(forest, data, workers=args.workers)
    save_network(_stamp(assembly.network, _config(args, [args.forest, args.data], args.out)), args.out)
    print(f"✓ {forest.class_count}-class forest compiled to {args.out} (widths {assembly.network.widths})")
    return EXIT_OK


def cmd_compile_haar(args) -> int:
    f = load_haar(args.haar)
    params = _tighten(args)
    assembly = assemble_haar(f, params, baseline=args.baseline, workers=args.workers)
    config = _config(args, [args.haar], args.out, tighten=params.to_dict())
    save_network(_stamp(assembly.network, config), args.out)
    print(f"✓ {len(f)} cells compiled to {args.out} (hidden depth {assembly.network.hidden_depth})")
    return EXIT_OK


def cmd_project(args) -> int:
    lower, upper = parse_box(args.domain)
    f = haar_project(BUILTIN_FUNCTIONS[args.fn], Hyperrectangle(lower, upper), args.res)
    config = _config(args, (), args.out, projection={"fn": args.fn, "domain": args.domain, "res": args.res})
    save_haar(f, args.out, provenance(config))
    print(f"✓ {args.fn} projected onto {len(f)} cells in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_network(args.net)
    y = forward(net, parse_vector(args.point))
    print(",".join(format_float(v) for v in y))
    return EXIT_OK


def _calibration_sampler(points: np.ndarray, dim: int) -> UniformBox:
    if points.shape[0] == 0:
        return UniformBox(-np.ones(dim), np.ones(dim))
    box = inflated_bbox(points, 0.2)
    return UniformBox(box.lower, box.upper)


def cmd_verify(args) -> int:
    net = load_network(args.net)
    config = _config(args, [args.net, args.spec] + ([args.data] if args.data else []), args.report)
    if args.kind == "haar":
        f = load_haar(args.spec)
        params = _tighten(args)
        assembly = assemble_haar(f, params, baseline=args.baseline, workers=args.workers)
        sampler = UniformBox(assembly.domain.lower, assembly.domain.upper)
        report = equivalence_report(net, HaarOracle(assembly), sampler, args.samples, args.seed,
                                    workers=args.workers)
        er = measure_error(net, f, params=params)
        report.details["error"] = er.to_dict()
        report.check("error_minus_bound", er.l1_error - er.bound, PLATEAU_TOL, "<=")
        config = replace(config, tighten=params.to_dict(), sampler=sampler.to_dict())
    else:
        if not args.data:
            raise argparse.ArgumentTypeError("verify tree/forest needs --data")
        if args.kind == "tree":
            model = load_tree(args.spec)
            data = read_calibration_csv(args.data, model.input_dim)
            oracle = TreeOracle(assemble_tree(model, data))
        else:
            model = load_forest(args.spec)
            data = read_calibration_csv(args.data, model.input_dim)
            oracle = ForestOracle(assemble_forest(model, data, workers=args.workers))
        sampler = _calibration_sampler(data.points, model.input_dim)
        report = equivalence_report(net, oracle, sampler, args.samples, args.seed, delta=args.delta,
                                    workers=args.workers, calibration=(data.points, data.labels))
        config = replace(config, sampler=sampler.to_dict())

    if args.report:
        ArtifactWriter(args.export_dir, config).save_report(report, args.report)
    print(report.to_table().to_string(index=False))
    print(("✓" if report.passed else "❌") + f" verify {args.kind}: {'pass' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def cmd_gadget(args) -> int:
    if args.gadget == "transmit":
        if args.normals:
            rows = [parse_vector(r) for r in args.normals.split(";")]
            offsets = parse_vector(args.offsets) if args.offsets else np.zeros(len(rows))
            bundle = [Hyperplane(w, b) for w, b in zip(rows, offsets)]
        else:
            bundle = [Hyperplane(e, 0.0) for e in np.eye(2)]
        box = Hyperrectangle(*parse_box(args.box)) if args.box else None
        for eps in args.eps:
            print(f"eps={format_float(eps)} sup_error={format_float(sigmoid_transmit(bundle, eps).sup_error(box))}")
    elif args.gadget == "gate":
        gate = ExclusionGate(Hyperplane([1.0], 0.0), args.beta)
        print(format_float(exclusion_gate_error(gate, args.margin)))
    else:
        net = load_network(args.net)
        plain, deviation = check_modified_relu_equiv(net, args.samples, args.seed)
        if args.out:
            save_network(plain, args.out)
        print(f"max deviation {format_float(deviation)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_network

    net = load_network(args.net)
    if net.input_dim != 2:
        raise DimensionMismatch("plot only supports 2-D networks")
    bounds = Hyperrectangle(*parse_box(args.bounds))
    haar = load_haar(args.haar) if args.haar else None
    config = _config(args, [args.net] + ([args.haar] if args.haar else []), args.out,
                     plot={"bounds": args.bounds, "res": args.res})
    plot_network(net, bounds, args.res, args.out, haar=haar, provenance=provenance(config))
    print(f"✓ plot written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relu-compiler",
                                     description="Compile decision trees, forests and Haar functions into ReLU networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="logging level for the relu_compiler logger")
    parser.add_argument("--export-dir", default=None, help="directory for reports (default from environment)")
    parser.add_argument("--workers", type=int, default=None, help="thread pool size")
    sub = parser.add_subparsers(dest="command", required=True)

    def tighten_flags(p):
        p.add_argument("--eps", type=float, required=True, help="outer offset")
        p.add_argument("--wedge", type=float, default=0.1, help="companion wedge scale in (0, 1]")
        p.add_argument("--gain", default="auto", help="plateau gain K or 'auto'")

    p = sub.add_parser("compile-tree", help="compile an oblique decision tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--data", required=True, help="calibration CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_compile_tree)

    p = sub.add_parser("compile-forest", help="compile a one-vs-rest forest")
    p.add_argument("--forest", required=True)
    p.add_argument("--data", required=True, help="calibration CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_compile_forest)

    p = sub.add_parser("compile-haar", help="compile a Haar function")
    p.add_argument("--haar", required=True)
    tighten_flags(p)
    p.add_argument("--baseline", action="store_true", help="add the midrange of the cell values as an output bias")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_compile_haar)

    p = sub.add_parser("project", help="project a built-in function onto a uniform grid")
    p.add_argument("--fn", required=True, choices=sorted(BUILTIN_FUNCTIONS))
    p.add_argument("--domain", required=True, help="box as 'lo1,lo2:up1,up2' (negative corners: --domain=-1,-1:1,1)")
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("eval", help="evaluate a network at one point")
    p.add_argument("--net", required=True)
    p.add_argument("--point", required=True, help="comma separated coordinates (also --point=-1,2)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("verify", help="check a compiled network against its source")
    p.add_argument("kind", choices=["tree", "forest", "haar"])
    p.add_argument("--net", required=True)
    p.add_argument("--spec", required=True, help="tree, forest or Haar document")
    p.add_argument("--data", default=None, help="calibration CSV (tree and forest)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--delta", type=float, default=None, help="margin filter (default gamma/2)")
    p.add_argument("--eps", type=float, default=0.05, help="outer offset (haar)")
    p.add_argument("--wedge", type=float, default=0.1, help="wedge scale (haar)")
    p.add_argument("--gain", default="auto", help="plateau gain (haar)")
    p.add_argument("--baseline", action="store_true", help="the network was compiled with --baseline (haar)")
    p.add_argument("--report", default=None, help="report file name")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("gadget", help="sigmoid and modified-ReLU gadgets")
    gsub = p.add_subparsers(dest="gadget", required=True)
    g = gsub.add_parser("transmit")
    g.add_argument("--eps", type=float, nargs="+", required=True)
    g.add_argument("--normals", default=None, help="rows separated by ';'")
    g.add_argument("--offsets", default=None)
    g.add_argument("--box", default=None)
    g = gsub.add_parser("gate")
    g.add_argument("--beta", type=float, required=True)
    g.add_argument("--margin", type=float, required=True)
    g = gsub.add_parser("modrelu")
    g.add_argument("--net", required=True)
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_gadget)

    p = sub.add_parser("plot", help="rasterize a 2-D network to SVG")
    p.add_argument("--net", required=True)
    p.add_argument("--bounds", required=True, help="box as 'lo1,lo2:up1,up2' (negative corners: --bounds=-1,-1:1,1)")
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--haar", default=None, help="overlay the cells of this Haar document")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_plot)
    return parser


def normalise_argv(argv: List[str]) -> List[str]:
    """Join vector options to their values so ``--point -1,2`` parses like ``--point=-1,2``."""
    out, i = [], 0
    while i < len(argv):
        token = argv[i]
        if token in VECTOR_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and not argv[i + 1].startswith("--"):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = normalise_argv(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.log_level:
        logging.getLogger("relu_compiler").setLevel(args.log_level.upper())
    if args.workers is not None:
        compiler_config.workers = args.workers
    try:
        return args.handler(args)
    except ConstructionError as e:
        print(f"{e.name}: {e}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except CompilerError as e:
        print(f"{e.name}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, argparse.ArgumentTypeError, OSError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    configure_logging(compiler_config.log_level)
    sys.exit(run())


if __name__ == "__main__":
    main()
