import functools
import json
import logging
import math
import os
import sys
from argparse import ArgumentParser, ArgumentTypeError

import numpy as np
from fontTools.misc.loggingTools import configLogger

from elevatorcodes import __version__
from elevatorcodes.circuit import NoiseModel
from elevatorcodes.config import RunConfig, read_config_file, subparser_defaults
from elevatorcodes.decoder import SCHEDULES, VARIANTS, DecoderConfig
from elevatorcodes.errors import ElevatorError
from elevatorcodes.experiments import FIT_INPUTS, MEMORY_FAMILIES, write_results_rows
from elevatorcodes.overhead import FAMILIES as OVERHEAD_FAMILIES
from elevatorcodes.overhead import crossover_eta, write_sweep_rows
from elevatorcodes.project import FIGURES, ElevatorProject, summarize_points

logger = logging.getLogger("elevatorcodes")

DEFAULT_ETA_POINTS = 13

TABLE_COMMANDS = ("experiment memory", "overhead", "reproduce")


class _Table(dict):
    """A command summary that can also be written as CSV rows."""

    def __init__(self, summary, write_rows):
        super().__init__(summary)
        self.write_rows = write_rows


def _basis(value):
    basis = value.upper()
    if basis not in ("X", "Z"):
        raise ArgumentTypeError(f"basis must be x or z, got {value!r}")
    return basis


def _probability(value):
    try:
        p = float(value)
    except ValueError:
        raise ArgumentTypeError(f"not a number: {value!r}") from None
    if not 0 <= p <= 1:
        raise ArgumentTypeError(f"probability out of range: {value!r}")
    return p


def _seed(value):
    seed = int(value)
    if not 0 <= seed < 1 << 64:
        raise ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {value}")
    return seed


def _positive_int(value):
    number = int(value)
    if number < 1:
        raise ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _list_of(convert):
    def parse(value):
        items = [v.strip() for v in value.split(",") if v.strip()]
        if not items:
            raise ArgumentTypeError("expected a comma-separated list")
        return [convert(v) for v in items]

    parse.__name__ = f"list of {getattr(convert, '__name__', 'values')}"
    return parse


def _noise(value):
    parts = _list_of(_probability)(value)
    if len(parts) != 2:
        raise ArgumentTypeError(f"--noise takes 'px,pz', got {value!r}")
    return tuple(parts)


def _eta_sweep(value):
    """``lo:hi[:n]`` to ``n`` log-spaced biases from ``lo`` to ``hi``."""
    parts = value.split(":")
    if len(parts) not in (2, 3):
        raise ArgumentTypeError(f"--eta-sweep takes lo:hi[:n], got {value!r}")
    lo, hi = float(parts[0]), float(parts[1])
    count = int(parts[2]) if len(parts) == 3 else DEFAULT_ETA_POINTS
    if not 0 < lo <= hi or count < 1:
        raise ArgumentTypeError(f"invalid bias sweep {value!r}")
    return [float(e) for e in np.logspace(math.log10(lo), math.log10(hi), count)]


def _configure_logging(level=None, timing=False):
    fmt = "%(levelname)s:%(name)s:%(message)s"
    if level is not None:
        logging.basicConfig(level=level, format=fmt)
    if timing:
        # the timer logger is configured separately so it can be enabled
        # without lowering the global verbosity level
        configLogger(logger="elevatorcodes.timer", level=logging.DEBUG, format=fmt)


def _common_parser():
    common = ArgumentParser(add_help=False)
    runGroup = common.add_argument_group(title="Run arguments")
    runGroup.add_argument(
        "--threads",
        type=_positive_int,
        default=os.cpu_count() or 1,
        metavar="N",
        help="Number of worker processes. Default: available cores",
    )
    runGroup.add_argument(
        "--config",
        metavar="FILE",
        help="Read option defaults from a 'key = value' file; flags win",
    )
    runGroup.add_argument(
        "--format",
        default="json",
        choices=("json", "csv", "text"),
        help=(
            "Format of the summary printed on stdout; csv is available for "
            "experiment memory, overhead and reproduce. Default: json"
        ),
    )
    logGroup = common.add_argument_group(title="Logging arguments")
    logGroup.add_argument(
        "--timing", action="store_true", help="Print the elapsed time for each step"
    )
    logGroup.add_argument(
        "--verbose",
        default="INFO",
        metavar="LEVEL",
        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"),
        help="Configure the logger verbosity level. Choose between: "
        "%(choices)s. Default: INFO",
    )
    return common


def _add_decoder_arguments(parser):
    group = parser.add_argument_group(title="Decoder arguments")
    group.add_argument(
        "--bp-iters", type=_positive_int, default=30, help="Default: %(default)s"
    )
    group.add_argument(
        "--osd-order", type=int, default=0, help="OSD-E order. Default: %(default)s"
    )
    group.add_argument("--variant", choices=VARIANTS, default="product_sum")
    group.add_argument("--schedule", choices=SCHEDULES, default="serial")


def _decoder_config(args):
    return DecoderConfig(
        variant=args.pop("variant"),
        max_iterations=args.pop("bp_iters"),
        osd_order=args.pop("osd_order"),
        schedule=args.pop("schedule"),
    )


def _build_parser():
    parser = ArgumentParser(prog="elevatorcodes")
    parser.add_argument("--version", action="version", version=__version__)
    common = _common_parser()
    leaves = {}
    groups = parser.add_subparsers(dest="group", metavar="COMMAND", required=True)

    def leaf(subparsers, name, command, help):
        sub = subparsers.add_parser(name, parents=[common], help=help)
        sub.set_defaults(command=command)
        leaves[command] = sub
        return sub

    code = groups.add_parser("code", help="Inspect classical outer codes")
    codeCommands = code.add_subparsers(dest="action", metavar="ACTION", required=True)
    info = leaf(codeCommands, "info", "code info", "Print code parameters")
    info.add_argument("code", help="Built-in outer code name or matrix file")
    info.add_argument(
        "--dz", type=_positive_int, help="Also describe the combined CSS code"
    )
    info.add_argument(
        "--check", action="store_true", help="Run the structural code checks"
    )
    info.add_argument(
        "--no-bruteforce",
        dest="bruteforce",
        action="store_false",
        help="Skip the brute-force minimum distance",
    )

    circuit = groups.add_parser("circuit", help="Build memory-experiment circuits")
    circuitCommands = circuit.add_subparsers(
        dest="action", metavar="ACTION", required=True
    )
    build = leaf(circuitCommands, "build", "circuit build", "Write a circuit file")
    build.add_argument(
        "--outer", help="Outer code; without it a repetition circuit is built"
    )
    build.add_argument("--dz", type=_positive_int, required=True)
    build.add_argument(
        "--rounds",
        type=_positive_int,
        help="Repetition rounds, or outer rounds of an elevator circuit",
    )
    build.add_argument("--basis", type=_basis, default="Z", help="x or z")
    build.add_argument("--ancillae", type=int, choices=(1, 2), default=1)
    build.add_argument("--noise", type=_noise, metavar="PX,PZ")
    build.add_argument("-o", "--output", metavar="FILE")

    sample = leaf(groups, "sample", "sample", "Sample detector and observable flips")
    sample.add_argument("circuit", help="Circuit file")
    sample.add_argument("--shots", type=int, required=True)
    sample.add_argument("--seed", type=_seed, default=0)
    sample.add_argument("-o", "--output", metavar="FILE", required=True)

    dem = leaf(groups, "dem", "dem", "Extract a detector error model")
    dem.add_argument("circuit", help="Noisy circuit file")
    dem.add_argument("-o", "--output", metavar="FILE", required=True)

    decode = leaf(groups, "decode", "decode", "Decode sampled detector flips")
    decode.add_argument("dem", help="Detector error model file")
    decode.add_argument("detectors", help="Bit-packed detector rows")
    decode.add_argument(
        "--observables", metavar="FILE", help="Actual flips, to count failures"
    )
    decode.add_argument("-o", "--output", metavar="FILE", required=True)
    _add_decoder_arguments(decode)

    experiment = groups.add_parser("experiment", help="Run simulated experiments")
    experimentCommands = experiment.add_subparsers(
        dest="action", metavar="ACTION", required=True
    )
    memory = leaf(
        experimentCommands, "memory", "experiment memory", "Logical memory sweep"
    )
    memory.add_argument("--family", choices=MEMORY_FAMILIES, required=True)
    memory.add_argument("--outer", help="Outer code of the concat family")
    memory.add_argument(
        "--dz", type=_list_of(_positive_int), required=True, metavar="D[,D...]"
    )
    memory.add_argument("--basis", type=_basis, default="Z", help="x or z")
    memory.add_argument(
        "--px", type=_list_of(_probability), default="0", metavar="P[,P...]"
    )
    memory.add_argument(
        "--pz", type=_list_of(_probability), default="0", metavar="P[,P...]"
    )
    memory.add_argument("--shots", type=_positive_int, required=True)
    memory.add_argument("--seed", type=_seed, default=0)
    memory.add_argument("--ancillae", type=int, choices=(1, 2), default=1)
    memory.add_argument(
        "--rounds", type=_positive_int, help="Repetition rounds. Default: 3 d_z"
    )
    memory.add_argument("--outer-rounds", type=_positive_int)
    memory.add_argument("-o", "--output", metavar="CSV", help="Aggregate CSV")
    memory.add_argument(
        "--json-dir", metavar="DIR", help="Write one JSON record per run here"
    )
    _add_decoder_arguments(memory)

    fit = leaf(groups, "fit", "fit", "Fit logical error rate models")
    fit.add_argument("results", help="CSV written by 'experiment memory'")
    fit.add_argument(
        "--family",
        type=_list_of(str),
        metavar="NAME[,NAME...]",
        help=f"Model families among {', '.join(FIT_INPUTS)}",
    )
    fit.add_argument("--outer")
    fit.add_argument("--ancillae", type=int, choices=(1, 2))
    fit.add_argument("-o", "--output", metavar="FILE", help="Fit model JSON")

    overhead = leaf(groups, "overhead", "overhead", "Qubit overhead per family")
    overhead.add_argument("--pz", type=_probability, required=True)
    etaGroup = overhead.add_mutually_exclusive_group(required=True)
    etaGroup.add_argument("--eta", type=_list_of(float), metavar="ETA[,ETA...]")
    etaGroup.add_argument("--eta-sweep", type=_eta_sweep, metavar="LO:HI[:N]")
    overhead.add_argument(
        "--target", type=_list_of(_probability), required=True, metavar="P[,P...]"
    )
    overhead.add_argument(
        "--family",
        type=_list_of(str),
        default=",".join(OVERHEAD_FAMILIES),
        metavar="NAME[,NAME...]",
    )
    overhead.add_argument("--models", metavar="FILE", help="Fit model JSON")
    overhead.add_argument("-o", "--output", metavar="CSV")

    reproduce = leaf(groups, "reproduce", "reproduce", "Overhead figure data")
    reproduce.add_argument("figure", choices=sorted(FIGURES))
    reproduce.add_argument(
        "--desk-scale",
        action="store_true",
        help="Refit the repetition models from short simulations first",
    )
    reproduce.add_argument("--shots", type=_positive_int, default=2000)
    reproduce.add_argument("--seed", type=_seed, default=0)
    reproduce.add_argument("--models", metavar="FILE", help="Fit model JSON")
    reproduce.add_argument("-o", "--output", metavar="CSV")
    return parser, leaves


def _parse_args(argv):
    parser, leaves = _build_parser()
    args = parser.parse_args(argv)
    if args.config:
        leaf = leaves[args.command]
        values = read_config_file(args.config)
        leaf.set_defaults(**subparser_defaults(leaf, values, args.config))
        args = parser.parse_args(argv)
    args = vars(args)
    args.pop("group")
    args.pop("action", None)
    if args["format"] == "csv" and args["command"] not in TABLE_COMMANDS:
        parser.error(f"--format csv is not available for {args['command']}")
    return parser, args


def _run(project, parser, args):
    command = args["command"]
    if command == "code info":
        return project.code_info(
            args["code"], args["dz"], args["check"], args["bruteforce"]
        )
    if command == "circuit build":
        noise = args["noise"]
        if noise is not None:
            noise = NoiseModel(*noise)
        return project.build_circuit(
            args["dz"],
            args["basis"],
            outer=args["outer"],
            ancillae=args["ancillae"],
            rounds=args["rounds"],
            noise=noise,
            output=args["output"],
        )
    if command == "sample":
        if args["shots"] < 0:
            parser.error("--shots must be non-negative")
        return project.sample(
            args["circuit"], args["shots"], args["seed"], args["output"]
        )
    if command == "dem":
        return project.extract_dem(args["circuit"], args["output"])
    if command == "decode":
        return project.decode(
            args["dem"],
            args["detectors"],
            args["output"],
            _decoder_config(dict(args)),
            observables_path=args["observables"],
        )
    if command == "experiment memory":
        if args["family"] == "concat" and not args["outer"]:
            parser.error("--family concat needs --outer")
        results = project.memory(
            args["family"],
            args["dz"],
            args["basis"],
            args["px"],
            args["pz"],
            args["shots"],
            args["seed"],
            outer=args["outer"],
            ancillae=args["ancillae"],
            rounds=args["rounds"],
            outer_rounds=args["outer_rounds"],
            decoder_config=_decoder_config(dict(args)),
            output=args["output"],
            json_dir=args["json_dir"],
        )
        return _Table(
            {"runs": [r.to_json() for r in results]},
            functools.partial(write_results_rows, results),
        )
    if command == "fit":
        families = args["family"]
        unknown = sorted(set(families or ()) - set(FIT_INPUTS))
        if unknown:
            parser.error(f"unknown fit families {unknown}")
        models = project.fit(
            args["results"],
            families,
            outer=args["outer"],
            ancillae=args["ancillae"],
            output=args["output"],
        )
        return {"models": [m.to_dict() for m in models]}
    if command == "overhead":
        unknown = sorted(set(args["family"]) - set(OVERHEAD_FAMILIES))
        if unknown:
            parser.error(f"unknown overhead families {unknown}")
        points = project.overhead(
            args["pz"],
            args["eta"] or args["eta_sweep"],
            args["target"],
            args["family"],
            project.registry(args["models"]),
            output=args["output"],
        )
        return _points_summary(points)
    if command == "reproduce":
        points, fitted, output = project.reproduce(
            args["figure"],
            desk_scale=args["desk_scale"],
            shots=args["shots"],
            seed=args["seed"],
            models_path=args["models"],
            output=args["output"],
        )
        summary = _points_summary(points)
        summary["path"] = str(output)
        summary["fitted_models"] = [m.to_dict() for m in fitted]
        return summary
    raise AssertionError(command)


def _points_summary(points):
    summary = {"points": summarize_points(points)}
    if len({p.eta for p in points}) > 1:
        summary["crossover_eta"] = crossover_eta(points)
    return _Table(summary, functools.partial(write_sweep_rows, points))


def _print(document, output_format):
    if output_format == "json":
        print(json.dumps(document, indent=2, sort_keys=True))
        return
    if output_format == "csv":
        document["result"].write_rows(sys.stdout)
        return
    for key, value in document["result"].items():
        if isinstance(value, list):
            print(f"{key}:")
            for item in value:
                print(f"  {json.dumps(item, sort_keys=True)}")
        else:
            print(f"{key}: {value}")


def main(args=None):
    try:
        parser, args = _parse_args(args)
    except ElevatorError as e:
        # raised while reading --config, before logging is configured
        print(f"elevatorcodes: Error: {e}", file=sys.stderr)
        return e.exit_code

    level = args.pop("verbose")
    _configure_logging(level, timing=args.pop("timing"))
    run_config = RunConfig.from_args(args)
    logger.debug("Run configuration: %s", run_config.to_dict())

    PRINT_TRACEBACK = level == "DEBUG"
    try:
        project = ElevatorProject(threads=args["threads"])
        result = _run(project, parser, args)
    except ElevatorError as e:
        if PRINT_TRACEBACK:
            logging.exception(e)
        else:
            print(f"elevatorcodes: Error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        if PRINT_TRACEBACK:
            logging.exception(e)
        else:
            print(f"elevatorcodes: Error: {e}", file=sys.stderr)
        return 2

    _print({"config": run_config.to_dict(), "result": result}, args["format"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
