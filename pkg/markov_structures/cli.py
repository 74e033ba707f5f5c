"""Command line entry point: run, verify and list the bundled scenarios."""
import argparse
import csv
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .chain import validate_generator
from .config import EXPLICIT, bundled_scenarios, resolve_scenario
from .consistency import check_law_matching, default_grid
from .exceptions import ConfigError, DomainError, InfeasibleStepError
from .measures import check_absolute_continuity, measure_series
from .montecarlo import empirical_marginal_law, estimate_event
from .schema import scenario_json_schema
from .semigroup import propagate
from .structures import (
    chain_steps,
    example_family,
    explicit_structure,
    independence_structure,
    matched_extreme_contagion,
    no_resurrection_mask,
    sparsity_mask,
    strong_common_jump,
)

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "nu_dep", "nu_ind", "rho", "kl", "kappa", "classification")
MC_SIGMAS = 4.0
EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

__all__ = (
    "format_float",
    "build_dependent",
    "comparison_builders",
    "run_scenario",
    "verify_scenario",
    "list_examples",
    "main",
)


def format_float(value):
    """At most 12 significant digits; negative zero prints as ``0``."""
    text = "%.12g" % value
    return "0" if float(text) == 0 else text


def _periods(breakpoints):
    bounds = ["%g" % b for b in breakpoints] + ["∞"]
    return ",".join("[%s,%s)" % pair for pair in zip(bounds, bounds[1:]))


def _max_horizon(config):
    mode = config.mode
    return mode.horizon if mode.kind == "fixed" else mode.end + mode.window


def build_dependent(config, classify_now=True):
    functions = config.functions()
    if config.family == EXPLICIT:
        spec = explicit_structure(
            config.generator.breakpoints,
            [np.array(m, dtype=float) for m in config.generator.matrices],
            (functions["lambda_1"], functions["lambda_2"]),
            label="dependent",
        )
        if classify_now and validate_generator(spec.generator).ok:
            spec = spec.classified(default_grid(spec.generator, _max_horizon(config)))
        return spec
    return example_family(
        config.family, functions, label="dependent", classify_now=classify_now
    )


def _discrete_time(config, dependent):
    algorithm = config.algorithm
    horizon = _max_horizon(config)
    steps = algorithm.steps or int(math.ceil(horizon / algorithm.dt - 1e-9))
    if algorithm.mask == "sparsity":
        mask = sparsity_mask(dependent.generator)
    elif algorithm.mask == "no_resurrection":
        mask = no_resurrection_mask(dependent.space)
    else:
        mask = None
    return chain_steps(
        dependent.initial,
        dependent.prescribed_marginals,
        algorithm.dt,
        steps,
        template_mask=mask,
        constraint=algorithm.constraint,
        tolerance=algorithm.tolerance,
        label="discrete_time",
    )


def comparison_builders(config, dependent):
    """``(name, build)`` pairs for every structure of the comparison set."""
    marginals = dependent.prescribed_marginals
    builders = [("dependent", lambda: dependent)]
    for eta in config.comparison.etas:
        name = "strong_eta_%g" % eta
        builders.append(
            (
                name,
                lambda eta=eta, name=name: strong_common_jump(
                    marginals, eta, initial=dependent.initial, label=name
                ),
            )
        )
    if config.comparison.extreme_contagion:
        builders.append(
            (
                "extreme_contagion",
                lambda: matched_extreme_contagion(
                    marginals, initial=dependent.initial, label="extreme_contagion"
                ),
            )
        )
    if config.algorithm is not None:
        builders.append(("discrete_time", lambda: _discrete_time(config, dependent)))
    return builders


def _evaluate(config, build):
    spec = build()
    logger.info("built structure %s", spec.label)
    query = config.query
    series = measure_series(
        spec, config.mode.build(), config.grid_step, query.z, query.h, query.x
    )
    return spec, series


def _atomic_write(path, write):
    handle = tempfile.NamedTemporaryFile(
        "w", dir=str(path.parent), prefix=".%s." % path.name, delete=False,
        encoding="utf-8", newline="",
    )
    try:
        with handle:
            write(handle)
        os.replace(handle.name, str(path))
    except BaseException:
        os.unlink(handle.name)
        raise
    logger.info("wrote %s", path)


def _write_series(handle, series):
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in series.records:
        writer.writerow(
            [format_float(v) for v in (r.t, r.nu_dep, r.nu_ind, r.rho, r.kl, r.kappa)]
            + [r.instability]
        )


def _monte_carlo_lines(config, spec, series):
    mc = config.montecarlo
    horizon = series.records[0].T
    lines = ["monte carlo (%d paths, seed %d):" % (mc.n_paths, mc.seed)]
    try:
        estimate = estimate_event(
            spec.generator, spec.initial, horizon, config.query.z, config.query.h,
            mc.n_paths, mc.seed,
        )
    except DomainError as exc:
        return lines + ["  skipped: %s" % exc]
    exact = series.records[0].nu_dep
    ok = abs(estimate.value - exact) <= MC_SIGMAS * estimate.stderr + 1e-12
    lines.append(
        "  nu_dep(0) exact %s estimate %s stderr %s %s"
        % (format_float(exact), format_float(estimate.value),
           format_float(estimate.stderr), "PASS" if ok else "FAIL")
    )
    law = propagate(spec.initial, spec.generator, horizon).probs
    for i in range(spec.space.m):
        probs, errors = empirical_marginal_law(
            spec.generator, spec.initial, i, [horizon], mc.n_paths, mc.seed
        )[0]
        exact_default = float(law[spec.space.coordinate(i) == 1].sum())
        ok = abs(probs[1] - exact_default) <= MC_SIGMAS * errors[1] + 1e-12
        lines.append(
            "  P(X^%d_T = 1) exact %s estimate %s %s"
            % (i + 1, format_float(exact_default), format_float(probs[1]),
               "PASS" if ok else "FAIL")
        )
    return lines


def _report(config, results, monte_carlo):
    lines = ["scenario: %s" % config.name]
    if config.description:
        lines.append("description: %s" % config.description)
    lines.append("mode: %s, grid step %g" % (config.mode.build().describe(), config.grid_step))
    reference = dict(results)["dependent"][1].column("kappa")
    for name, (spec, series) in results:
        lines.append("")
        lines.append("[%s]" % name)
        if spec.classification is not None:
            lines.append(spec.classification.summary())
            for i, witness in enumerate(spec.classification.condition_M.witnesses):
                if witness is not None:
                    lines.append("  condition M fails for X^%d: %s" % (i + 1, witness))
        kappa = series.column("kappa")
        lines.append(
            "kappa range: [%s, %s]"
            % (format_float(kappa.min()), format_float(kappa.max()))
        )
        if name == "discrete_time":
            # the step system is underdetermined, so only the marginal laws are pinned
            lines.append(
                "kappa gap to dependent: max %s" % format_float(np.abs(kappa - reference).max())
            )
        if monte_carlo and config.montecarlo is not None and name == "dependent":
            lines.extend(_monte_carlo_lines(config, spec, series))
    return "\n".join(lines) + "\n"


def run_scenario(config, out_dir, grid_step=None, monte_carlo=False):
    """Evaluate the comparison set of ``config`` and write its CSVs and report.

    Returns:
        list: The written paths, report last.
    """
    if grid_step is not None:
        config = config.with_grid_step(grid_step)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dependent = build_dependent(config)
    builders = comparison_builders(config, dependent)
    with ThreadPoolExecutor() as pool:
        futures = [(name, pool.submit(_evaluate, config, build)) for name, build in builders]
        results = [(name, future.result()) for name, future in futures]

    written = []
    for name, (spec, series) in results:
        path = out_dir / ("%s__%s.csv" % (config.name, name))
        _atomic_write(path, lambda handle, series=series: _write_series(handle, series))
        written.append(path)
    report = out_dir / ("%s__report.txt" % config.name)
    text = _report(config, results, monte_carlo)
    _atomic_write(report, lambda handle: handle.write(text))
    written.append(report)
    return written


def _use_colour(stream):
    return "NO_COLOR" not in os.environ and getattr(stream, "isatty", lambda: False)()


def _status(ok, colour):
    word = "PASS" if ok else "FAIL"
    if not colour:
        return word
    return "\033[%sm%s\033[0m" % ("32" if ok else "31", word)


def verify_scenario(config, stream=None):
    """Print PASS/FAIL for each check of the dependent structure; True when all pass."""
    stream = stream or sys.stdout
    colour = _use_colour(stream)

    def emit(ok, what, detail=""):
        stream.write("%s %s%s\n" % (_status(ok, colour), what, ": " + detail if detail else ""))
        return ok

    spec = build_dependent(config, classify_now=False)
    report = validate_generator(spec.generator)
    if not emit(report.ok, "generator", "; ".join(str(v) for v in report.violations)):
        return False

    horizon = _max_horizon(config)
    grid = default_grid(spec.generator, horizon)
    spec = spec.classified(grid)
    stream.write("%s\n" % spec.classification.summary())
    matching = check_law_matching(spec.generator, spec.initial, spec.prescribed_marginals, grid)
    results = [
        emit(
            matching.holds,
            "law matching",
            "max error %s" % ", ".join(format_float(e) for e in matching.max_error),
        )
    ]
    continuity = check_absolute_continuity(spec, independence_structure(spec), grid)
    results.append(
        emit(
            continuity.ok,
            "absolute continuity",
            "" if continuity.ok else "%d violations, first %r" % (
                len(continuity.violations), continuity.violations[0]),
        )
    )
    return all(results)


def list_examples(stream=None):
    stream = stream or sys.stdout
    for name, config in bundled_scenarios().items():
        first = next(iter(config.parameters.values()))
        stream.write(
            "%s\t%s\tperiods %s\n" % (name, config.description, _periods(first.breakpoints))
        )


def _parser():
    parser = argparse.ArgumentParser(
        prog="markov-structures",
        description="Markov structures and systemic instability measures.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="evaluate a scenario and write CSVs")
    run.add_argument("config", help="scenario file or bundled scenario name")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--grid-step", type=float, default=None, help="override the grid step")
    run.add_argument("--mc", action="store_true", help="add the Monte Carlo cross-check")

    verify = commands.add_parser("verify", help="check a scenario without measures")
    verify.add_argument("config", help="scenario file or bundled scenario name")

    commands.add_parser("list-examples", help="list the bundled scenarios")
    commands.add_parser("schema", help="print the scenario file JSON Schema")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            if args.grid_step is not None and args.grid_step <= 0:
                raise DomainError("--grid-step must be positive")
            config = resolve_scenario(args.config)
            for path in run_scenario(config, args.out, args.grid_step, args.mc):
                print(path)
            return EXIT_OK
        if args.command == "verify":
            return EXIT_OK if verify_scenario(resolve_scenario(args.config)) else EXIT_FAIL
        if args.command == "list-examples":
            list_examples()
            return EXIT_OK
        print(scenario_json_schema())
        return EXIT_OK
    except ConfigError as exc:
        for message in exc.messages:
            print("%s:%s" % (exc.source, message), file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleStepError as exc:
        print("error: construction failed at step %d: %s" % (exc.step, exc), file=sys.stderr)
        return EXIT_INFEASIBLE
