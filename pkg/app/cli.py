"""
Command-line surface: risk, bounds, optimize and sweep.

Every command prints one JSON object on stdout (sweeps print CSV by default).
Floats are written with 17 significant digits. Exit codes: 0 success,
2 usage error, 3 precondition or resource error.
"""
import io
import json
import logging
import math
import time
from typing import Any, Optional

import click
import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from app import __version__
from app.config import get_settings
from app.exceptions import EXIT_USAGE, AppException
from app.logger import logger, log_with_context
from app.schemas import BoundReport, DirichletSpec, ErrorResponse, OutputRecord, SimConfig
from app.services.bounds import (
    bernoulli_worst_case_risk,
    de3_check,
    dirichlet_bayes_risk,
    dirichlet_lower_bound,
    maximize_dirichlet_coefficient,
    mc_bayes_variance,
    minimax_bracket,
)
from app.services.dist import parse_descriptor
from app.services.montecarlo import evaluate_risk, mc_sweep
from app.services.risk import maximize_uniform_coefficient


settings = get_settings()

METHODS = ["exact", "asymptotic", "mc", "brute"]


def _dumps(value: Any) -> str:
    """Deterministic JSON with floats at 17 significant digits and non-finite floats as null."""
    if isinstance(value, BaseModel):
        return _dumps(value.model_dump())
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dumps(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_dumps(v) for v in value) + "]"
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _emit(ctx: click.Context, command: str, parameters: dict, results: Any, seed: Optional[int] = None) -> None:
    record = OutputRecord(
        command=command,
        parameters=parameters,
        results=results,
        seed=seed,
        version=__version__,
        wall_time_s=time.perf_counter() - ctx.obj["started"] if ctx.obj["timing"] else None,
    )
    payload = record.model_dump()
    if payload["wall_time_s"] is None:
        del payload["wall_time_s"]
    click.echo(_dumps(payload))


def _parse_values(ctx, param, text: Optional[str]) -> Optional[list[float]]:
    if text is None:
        return None
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got '{text}'")
    if not values:
        raise click.BadParameter("at least one value is required")
    return values


class CliGroup(click.Group):
    """Maps application errors to their exit codes and a JSON error object on stderr."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except AppException as exc:
            self._fail(ctx, exc.message, type(exc).__name__, exc.exit_code)
        except ValidationError as exc:
            self._fail(ctx, str(exc), "ValidationError", EXIT_USAGE)

    @staticmethod
    def _fail(ctx: click.Context, message: str, error_type: str, exit_code: int) -> None:
        log_with_context(
            logger,
            "error",
            "Command failed",
            error_type=error_type,
            error_message=message,
            exit_code=exit_code,
        )
        error = ErrorResponse(message=message, error_type=error_type, exit_code=exit_code)
        click.echo(_dumps(error), err=True)
        ctx.exit(exit_code)


@click.group(cls=CliGroup)
@click.version_option(__version__, prog_name=settings.APP_NAME)
@click.option("--timing", is_flag=True, help="Add wall time to the output record.")
@click.option("--log-level", default=None, help="Override LOG_LEVEL for this run.")
@click.pass_context
def cli(ctx: click.Context, timing: bool, log_level: Optional[str]):
    """Risk of missing-mass estimators: exact formulas, bounds and simulation."""
    ctx.ensure_object(dict)
    ctx.obj["timing"] = timing
    ctx.obj["started"] = time.perf_counter()
    if log_level:
        logger.setLevel(getattr(logging, log_level.upper(), logging.WARNING))


def _sim_options(func):
    func = click.option("--threads", type=click.IntRange(min=1), default=None,
                        help="Monte Carlo workers (default MC_THREADS).")(func)
    func = click.option("--estimator", default="gt", show_default=True,
                        help="gt or dirichlet:ALPHA:K.")(func)
    func = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=settings.MC_DEFAULT_SEED,
                        show_default=True)(func)
    func = click.option("--reps", type=click.IntRange(min=1), default=settings.MC_DEFAULT_REPS,
                        show_default=True)(func)
    return func


@cli.command("risk")
@click.option("--method", type=click.Choice(METHODS), default="exact", show_default=True)
@click.option("--dist", "dist_text", required=True,
              help="uniform:K, pc:P0:K, zipf:K:S, uniform-cn:C, explicit:@FILE or explicit:P1,P2,...")
@click.option("--n", type=click.IntRange(min=1), required=True, help="Sample length.")
@_sim_options
@click.pass_context
def cmd_risk(ctx, method, dist_text, n, reps, seed, estimator, threads):
    """Risk of an estimator on one distribution."""
    cfg = SimConfig(n=n, reps=reps, seed=seed, estimator=estimator,
                    dist=parse_descriptor(dist_text), threads=threads)
    report = evaluate_risk(cfg, method)
    parameters = {"method": method, "dist": dist_text, "n": n, "estimator": estimator}
    if method == "mc":
        parameters["reps"] = reps
    _emit(ctx, "risk", parameters, report, seed=seed if method == "mc" else None)


@cli.command("bounds")
@click.option("--dirichlet", "mode", flag_value="dirichlet", help="Bayes-risk lower bound under a Dirichlet prior.")
@click.option("--bracket", "mode", flag_value="bracket", help="Lower and upper bounds on the minimax risk.")
@click.option("--de3", "mode", flag_value="de3", help="Concentration of the missing mass on the P_c family.")
@click.option("--bernoulli", "mode", flag_value="bernoulli", help="Worst-case risk of a Bernoulli estimator.")
@click.option("--n", type=click.IntRange(min=1), required=True, help="Sample length.")
@click.option("--c", type=click.FloatRange(min=0, min_open=True), default=0.5, show_default=True,
              help="a = c n for the Dirichlet bound.")
@click.option("--k", type=click.IntRange(min=1), default=None, help="Prior support size (with --alpha).")
@click.option("--alpha", type=click.FloatRange(min=0, min_open=True), default=None, help="Prior concentration.")
@click.option("--mc", is_flag=True, help="Also run the Monte Carlo oracle for the Dirichlet bound.")
@click.option("--p0", type=click.FloatRange(0.5, 1.0), default=0.5, show_default=True)
@click.option("--estimator-kind", type=click.Choice(["empirical", "add_half_sqrt_n"]), default="empirical",
              show_default=True)
@click.option("--grid-size", type=click.IntRange(min=101), default=1001, show_default=True)
@click.option("--interval", type=(float, float), default=(0.5, 1.0), show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=settings.MC_DEFAULT_REPS, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=settings.MC_DEFAULT_SEED, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=None)
@click.pass_context
def cmd_bounds(ctx, mode, n, c, k, alpha, mc, p0, estimator_kind, grid_size, interval, reps, seed, threads):
    """Lower bounds and the minimax bracket."""
    if not mode:
        raise click.UsageError("choose one of --dirichlet, --bracket, --de3, --bernoulli")

    match mode:
        case "bracket":
            _emit(ctx, "bounds", {"mode": mode, "n": n}, minimax_bracket(n))

        case "dirichlet":
            if (k is None) != (alpha is None):
                raise click.UsageError("--k and --alpha must be given together")
            if k is not None:
                spec = DirichletSpec(k=k, alpha=alpha)
                bound = BoundReport.build(n, "dirichlet_prior", dirichlet_bayes_risk(n, spec),
                                          provenance="Bayes risk under a symmetric Dirichlet prior",
                                          k=k, alpha=alpha)
                parameters = {"mode": mode, "n": n, "k": k, "alpha": alpha}
            else:
                bound = dirichlet_lower_bound(n, c)
                spec = DirichletSpec(k=bound.params["k"], alpha=bound.params["alpha"])
                parameters = {"mode": mode, "n": n, "c": c}

            results: dict[str, Any] = {"bound": bound}
            if mc:
                results["monte_carlo"] = mc_bayes_variance(n, spec, reps, seed, threads)
                parameters["reps"] = reps
            _emit(ctx, "bounds", parameters, results, seed=seed if mc else None)

        case "de3":
            report = de3_check(n, p0, reps, seed, threads)
            _emit(ctx, "bounds", {"mode": mode, "n": n, "p0": p0, "reps": reps}, report, seed=seed)

        case "bernoulli":
            report = bernoulli_worst_case_risk(n, estimator_kind, grid_size, interval)
            parameters = {"mode": mode, "n": n, "estimator_kind": estimator_kind,
                          "grid_size": grid_size, "interval": list(interval)}
            _emit(ctx, "bounds", parameters, report)


@cli.command("optimize")
@click.option("--target", type=click.Choice(["gt-uniform", "dirichlet"]), required=True)
@click.pass_context
def cmd_optimize(ctx, target):
    """Maximize a normalized-risk coefficient over c."""
    result = maximize_uniform_coefficient() if target == "gt-uniform" else maximize_dirichlet_coefficient()
    _emit(ctx, "optimize", {"target": target}, result)


@cli.command("sweep")
@click.option("--axis", type=click.Choice(["n", "k", "c"]), required=True)
@click.option("--values", callback=_parse_values, required=True, help="Comma-separated values of the axis.")
@click.option("--dist", "dist_text", default="uniform-cn:1", show_default=True,
              help="Base distribution; replaced per row when sweeping c.")
@click.option("--n", type=click.IntRange(min=1), default=1000, show_default=True,
              help="Sample length; replaced per row when sweeping n.")
@click.option("--method", type=click.Choice(METHODS), default="exact", show_default=True)
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@_sim_options
@click.pass_context
def cmd_sweep(ctx, axis, values, dist_text, n, method, output_format, reps, seed, estimator, threads):
    """One risk row per value of the swept parameter."""
    base = SimConfig(n=n, reps=reps, seed=seed, estimator=estimator,
                     dist=parse_descriptor(dist_text), threads=threads)
    rows = mc_sweep(base, axis, values, method)

    if output_format == "json":
        parameters = {"axis": axis, "values": values, "dist": dist_text, "n": n, "method": method}
        _emit(ctx, "sweep", parameters, rows, seed=seed if method == "mc" else None)
        return

    frame = pd.DataFrame([row.model_dump() for row in rows],
                         columns=["axis", "value", "n", "method", "risk", "normalized_risk", "stderr"])
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    click.echo(buffer.getvalue(), nl=False)


def main() -> None:
    cli(prog_name=settings.APP_NAME)


if __name__ == "__main__":
    main()
