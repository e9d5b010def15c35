"""
Command-line entry point for hamexpand.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.core.artifacts import encode_json
from src.core.errors import (
    ConfigError,
    ContractViolationError,
    HamExpandError,
    PipelineStepError,
)
from src.core.logging_config import configure_logging
from src.runner import RunOutcome, load_config, parse_config, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

app = typer.Typer(
    name="hamexpand",
    help="Small-noise, tail and short-time density expansions of projected diffusions",
    context_settings={"help_option_names": ["-h", "--help"]},
    no_args_is_help=True,
)

logger = logging.getLogger(__name__)
stderr = Console(stderr=True)

ConfigArg = typer.Argument(None, help="JSON configuration file")
ParamOpt = typer.Option(None, "--param", "-p", help="Parameter override KEY=VALUE")
TargetOpt = typer.Option(None, "--target", help="Target a (repeat for l > 1)")
OutputOpt = typer.Option(None, "--output", "-o", help="Main output file")
FormatOpt = typer.Option(None, "--format", help="Main output format: json or csv")


@app.callback()
def main(
    ctx: typer.Context,
    threads: Optional[int] = typer.Option(
        None, "--threads", min=1, help="Worker cap (fallback: HAMEXPAND_THREADS)"
    ),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging"),
    json_logs: bool = typer.Option(False, "--json-logs", help="Log as JSON lines"),
) -> None:
    """hamexpand command-line interface."""
    configure_logging(debug=debug, json_logs=json_logs)
    ctx.obj = {"threads": threads}


def _fail(payload: Dict[str, Any], code: int) -> NoReturn:
    typer.echo(json.dumps(payload, default=str), err=True)
    raise typer.Exit(code)


def _parse_params(pairs: Optional[List[str]]) -> Dict[str, float]:
    params: Dict[str, float] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"Expected KEY=VALUE, got {pair!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"Parameter {key!r} is not a number: {value!r}") from e
    return params


def _apply_overrides(raw: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Merge flag values into the raw configuration before validation."""
    merged = dict(raw)
    params = _parse_params(overrides.pop("params", None))
    if params:
        if isinstance(merged.get("model"), dict) and "catalog" in merged["model"]:
            model = dict(merged["model"])
            model["params"] = {**model.get("params", {}), **params}
            merged["model"] = model
        else:
            merged["params"] = {**merged.get("params", {}), **params}
    output = {k: overrides.pop(k) for k in ("path", "format") if overrides.get(k) is not None}
    if output:
        merged["output"] = {**merged.get("output", {}), **output}
    for key in ("seed", "n_paths"):
        value = overrides.pop(key, None)
        if value is not None:
            merged["mc"] = {**merged.get("mc", {}), key: value}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _render(outcome: RunOutcome) -> None:
    typer.echo(encode_json(outcome.payload).decode("utf-8"), nl=False)
    if outcome.command == "sweep" and outcome.table is not None and len(outcome.table):
        table = Table(title="Non-focality sweep")
        for column in outcome.table.columns:
            table.add_column(str(column))
        for row in outcome.table.itertuples(index=False):
            table.add_row(*(repr(v) if isinstance(v, float) else str(v) for v in row))
        stderr.print(table)
    for path in outcome.artifacts:
        logger.info(f"Wrote {path}")


def _execute(
    ctx: typer.Context,
    command: Optional[str],
    config_path: Optional[Path],
    overrides: Dict[str, Any],
) -> None:
    """Load, override, validate and run; map errors to exit codes."""
    threads = (ctx.obj or {}).get("threads")
    try:
        raw: Dict[str, Any] = load_config(config_path) if config_path else {}
        if command is not None:
            if raw.get("command", command) != command:
                raise ConfigError(
                    f"Configuration is for '{raw['command']}', not '{command}'"
                )
            raw["command"] = command
        config = parse_config(_apply_overrides(raw, overrides))
        outcome = run(config, n_jobs=threads)
    except ValidationError as e:
        _fail(
            {"error": "ValidationError", "message": str(e), "errors": e.errors(include_url=False)},
            EXIT_INVALID,
        )
    except PipelineStepError as e:
        _fail(e.to_dict(), EXIT_INVALID if e.is_contract_violation else EXIT_NUMERICAL)
    except (ConfigError, ContractViolationError) as e:
        _fail(e.to_dict(), EXIT_INVALID)
    except HamExpandError as e:
        _fail(e.to_dict(), EXIT_NUMERICAL)
    _render(outcome)


@app.command()
def expand(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    param: Optional[List[str]] = ParamOpt,
    target: Optional[List[float]] = TargetOpt,
    output: Optional[str] = OutputOpt,
    fmt: Optional[str] = FormatOpt,
) -> None:
    """Small-noise constants c1, c2 of a model at a target."""
    _execute(
        ctx,
        "expand",
        config,
        {"params": param, "target": target or None, "path": output, "format": fmt},
    )


@app.command()
def tail(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    param: Optional[List[str]] = ParamOpt,
    theta: Optional[int] = typer.Option(None, "--theta", help="Tail scaling exponent"),
    output: Optional[str] = OutputOpt,
    fmt: Optional[str] = FormatOpt,
) -> None:
    """Tail constants and the leading log-density curve."""
    _execute(
        ctx,
        "tail",
        config,
        {"params": param, "theta": theta, "path": output, "format": fmt},
    )


@app.command()
def shorttime(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    target: Optional[List[float]] = TargetOpt,
    output: Optional[str] = OutputOpt,
) -> None:
    """Squared distance of the short-time expansion."""
    _execute(ctx, "shorttime", config, {"target": target or None, "path": output})


@app.command()
def steinstein(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    param: Optional[List[str]] = ParamOpt,
    output: Optional[str] = OutputOpt,
) -> None:
    """Closed-form Stein-Stein tail constants."""
    _execute(ctx, "steinstein", config, {"params": param, "path": output})


@app.command()
def blackscholes(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    param: Optional[List[str]] = ParamOpt,
    output: Optional[str] = OutputOpt,
) -> None:
    """Closed-form Black-Scholes constants."""
    _execute(ctx, "blackscholes", config, {"params": param, "path": output})


@app.command()
def mc(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    param: Optional[List[str]] = ParamOpt,
    seed: Optional[int] = typer.Option(None, "--seed", help="PRNG key"),
    n_paths: Optional[int] = typer.Option(None, "--n-paths", help="Number of paths"),
    samples: Optional[str] = typer.Option(None, "--samples", help="Binary sample file"),
    output: Optional[str] = OutputOpt,
    fmt: Optional[str] = FormatOpt,
) -> None:
    """Monte Carlo terminal samples and the empirical tail slope."""
    _execute(
        ctx,
        "mc",
        config,
        {
            "params": param,
            "seed": seed,
            "n_paths": n_paths,
            "samples_path": samples,
            "path": output,
            "format": fmt,
        },
    )


@app.command()
def smile(
    ctx: typer.Context,
    config: Optional[Path] = ConfigArg,
    b1: Optional[float] = typer.Option(None, "--B1", help="Tail coefficient B1"),
    b2: Optional[float] = typer.Option(None, "--B2", help="Tail coefficient B2"),
    output: Optional[str] = OutputOpt,
    fmt: Optional[str] = FormatOpt,
) -> None:
    """Implied volatility wing coefficients and curve."""
    _execute(ctx, "smile", config, {"B1": b1, "B2": b2, "path": output, "format": fmt})


@app.command()
def sweep(
    ctx: typer.Context,
    config: Path = typer.Argument(..., help="JSON configuration file"),
    output: Optional[str] = OutputOpt,
    fmt: Optional[str] = FormatOpt,
) -> None:
    """Non-focality verdicts over a catalog parameter grid."""
    _execute(ctx, "sweep", config, {"path": output, "format": fmt})


@app.command("run")
def run_config(
    ctx: typer.Context,
    config: Path = typer.Argument(..., help="JSON configuration file"),
) -> None:
    """Run whichever command the configuration names."""
    _execute(ctx, None, config, {})


if __name__ == "__main__":
    app()
