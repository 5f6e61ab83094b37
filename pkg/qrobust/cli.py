"""Command-line interface for qrobust."""

from __future__ import annotations

import functools
from pathlib import Path

import click

from qrobust import __version__

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_RUNTIME = 3
EXIT_INTERRUPTED = 130

_PROBLEMS = ("ensemble", "consensus", "sphere", "noisy-landscape")
_ALGORITHMS = ("msms_de", "ms_de", "de1", "ga")


def _exit_codes(func):
    """Map library errors to the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        from qrobust.config import ConfigError
        from qrobust.core.dynamics import DynamicsError
        from qrobust.core.optimizers import EvaluationError, InvariantError

        ctx = click.get_current_context()
        try:
            code = func(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"Config error: {e}", err=True)
            ctx.exit(EXIT_CONFIG)
        except (DynamicsError, InvariantError, EvaluationError) as e:
            click.echo(f"Runtime error: {e}", err=True)
            ctx.exit(EXIT_RUNTIME)
        except (ValueError, FileNotFoundError) as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_CONFIG)
        except KeyboardInterrupt:
            click.echo("Interrupted.", err=True)
            ctx.exit(EXIT_INTERRUPTED)
        if code:
            ctx.exit(code)
        return EXIT_OK

    return wrapper


def _load_config(path: str | None):
    from qrobust.config import ExperimentConfig

    return ExperimentConfig.load(path) if path else ExperimentConfig()


@click.group()
@click.version_option(__version__, prog_name="qrobust")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
def cli(verbose: bool):
    """qrobust -- robust quantum control with multi-sample differential evolution."""
    import logging
    from qrobust.logging import setup_logging
    setup_logging(level=logging.DEBUG if verbose else logging.WARNING)


@cli.command()
@click.option("--config", "-c", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML experiment configuration")
@click.option("--seed", type=int, default=None, help="Training seed")
@click.option("--out", "-o", default=None, help="Run output directory")
@click.option("--problem", type=click.Choice(_PROBLEMS), default=None, help="Problem override")
@click.option("--algorithm", type=click.Choice(_ALGORITHMS), default=None, help="Algorithm override")
@click.option("--gmax", type=click.IntRange(min=0), default=None, help="Maximum generations")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Evaluation threads")
@click.option("--full-scale", is_flag=True, help="Use G_max = 50000 for the quantum problems")
@click.option("--log-file", default=None, help="Also write the log to this file")
@_exit_codes
def train(
    config: str | None,
    seed: int | None,
    out: str | None,
    problem: str | None,
    algorithm: str | None,
    gmax: int | None,
    threads: int | None,
    full_scale: bool,
    log_file: str | None,
):
    """Train a robust control and test it."""
    import logging
    from qrobust.core.engine import ExperimentEngine
    from qrobust.logging import get_logger, setup_logging

    if log_file:
        file_level = min(get_logger().getEffectiveLevel(), logging.INFO)
        setup_logging(log_file=log_file, file_level=file_level)

    cfg = _load_config(config).with_overrides(
        seed=seed,
        output_dir=out,
        problem=problem,
        algorithm=algorithm,
        max_generations=gmax,
        threads=threads,
        full_scale=True if full_scale else None,
    )
    engine = ExperimentEngine(cfg)
    engine.set_callbacks(
        on_stage=lambda idx, name: click.echo(f"[{idx + 1}/{len(engine.STAGES)}] {name}"),
    )
    resolved = engine.config
    click.echo(
        f"Problem: {resolved.problem}  Algorithm: {resolved.algorithm.name}  "
        f"NP={resolved.algorithm.population_size}  G_max={resolved.algorithm.max_generations}  "
        f"seed={resolved.seed}"
    )

    result = engine.train(resolved.output_dir)
    history = result.history
    click.echo(f"  Generations: {history.generations}")
    click.echo(f"  Training fitness: {history.final_fitness:.6f}")
    if result.report is not None:
        r = result.report
        click.echo(
            f"  Testing ({r.mode}, {r.n_samples} samples): mean {r.mean:.6f}  "
            f"min {r.min:.6f}  max {r.max:.6f}  std {r.std:.6f}"
        )
    click.echo(f"\nRun saved: {result.output_dir}")

    if history.interrupted:
        click.echo("Training interrupted; last completed generation saved.", err=True)
        return EXIT_INTERRUPTED
    return EXIT_OK


@cli.command()
@click.argument("genome_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "-c", type=click.Path(exists=True, dir_okay=False), required=True,
              help="YAML experiment configuration (e.g. a run's config.resolved.yaml)")
@click.option("--out", "-o", default=None, help="Output directory (default: <genome dir>/evaluate)")
@click.option("--samples", type=click.IntRange(min=0), default=None, help="Number of test samples")
@click.option("--mode", type=click.Choice(("uniform", "additive_noise")), default=None,
              help="Uniform uncertainty sampling or additive genome noise")
@click.option("--seed", type=int, default=None, help="Test seed")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Evaluation threads")
@_exit_codes
def evaluate(
    genome_csv: str,
    config: str,
    out: str | None,
    samples: int | None,
    mode: str | None,
    seed: int | None,
    threads: int | None,
):
    """Robustness-test a stored genome."""
    from qrobust.core.engine import ExperimentEngine

    cfg = _load_config(config).with_overrides(
        threads=threads, n_samples=samples, test_mode=mode, test_seed=seed
    )
    engine = ExperimentEngine(cfg)
    genome = engine.load_genome(genome_csv)
    output_dir = Path(out) if out else Path(genome_csv).parent / "evaluate"

    click.echo(f"Evaluating: {Path(genome_csv).name} ({engine.problem.name}, {genome.size} values)")
    report = engine.test(genome, output_dir)
    click.echo(f"  Mode: {report.mode}  Samples: {report.n_samples}")
    if report.n_samples:
        click.echo(
            f"  mean {report.mean:.6f}  min {report.min:.6f}  "
            f"max {report.max:.6f}  std {report.std:.6f}"
        )
    click.echo(f"\nReport saved: {output_dir}")
    return EXIT_OK


@cli.command()
@click.option("--seed", type=int, default=12345, help="Seed for the randomized checks")
@click.option("--output", "-o", default=None, help="Excel report path")
@_exit_codes
def verify(seed: int, output: str | None):
    """Run the analytic verification checks."""
    from qrobust.core.verifier import run_verification

    result = run_verification(seed=seed)
    status_color = "green" if result.passed else "red"
    click.echo(
        f"Result: {click.style(result.overall_status, fg=status_color)} "
        f"({len(result.checks)} checks)"
    )
    for check in result.checks:
        icon = "+" if check.status == "PASS" else "X"
        click.echo(
            f"  [{icon}] {check.name}: residual {check.residual:.3e} (tol {check.tolerance:.0e})"
        )

    if output:
        from qrobust.reporting.excel_report import write_verification_report

        write_verification_report(result, output)
        click.echo(f"\nReport saved: {output}")
    return EXIT_OK if result.passed else EXIT_VERIFY


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "-o", default=None, help="Comparison CSV path")
@click.option("--markdown", default=None, help="Also write the Markdown table to this path")
@click.option("--xlsx", default=None, help="Also write a styled Excel workbook")
@_exit_codes
def compare(run_dirs: tuple[str, ...], out: str | None, markdown: str | None, xlsx: str | None):
    """Compare finished runs of the same problem."""
    from qrobust.reporting.comparison import (
        compare_runs,
        load_records,
        to_markdown,
        write_comparison_csv,
    )

    loaded = load_records(list(run_dirs))
    table = compare_runs(loaded)
    problem = loaded[0][1].problem
    text = to_markdown(table, problem)
    click.echo(text)

    if out:
        write_comparison_csv(table, out)
        click.echo(f"CSV saved: {out}")
    if markdown:
        Path(markdown).write_text(text, encoding="utf-8")
        click.echo(f"Markdown saved: {markdown}")
    if xlsx:
        from qrobust.reporting.excel_report import write_comparison_report

        write_comparison_report(table, xlsx, problem=problem)
        click.echo(f"Workbook saved: {xlsx}")
    return EXIT_OK


if __name__ == "__main__":
    cli()
