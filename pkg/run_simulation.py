#!/usr/bin/env python3
"""
Hybrid Beamforming Simulation CLI
=================================
Command-line front end for the Monte Carlo experiments.

Available Commands:
- sweep: Run an SNR sweep from a JSON config, write CSV (and optionally SVG)
- gen-channels: Draw the channels of a sweep and save them as a dataset
- realize-check: Verify the exact 2Ns hybrid realization on random precoders
- config: Show the resolved runtime settings

Usage:
    python run_simulation.py sweep --config configs/p2p_vs_fully_digital.json --out results/p2p.csv --chart results/p2p.svg
    python run_simulation.py gen-channels --config configs/miso_baselines.json --out data/miso.chan
    python run_simulation.py realize-check --n 64 --ns 4 --seed 1
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from tqdm import tqdm

# Add the project root to Python path
sys.path.append(str(Path(__file__).parent))

from core import __version__
from core.channel import save_dataset
from core.errors import HybridBeamformingError
from core.hybrid_core import realize_fully_digital
from core.numerics import complex_gaussian
from core.result_export import render_chart, write_csv
from core.settings import Settings, load_settings
from core.sweep import generate_dataset, parse_config, run_sweep

logger = logging.getLogger(__name__)


def setup_logging(settings: Settings, quiet: bool = False) -> None:
    """File log under the settings' log dir plus console output"""
    settings.log_dir.mkdir(parents=True, exist_ok=True)
    handlers = [logging.FileHandler(settings.log_dir / "simulation.log")]
    if not quiet:
        handlers.append(logging.StreamHandler())
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def print_header(title: str):
    """Print a formatted header"""
    click.echo("\n" + "=" * 60)
    click.echo(f" {title}")
    click.echo("=" * 60)


def fail(message: str, code: int = 1):
    logger.error(f"❌ {message}")
    click.echo(f"❌ {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="hybrid-beamforming")
@click.option("--quiet", is_flag=True, help="Only write the log file, no console output")
@click.pass_context
def cli(ctx: click.Context, quiet: bool):
    """Hybrid beamforming design toolkit"""
    settings = load_settings()
    setup_logging(settings, quiet)
    ctx.obj = {"settings": settings, "quiet": quiet}


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Sweep config (JSON)")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="CSV output path")
@click.option("--chart", "chart_path", type=click.Path(dir_okay=False), help="SVG chart output path")
@click.option("--seed", type=int, help="Override the config's master seed")
@click.option("--jobs", type=click.IntRange(min=1), help="Worker processes for trials")
@click.pass_context
def sweep(ctx: click.Context, config_path: str, out_path: Optional[str], chart_path: Optional[str],
          seed: Optional[int], jobs: Optional[int]):
    """Run an SNR sweep"""
    settings: Settings = ctx.obj["settings"]
    try:
        spec = parse_config(Path(config_path))
        if seed is not None:
            spec = spec.with_seed(seed)
        out = Path(out_path) if out_path else settings.output_dir / f"{Path(config_path).stem}.csv"

        with tqdm(total=spec.trials, desc="trials", unit="trial", disable=ctx.obj["quiet"]) as bar:
            result = run_sweep(spec, settings, jobs, on_trial=lambda _: bar.update(1))

        write_csv(result, out)
        if chart_path:
            render_chart(result, chart_path, title=Path(config_path).stem)
    except KeyboardInterrupt:
        click.echo("\n⚠️ Operation cancelled by user", err=True)
        sys.exit(130)
    except (HybridBeamformingError, OSError) as e:
        fail(str(e))

    if not ctx.obj["quiet"]:
        print_header("📊 SWEEP RESULTS")
        click.echo(result.table.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
        click.echo(f"\n💾 {out}")


@cli.command("gen-channels")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, help="Override the config's master seed")
def gen_channels(config_path: str, out_path: str, seed: Optional[int]):
    """Draw one channel realization per trial and save them"""
    try:
        spec = parse_config(Path(config_path))
        if seed is not None:
            spec = spec.with_seed(seed)
        save_dataset(out_path, generate_dataset(spec))
    except (HybridBeamformingError, OSError) as e:
        fail(str(e))
    click.echo(f"✅ Saved {spec.trials} realizations to {out_path}")


@cli.command("realize-check")
@click.option("--n", "n_antennas", type=click.IntRange(min=1), default=64, show_default=True)
@click.option("--ns", "n_streams", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
def realize_check(n_antennas: int, n_streams: int, seed: int, count: int, tol: float):
    """Realize random fully digital precoders with 2Ns RF chains and report the error"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for _ in range(count):
            v_fd = complex_gaussian(rng, n_antennas, n_streams)
            precoder = realize_fully_digital(v_fd)
            error = np.linalg.norm(precoder.effective - v_fd) / np.linalg.norm(v_fd)
            worst = max(worst, float(error))
    except HybridBeamformingError as e:
        fail(str(e))

    status = "✅" if worst < tol else "❌"
    click.echo(f"{status} {count} precoders ({n_antennas}x{n_streams}, N_RF={2 * n_streams}): "
               f"worst relative error {worst:.3e}")
    if worst >= tol:
        sys.exit(1)


@cli.command()
@click.pass_context
def config(ctx: click.Context):
    """Show configuration status"""
    print_header("🔧 CONFIGURATION STATUS")
    for key, value in ctx.obj["settings"].as_dict().items():
        click.echo(f"  {key:<18} {value}")


if __name__ == "__main__":
    cli()
