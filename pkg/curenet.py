#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# MAIN SCRIPT v1.0
# CODEX: This is the main entry point for the CureNet application.
# CODEX: It parses command-line arguments, resolves the configuration and maps failures to exit codes.

import argparse
import logging
import os
import sys
import platform
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

# Import internal modules
from src.config import ConfigManager
from src.cli import CLIManager
from src.errors import CureNetError
from src.utils import setup_logging

EXIT_OK = 0
EXIT_UNEXPECTED = 1

COMMANDS = {
    "generate": "handle_generate_command",
    "train": "handle_train_command",
    "ensemble": "handle_ensemble_command",
    "eki-train": "handle_eki_train_command",
    "transfer": "handle_transfer_command",
    "eki-transfer": "handle_eki_transfer_command",
    "predict": "handle_predict_command",
    "bands": "handle_bands_command",
    "optimize": "handle_optimize_command",
}


def main(argv=None, console=None):
    """
    CODEX: Main entry point for the CureNet application.
    CODEX: Parses command line arguments and routes to appropriate handlers.

    Args:
        argv (list, optional): Arguments without the program name. Defaults to sys.argv[1:].
        console (rich.console.Console, optional): Console for output

    Returns:
        int: Process exit code (0 ok, 2 config, 3 data, 4 numerical, 1 unexpected)
    """
    console = console or Console()
    args = parse_arguments(argv)

    if args.command is None:
        console.print("[bold red]No command given.[/bold red] Use --help to see available commands.")
        return 2

    if not args.quiet:
        display_banner(console)

    try:
        config = load_configuration(args)
        setup_logging(config.get_logging_config())
        cli_manager = CLIManager(config, console)
        getattr(cli_manager, COMMANDS[args.command])(args)
    except CureNetError as e:
        console.print(f"[bold red]{type(e).__name__}:[/bold red] {str(e)}")
        console.print("[yellow]For more details, check the log file.[/yellow]")
        return e.exit_code
    except Exception as e:
        logging.getLogger(__name__).exception(f"Unexpected failure in {args.command}")
        console.print(f"[bold red]Error:[/bold red] {str(e)}")
        return EXIT_UNEXPECTED

    return EXIT_OK


def load_configuration(args):
    """
    CODEX: Load the configuration document and apply the top-level flag overrides.

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        ConfigManager: Validated configuration
    """
    config = ConfigManager(args.config)
    config.apply_overrides({
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.output,
        "dataset_path": args.dataset,
        "model_path": args.model,
        "ensemble_path": args.ensemble,
        "record_path": args.record,
    })
    return config


def parse_arguments(argv=None):
    """
    CODEX: Parse command line arguments for the application.
    CODEX: Every subcommand shares the run-level flags; predict and bands also take a query.

    Returns:
        argparse.Namespace: Parsed command line arguments
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration (default: config.yaml)")
    common.add_argument("--output", help="Output directory")
    common.add_argument("--seed", type=int, help="Global seed (overrides CURENET_SEED and the file)")
    common.add_argument("--workers", type=int, help="Worker processes (0 = all CPUs)")
    common.add_argument("--dataset", help="Dataset directory or manifest")
    common.add_argument("--model", help="Trained model JSON")
    common.add_argument("--ensemble", help="Ensemble or EKI particle directory")
    common.add_argument("--record", help="Experiment CSV (sidecar JSON next to it)")
    common.add_argument("--quiet", action="store_true", help="Do not print the banner")

    parser = argparse.ArgumentParser(
        description="CureNet - Operator-network surrogates for process-induced deformation in curing composites",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    subparsers.add_parser("generate", parents=[common], help="Simulate the cure-cycle dataset")
    subparsers.add_parser("train", parents=[common], help="Train one operator network with Adam")
    subparsers.add_parser("ensemble", parents=[common], help="Train a seed ensemble")
    subparsers.add_parser("eki-train", parents=[common], help="Train with ensemble Kalman inversion")
    subparsers.add_parser("transfer", parents=[common], help="Fine-tune on a measured cycle")
    subparsers.add_parser("eki-transfer", parents=[common], help="Tikhonov EKI transfer of an ensemble")

    for name, text in (("predict", "Predict histories for one cure cycle"),
                       ("bands", "Ensemble mean and std bands for one cure cycle")):
        query_parser = subparsers.add_parser(name, parents=[common], help=text)
        query_parser.add_argument("--t1", type=float, help="Intermediate point time (min)")
        query_parser.add_argument("--T1", type=float, help="Intermediate point temperature (C)")
        query_parser.add_argument("--doc0", type=float, help="Initial degree of cure")

    subparsers.add_parser("optimize", parents=[common], help="Search the cure schedule minimizing deformation")

    return parser.parse_args(argv)


def display_banner(console):
    """
    CODEX: Display the application banner.

    Args:
        console (rich.console.Console): Console for output
    """
    banner = """
     ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
    ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
    ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
    ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
    ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
     ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
    """

    console.print(Panel.fit(
        f"[bold cyan]{banner}[/bold cyan]\n[bold green]Cure-Process Surrogates with Uncertainty[/bold green]",
        border_style="green"
    ))

    # Display system information
    system_info = Table.grid(padding=(0, 1))
    system_info.add_row("Version:", "[cyan]1.0.0[/cyan]")
    system_info.add_row("Platform:", f"[cyan]{platform.system()} {platform.release()}[/cyan]")
    system_info.add_row("Python:", f"[cyan]{platform.python_version()}[/cyan]")

    console.print(system_info)
    console.print("")


if __name__ == "__main__":
    sys.exit(main())
