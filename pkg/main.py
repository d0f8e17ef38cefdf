#!/usr/bin/env python3
"""Main entry point for the thermal-event signage sketching pipeline."""
import sys
from typing import List, Optional

from rich.console import Console

from src.cli.interface import PipelineCLI, parse_args
from src.utils.config import load_config
from src.utils.exceptions import UtaSignError
from src.utils.logger import setup_logger


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and run one verb."""
    args = parse_args(argv)
    console = Console()

    try:
        config = load_config(args.config)
        logger = setup_logger(name="uta_sign", level=config.log_level, log_file=config.log_file)
        logger.debug(f"Configuration: {config.to_dict()}")
        return PipelineCLI(config, logger, console).run(args)

    except UtaSignError as e:
        console.print(f"[bold red]Error:[/bold red] {e.user_message}")
        return 1

    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user.[/yellow]")
        return 130


if __name__ == "__main__":
    sys.exit(main())
