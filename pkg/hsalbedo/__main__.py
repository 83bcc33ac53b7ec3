"""Entry point for hsalbedo.

This module allows running the pipeline as a module:
    python -m hsalbedo simulate --out bundle

Or as an installed command:
    hsalbedo recover --manifest bundle/manifest.json --out out
"""

import sys
from typing import Optional

from hsalbedo.logging_config import get_logger

logger = get_logger(__name__)


def main(args: Optional[list[str]] = None) -> int:
    """Main entry point for hsalbedo.

    Args:
        args: Command-line arguments (defaults to sys.argv)

    Returns:
        Exit code: 0 for success, 2 for a reported failure, 1 for an
        unexpected error or an interrupted run
    """
    if args is None:
        args = sys.argv[1:]

    from hsalbedo.cli import run

    try:
        return run(args)
    except KeyboardInterrupt:
        # an interrupted stage may leave partial artifacts, so never report success
        logger.info("hsalbedo interrupted by user (Ctrl+C)")
        return 1


if __name__ == "__main__":
    sys.exit(main())
