"""Command-line entry point"""

import logging
import sys

from asyncopt.cli.commands import main
from asyncopt.core.config import settings

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)


if __name__ == "__main__":
    sys.exit(main())
