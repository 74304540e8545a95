"""
denguecast - Main Application
District-level probabilistic dengue forecasting from the command line
"""

import sys

from dotenv import load_dotenv

from interfaces.cli.cli_handler import CliInterface
from utils.logger import setup_logger

# Load environment variables
load_dotenv()

logger = setup_logger("denguecast_main")


def main(argv=None) -> int:
    return CliInterface().run(argv)


if __name__ == "__main__":
    logger.info("Starting denguecast...")
    sys.exit(main())
