"""Command-line interface"""
from .cli_handler import CliInterface

__all__ = ["CliInterface"]
