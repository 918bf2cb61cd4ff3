"""
Command-line surface for taro-lab
"""
from taro_lab.api.cli import COMMANDS, build_parser, run_command

__all__ = ["COMMANDS", "build_parser", "run_command"]
