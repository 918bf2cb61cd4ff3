"""
Entry point for the taro-lab command line
"""
import json
import logging
import sys
from typing import List, Optional

from taro_lab.api.cli import build_parser, run_command
from taro_lab.config import settings
from taro_lab.utils.error_handler import ErrorLogger, exit_code_for, report_for

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and map failures to exit codes

    Args:
        argv: Arguments without the program name (sys.argv[1:] when None)

    Returns:
        0 success, 2 config error, 3 data error, 4 numerical failure, 1 otherwise
    """
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except Exception as exc:
        code = exit_code_for(exc)
        ErrorLogger.log_error(
            exc,
            context={"command": args.command, "exit_code": code},
            severity="ERROR",
            exc_info=settings.DEBUG
        )
        print(json.dumps(report_for(exc), indent=2), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
