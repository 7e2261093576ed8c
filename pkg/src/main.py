from __future__ import annotations

import logging
import sys
from collections.abc import Sequence

from src.domain.errors import ConfigError, PartSegError
from src.infrastructure.cli.commands import build_parser

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``partseg`` command.

    Exit codes:
    - 0: success
    - 1: runtime failure (dataset, checkpoint, non-finite loss, failed gradient check)
    - 2: invalid configuration or usage; the offending key is printed
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (PartSegError, OSError) as exc:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
