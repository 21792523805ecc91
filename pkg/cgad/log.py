# log.py

from __future__ import annotations

import datetime
import logging
from pathlib import Path

FORMAT = "%(asctime)s [%(levelname)s] %(message)s"


def setup_logging(out_dir: Path, command: str, verbose: bool = False) -> Path:
    """Dated log file under <out_dir>/logs plus console output. Returns the log path."""
    log_dir = Path(out_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    logfile = log_dir / f"cgad_{datetime.date.today()}.txt"
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=FORMAT,
        handlers=[
            logging.FileHandler(logfile, encoding="utf-8"),
            logging.StreamHandler()
        ],
        force=True,
    )
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.info("------------- cgad %s -------------", command)
    return logfile
