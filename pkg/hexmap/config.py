"""
Defaults, environment variables and logging setup.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

ENV_BLOCKLIST = 'HEXMAP_BLOCKLIST'
ENV_LOG_LEVEL = 'HEXMAP_LOG_LEVEL'

DEFAULT_COOLDOWN_SECS = 8
DEFAULT_TTL = 64
DEFAULT_BATCH = 64
DEFAULT_SENDER_THREADS = 1
DEFAULT_RATE_PPS = 10_000

# Source ports are ephemeral_base + (token bits mod ephemeral_range).
EPHEMERAL_BASE = 32768
EPHEMERAL_RANGE = 32768

RECEIVE_POLL_SECS = 0.01
PROGRESS_INTERVAL_SECS = 1.0
CSV_FLUSH_ROWS = 1024

# Ethernet preamble + inter-frame gap + FCS, per frame on the wire.
ETHERNET_WIRE_OVERHEAD = 24

# RFC 5737 / RFC 3849 documentation addresses used when nothing is configured.
DEFAULT_SOURCE_V4 = '192.0.2.1'
DEFAULT_SOURCE_V6 = '2001:db8::1'

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def default_blocklist_path() -> Optional[Path]:
    """Blocklist named by HEXMAP_BLOCKLIST, if set."""
    value = os.environ.get(ENV_BLOCKLIST, '').strip()
    return Path(value) if value else None


def configure_logging(verbosity: int = 0):
    """
    Configure root logging on stderr.

    Args:
        verbosity: -1 quiet (ERROR), 0 WARNING, 1 INFO, 2+ DEBUG.
            HEXMAP_LOG_LEVEL overrides it when set.
    """
    levels = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}
    level = levels.get(verbosity, logging.DEBUG if verbosity > 1 else logging.ERROR)
    override = os.environ.get(ENV_LOG_LEVEL, '').strip().upper()
    if override:
        level = getattr(logging, override, level)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
