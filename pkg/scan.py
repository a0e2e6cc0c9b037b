#!/usr/bin/env python3
"""
hexmap entry point
==================

Randomized, stateless IPv4/IPv6 scanner. Live scans need CAP_NET_RAW;
``--dry-run`` builds the probes and writes the frames instead.

Usage:
    python scan.py -6 2001:db8::/32-64 -M icmp_echo --dry-run -o frames.jsonl -O jsonl
    sudo python scan.py -4 192.168.0.1/16-20 -p 80,443 -M tcp_syn -r 1000

Run ``python scan.py --help`` or ``python scan.py --manpage`` for all flags.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from hexmap.cli import main

if __name__ == "__main__":
    sys.exit(main())
