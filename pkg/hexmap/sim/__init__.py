"""
Simulated Network
=================
In-process virtual network used to run complete scans in tests.

Submodules:
- harness: SimTransport, SendLog, harness_build, inject_forgeries
- rules: ResponderRule and the one-rule-per-line text format
"""

from .harness import SendLog, SendRecord, SimHarness, SimTransport, harness_build, inject_forgeries
from .rules import Behavior, ResponderRule, load_rules, parse_rules

__all__ = [
    'SendLog',
    'SendRecord',
    'SimHarness',
    'SimTransport',
    'harness_build',
    'inject_forgeries',
    'Behavior',
    'ResponderRule',
    'load_rules',
    'parse_rules',
]
