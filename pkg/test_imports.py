#!/usr/bin/env python3
"""
Test script to verify all imports work correctly.
Run this to diagnose import/dependency issues.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

print("Python version:", sys.version)
print("Python path:", sys.executable)
print()

print("Testing third-party imports...")
for name in ('gmpy2', 'cryptography', 'numpy', 'pandas', 'pytz', 'rich'):
    try:
        __import__(name)
        print(f"✓ {name}")
    except Exception as e:
        print(f"✗ {name}: {e}")

try:
    import scapy
    print("✓ scapy (optional)")
except Exception as e:
    print(f"- scapy not installed (optional, test oracle only): {e}")

print()
print("Testing hexmap modules...")
for module in ('address_space', 'number_theory', 'permutation', 'packets', 'validation',
               'filters', 'rate_control', 'probe_modules', 'transport', 'output',
               'engine', 'cli', 'sim'):
    try:
        __import__(f"hexmap.{module}")
        print(f"✓ {module}")
    except Exception as e:
        print(f"✗ {module}: {e}")
        import traceback
        traceback.print_exc()

print()
print("Testing a dry-run configuration...")
try:
    from hexmap.cli import build_config, build_parser

    args = build_parser().parse_args(['-6', '2001:db8::/32-48', '--dry-run', '-e', '1'])
    config, _, _ = build_config(args)
    print(f"✓ config built: {config.spec.describe()} seed={config.seed}")
except Exception as e:
    print(f"✗ config failed: {e}")
    import traceback
    traceback.print_exc()

print()
print("All tests completed!")
