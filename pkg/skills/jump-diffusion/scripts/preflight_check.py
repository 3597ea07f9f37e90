#!/usr/bin/env python3
"""
Environment check for the jump-diffusion toolkit.

Run once on a new machine, before cli.py. Each check returns (passed, message);
a failed check prints an [ERROR] line and makes the script exit 1.

Usage:
    python preflight_check.py           # All checks
    python preflight_check.py --quiet   # Failures only
"""

import argparse
import importlib.util
import platform
import sys
from pathlib import Path

# Windows compatibility: ensure local imports work
sys.path.insert(0, str(Path(__file__).parent))

from config import ENV_VAR, get_data_dir

REQUIRED = ['numpy', 'scipy']
MIN_PYTHON = (3, 10)
MIN_NUMPY = (1, 22)
# trust-exact and the maxiter/disp arguments of optimize.bisect
MIN_SCIPY = (1, 8)


def _version_tuple(text):
    parts = []
    for piece in text.split('.')[:2]:
        digits = ''.join(ch for ch in piece if ch.isdigit())
        parts.append(int(digits or 0))
    return tuple(parts)


def check_python():
    """Interpreter version; dataclasses and argparse are used everywhere."""
    if sys.version_info[:2] < MIN_PYTHON:
        found = f"{sys.version_info.major}.{sys.version_info.minor}"
        return False, f"Python {found} (need {MIN_PYTHON[0]}.{MIN_PYTHON[1]}+)"
    absent = [m for m in ('dataclasses', 'argparse', 'csv') if importlib.util.find_spec(m) is None]
    if absent:
        return False, f"Missing core module: {absent[0]}"
    return True, f"Python {platform.python_version()} OK"


def check_venv():
    """Informational only: the toolkit also runs on a system interpreter."""
    if sys.prefix != getattr(sys, 'base_prefix', sys.prefix):
        return True, f"Virtual env active: {Path(sys.prefix).name}"
    return True, "No virtual environment active (system interpreter)"


def check_dependencies():
    """numpy carries the grids and Monte Carlo; scipy the MEMM solvers."""
    missing = [pkg for pkg in REQUIRED if importlib.util.find_spec(pkg) is None]
    if missing:
        return False, f"Missing required packages: {', '.join(missing)}"

    import numpy
    if _version_tuple(numpy.__version__) < MIN_NUMPY:
        return False, f"numpy {numpy.__version__} (need {MIN_NUMPY[0]}.{MIN_NUMPY[1]}+)"

    import scipy
    if _version_tuple(scipy.__version__) < MIN_SCIPY:
        return False, f"scipy {scipy.__version__} (need {MIN_SCIPY[0]}.{MIN_SCIPY[1]}+)"
    return True, f"numpy {numpy.__version__}, scipy {scipy.__version__} installed"


def check_philox():
    """
    Draw from two keyed Philox streams.

    Paths are reproducible only if a (seed, path_id) key always yields the same
    stream and distinct keys yield distinct ones.
    """
    if importlib.util.find_spec('numpy') is None:
        return False, "numpy not installed"
    import numpy as np

    def draw(key):
        return np.random.Generator(np.random.Philox(key=key)).standard_normal(4)

    first, again, other = draw(7), draw(7), draw(8)
    if not np.array_equal(first, again):
        return False, "same key gave different draws"
    if np.array_equal(first, other):
        return False, "different keys gave identical draws"
    return True, "keyed streams reproducible"


def check_data_dir():
    """Outputs go to the data directory; it must exist or be creatable."""
    data_dir = get_data_dir()
    try:
        data_dir.mkdir(parents=True, exist_ok=True)
    except PermissionError:
        return False, f"Cannot create data directory: {data_dir}"
    except OSError as e:
        return False, f"Data directory error: {e}"
    return True, f"Data dir: {data_dir} (override with {ENV_VAR})"


CHECKS = [
    ("Python", check_python),
    ("Virtual Env", check_venv),
    ("Dependencies", check_dependencies),
    ("Philox Streams", check_philox),
    ("Data Directory", check_data_dir),
]


def run_preflight(quiet=False):
    """Print one tagged line per check; True when none failed."""
    ruler = "=" * 50
    print(ruler)
    print("JUMP-DIFFUSION TOOLKIT - PREFLIGHT CHECK")
    print(f"Platform: {platform.system()} {platform.release()}")
    print(ruler)

    failures = 0
    for name, check in CHECKS:
        try:
            passed, message = check()
        except Exception as e:
            passed, message = False, f"Check failed: {type(e).__name__}: {e}"
        if not passed:
            failures += 1
            print(f"[ERROR] {name}: {message}")
        elif not quiet:
            print(f"[OK] {name}: {message}")

    print(ruler)
    if failures:
        print(f"{failures} check(s) failed. See references/troubleshooting.md")
    else:
        print("Environment ready. Next: python cli.py validate --config <run.json>")
    print(ruler)
    return failures == 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(
        description="Check the environment before running the jump-diffusion CLI"
    )
    parser.add_argument("--quiet", "-q", action="store_true", help="Print failures only")
    args = parser.parse_args()
    sys.exit(0 if run_preflight(quiet=args.quiet) else 1)
