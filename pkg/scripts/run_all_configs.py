"""Run every TOML config under configs/ and print one status line per experiment.

Usage::

    python scripts/run_all_configs.py [--configs configs] [--out out]

Exit status is 0 when every run ends with the status its config expects:
configs whose name contains ``probe`` are falsification runs and must FAIL.
"""
import argparse
import sys
import time
from pathlib import Path

from wlaplab.cli import main as cli_main


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--configs", default="configs", help="directory of TOML configs")
    parser.add_argument("--out", default="out", help="root directory for reports")
    args = parser.parse_args(argv)

    unexpected = 0
    for path in sorted(Path(args.configs).glob("*.toml")):
        expect_fail = "probe" in path.stem
        command = "toric" if path.stem.startswith("toric") else "verify"
        t0 = time.perf_counter()
        code = cli_main([command, "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        ok = code == (1 if expect_fail else 0)
        unexpected += not ok
        print(f"{path.stem:<22} exit={code} expected={'FAIL' if expect_fail else 'PASS'} "
              f"{'ok' if ok else 'UNEXPECTED'} ({time.perf_counter() - t0:.1f}s)")
    return 1 if unexpected else 0


if __name__ == "__main__":
    sys.exit(main())
