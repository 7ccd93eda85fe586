"""Regenerate the committed golden files.

    python3 tests/regen_golden.py

Only rerun this after an intentional change to serialization, the simulator
or the report format, and review the diff before committing.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
sys.path.insert(0, str(HERE))


def cli(*args: str) -> str:
    return subprocess.run(
        [sys.executable, "-m", "utxotangle", *args], check=True, capture_output=True, text=True
    ).stdout


def main() -> None:
    from test_ledger import golden_transactions

    GOLDEN.mkdir(exist_ok=True)
    ids = {name: tx.id.hex() for name, tx in golden_transactions()}
    (GOLDEN / "txids.json").write_text(json.dumps(ids, indent=2, sort_keys=True) + "\n")

    qs = GOLDEN / "quickstart"
    if qs.exists():
        shutil.rmtree(qs)
    cli("run", "--scenario", "quickstart", "--seed", "42", "--out", str(qs))
    report = cli("analyze", str(qs), "--theta", "2/3")
    (qs / "report.txt").write_text(report)
    for name in ("fig-branches", "coverage-basic"):
        (GOLDEN / f"inspect_{name}.txt").write_text(cli("inspect", name))
    print(f"golden files written under {GOLDEN}")


if __name__ == "__main__":
    main()
