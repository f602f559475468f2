"""Reports compared byte for byte against checked-in files.

Set SBREDUCE_UPDATE_GOLDEN=1 to rewrite the files after an intended change.
"""

from __future__ import annotations

import contextlib
import io
import os
from pathlib import Path

import pytest

from helpers import CORPUS
from sbreduce.cli import main

GOLDEN = Path(__file__).parent / "golden"

CASES = {
    "sb_naive.check-sc": ["check-sc", "sb_naive"],
    "sb_naive.outcomes-vm": ["outcomes", "sb_naive", "--machine", "vm"],
    "mp_ownership.all": ["all", "mp_ownership"],
    "sb_cas.check-safety": ["check-safety", "sb_cas"],
}


@pytest.mark.parametrize("case", sorted(CASES))
def test_report_matches_golden_file(tmp_path, case):
    cmd, name, *rest = CASES[case]
    out = tmp_path / "report.json"
    with contextlib.redirect_stdout(io.StringIO()):
        main([cmd, str(CORPUS / f"{name}.litmus"), *rest, "--json", str(out)])
    golden = GOLDEN / f"{case}.json"
    if os.environ.get("SBREDUCE_UPDATE_GOLDEN"):
        GOLDEN.mkdir(exist_ok=True)
        golden.write_bytes(out.read_bytes())
    assert out.read_bytes() == golden.read_bytes()
