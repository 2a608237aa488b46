"""Deterministic JSON reading/writing shared by plan and report files.

All JSON artifacts are written with sorted keys, two-space indent, and a
trailing LF, so identical documents serialize to identical bytes.
"""

from __future__ import annotations

import json


def write_json(doc, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
