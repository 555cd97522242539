"""CSV / JSON tables and run manifests."""
from __future__ import annotations

import csv
import json
import platform
import subprocess
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._version import __version__

FORMATS = ("csv", "json")


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv") -> Path:
    """Write ``rows`` to ``<path>.csv`` (one header line) or ``<path>.json`` (list of objects)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(path).with_suffix("." + fmt)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = [[_plain(v) for v in r] for r in rows]
    if fmt == "csv":
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    else:
        out.write_text(json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n")
    return out


def read_table(path) -> list[dict]:
    p = Path(path)
    if p.suffix == ".json":
        return json.loads(p.read_text())
    with open(p, newline="") as fh:
        return list(csv.DictReader(fh))


def git_describe(cwd=None) -> str:
    """``git describe --always --dirty`` of the source tree, or ``"unknown"``."""
    cwd = cwd or Path(__file__).resolve().parent
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=cwd,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def write_manifest(path, **content) -> Path:
    """JSON manifest with version info added; values must be JSON-serialisable."""
    body = {
        "package_version": __version__,
        "git_describe": git_describe(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    body.update(content)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(body, indent=2, sort_keys=True, default=_plain) + "\n")
    return out
