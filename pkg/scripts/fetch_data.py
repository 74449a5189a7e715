#!/usr/bin/env python3
"""Fetch the benchmark datasets into ./data.

MovieLens-100K is extracted from the RecBole wheel on PyPI, which ships the
full 100 000-rating file as an example dataset. It is rewritten in the
classic ``u.data`` layout (tab separated, no header).

FilmTrust has no PyPI-hosted copy. Place its ``ratings.txt`` (space
separated ``user item rating``) at ``data/filmtrust/ratings.txt`` by hand.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import urllib.request
import zipfile
from pathlib import Path

RECBOLE_WHEEL = "recbole-1.2.0-py3-none-any.whl"
INTER_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def _wheel_url(package: str, filename: str) -> str:
    with urllib.request.urlopen(f"https://pypi.org/pypi/{package}/json", timeout=60) as fh:
        meta = json.load(fh)
    for files in meta["releases"].values():
        for f in files:
            if f["filename"] == filename:
                return f["url"]
    raise SystemExit(f"{filename} not listed on PyPI")


def fetch_ml100k(dest: Path, wheel: Path | None = None) -> Path:
    out = dest / "ml-100k" / "u.data"
    if out.exists():
        print(f"{out} already present")
        return out
    if wheel is not None:
        blob = wheel.read_bytes()
    else:
        url = _wheel_url("recbole", RECBOLE_WHEEL)
        print(f"downloading {url}")
        with urllib.request.urlopen(url, timeout=600) as fh:
            blob = fh.read()
    lines = zipfile.ZipFile(io.BytesIO(blob)).read(INTER_MEMBER).decode().splitlines()
    # first line is a typed header, e.g. "user_id:token\titem_id:token..."
    rows = [ln for ln in lines[1:] if ln.strip()]
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} ratings to {out}")
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    parser.add_argument("--wheel", type=Path, help="use an already downloaded RecBole wheel")
    args = parser.parse_args(argv)
    fetch_ml100k(args.dest, args.wheel)
    ft = args.dest / "filmtrust" / "ratings.txt"
    if not ft.exists():
        print(f"FilmTrust not found; place ratings.txt at {ft}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
