#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Fetch the MUSK1 benchmark and write it as a bagcsv file.

The CSV (label, bag_id, 166 features per instance) ships inside the `mil`
wheel on PyPI. The wheel is downloaded with pip, the CSV extracted, and the
shape checked (476 instances, 92 bags, 47 positive) before writing.

    python3 tools/fetch_musk1.py data/musk1.csv
"""

import argparse
import csv
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mil/data/datasets/csv/musk1.csv"


def fetch(dest: pathlib.Path) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
             "-d", tmp, "mil==1.0.5"],
            check=True, stdout=subprocess.DEVNULL)
        wheels = list(pathlib.Path(tmp).glob("mil-*.whl"))
        if not wheels:
            sys.exit("fetch_musk1: pip did not produce a mil wheel")
        with zipfile.ZipFile(wheels[0]) as zf:
            text = zf.read(MEMBER).decode("utf-8")

    rows = list(csv.reader(io.StringIO(text)))
    bags = {}
    for r in rows:
        if len(r) != 168:
            sys.exit(f"fetch_musk1: expected 168 columns, got {len(r)}")
        bags.setdefault(r[1], int(float(r[0])))
    positives = sum(1 for v in bags.values() if v == 1)
    if (len(rows), len(bags), positives) != (476, 92, 47):
        sys.exit(f"fetch_musk1: unexpected shape {len(rows)} rows, {len(bags)} bags, "
                 f"{positives} positive")
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dest", type=pathlib.Path)
    ap.add_argument("--force", action="store_true", help="download even if dest exists")
    args = ap.parse_args()
    if args.dest.exists() and not args.force:
        return
    fetch(args.dest)


if __name__ == "__main__":
    main()
