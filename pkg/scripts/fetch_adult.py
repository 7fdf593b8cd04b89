"""Download the UCI Adult files and write a preprocess config next to them.

    python3 scripts/fetch_adult.py data/adult
    ppadmm preprocess --config data/adult/preprocess.json --out out/adult
"""

import argparse
import json
import shutil
import sys
import urllib.request
from importlib import resources
from pathlib import Path

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dest", type=Path)
    args = ap.parse_args(argv)
    args.dest.mkdir(parents=True, exist_ok=True)
    for name in ("adult.data", "adult.test"):
        target = args.dest / name
        if not target.exists():
            print(f"fetching {BASE + name}")
            with urllib.request.urlopen(BASE + name) as r, open(target, "wb") as fh:
                shutil.copyfileobj(r, fh)
    # one combined table; adult.test starts with a "|1x3 Cross validator" line, which the reader skips
    combined = args.dest / "adult.all.csv"
    with open(combined, "w") as out:
        for name in ("adult.data", "adult.test"):
            out.write((args.dest / name).read_text())
    schema = resources.files("ppadmm") / "resources" / "adult_schema.json"
    (args.dest / "adult_schema.json").write_text(schema.read_text())
    (args.dest / "preprocess.json").write_text(json.dumps(
        {"preprocess": {"input": "adult.all.csv", "schema": "adult_schema.json", "compare_reference": True}}, indent=2) + "\n")
    print(f"wrote {args.dest / 'preprocess.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
