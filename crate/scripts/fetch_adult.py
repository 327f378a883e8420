"""Build data/adult/adult.csv from the UCI Adult train and test splits.

The raw files are read from a local copy of the `responsibly` wheel, which
bundles both splits. Pass the wheel path, or let the script download it with
pip. Both splits are concatenated (48,842 rows), whitespace is trimmed and the
trailing period on test-split income labels is removed. "?" is kept as a
regular category.
"""

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
MEMBERS = ["responsibly/dataset/adult/adult.data", "responsibly/dataset/adult/adult.test"]


def find_wheel(arg):
    if arg:
        return Path(arg)
    tmp = Path(tempfile.mkdtemp())
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(tmp), "responsibly==0.1.2"],
        check=True,
    )
    return next(tmp.glob("responsibly-*.whl"))


def rows(wheel):
    with zipfile.ZipFile(wheel) as z:
        for member in MEMBERS:
            text = io.TextIOWrapper(z.open(member), encoding="utf-8")
            for line in text:
                line = line.strip()
                if not line or line.startswith("|"):
                    continue
                fields = [f.strip() for f in line.split(",")]
                if len(fields) != len(COLUMNS):
                    continue
                fields[-1] = fields[-1].rstrip(".")
                yield fields


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wheel", help="path to responsibly-0.1.2-py3-none-any.whl")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "adult" / "adult.csv"))
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id"] + COLUMNS)
        for n, r in enumerate(rows(find_wheel(args.wheel)), start=1):
            w.writerow([n] + r)
    print(f"wrote {n} rows to {out}")


if __name__ == "__main__":
    main()
