#!/usr/bin/env python3
"""Download the real cohorts into data/ when the network allows.

Converts each source file into the header-carrying CSV layout the schemas in
fairgate.datasets expect:

  data/cleveland.csv   UCI Heart Disease (Cleveland), target binarized num>0
  data/statlog.csv     UCI Statlog (Heart), label 1/2 -> 0/1
  data/kaggle_cardio.csv  Kaggle cardiovascular cohort (needs a manual
                          download of cardio_train.csv next to this script;
                          the platform requires authentication)

Without these files the toolkit falls back to its seeded replica cohorts, so
everything keeps working offline.
"""

import csv
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

CLEVELAND_URL = "https://archive.ics.uci.edu/static/public/45/heart+disease.zip"
STATLOG_URL = "https://archive.ics.uci.edu/static/public/145/statlog+heart.zip"

HEART_COLUMNS = ["age", "sex", "cp", "trestbps", "chol", "fbs", "restecg",
                 "thalach", "exang", "oldpeak", "slope", "ca", "thal", "target"]


def fetch(url: str) -> bytes:
    print(f"downloading {url} ...")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def convert_cleveland(raw: str, out: Path) -> None:
    rows = []
    for line in raw.strip().splitlines():
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 14:
            continue
        target = "1" if float(cells[13]) > 0 else "0"
        cells = ["" if c == "?" else c for c in cells[:13]] + [target]
        # categorical codes arrive as "3.0"; normalize to bare integers
        for idx in (2, 6, 10, 12):
            if cells[idx]:
                cells[idx] = str(int(float(cells[idx])))
        rows.append(cells)
    _write(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")


def convert_statlog(raw: str, out: Path) -> None:
    rows = []
    for line in raw.strip().splitlines():
        cells = line.split()
        if len(cells) != 14:
            continue
        target = "1" if float(cells[13]) == 2 else "0"
        cells = cells[:13] + [target]
        for idx in (2, 6, 10, 12):
            cells[idx] = str(int(float(cells[idx])))
        rows.append(cells)
    _write(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")


def convert_kaggle(src: Path, out: Path) -> None:
    header = ["age", "gender", "height", "weight", "ap_hi", "ap_lo",
              "cholesterol", "gluc", "smoke", "alco", "active", "cardio"]
    rows = []
    with src.open(encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=";")
        for rec in reader:
            rows.append([
                f"{float(rec['age']) / 365.25:.2f}",
                "1" if rec["gender"] == "2" else "0",  # 2 = male in the source
                rec["height"], rec["weight"], rec["ap_hi"], rec["ap_lo"],
                rec["cholesterol"], rec["gluc"], rec["smoke"], rec["alco"],
                rec["active"], rec["cardio"],
            ])
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")


def _write(out: Path, rows: list[list[str]]) -> None:
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEART_COLUMNS)
        writer.writerows(rows)


def main() -> int:
    DATA_DIR.mkdir(exist_ok=True)
    failures = []
    try:
        blob = fetch(CLEVELAND_URL)
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            raw = zf.read("processed.cleveland.data").decode("utf-8")
        convert_cleveland(raw, DATA_DIR / "cleveland.csv")
    except Exception as exc:  # noqa: BLE001 - report and continue
        failures.append(f"cleveland: {exc}")
    try:
        blob = fetch(STATLOG_URL)
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            raw = zf.read("heart.dat").decode("utf-8")
        convert_statlog(raw, DATA_DIR / "statlog.csv")
    except Exception as exc:  # noqa: BLE001
        failures.append(f"statlog: {exc}")
    kaggle_src = Path(__file__).resolve().parent / "cardio_train.csv"
    if kaggle_src.exists():
        convert_kaggle(kaggle_src, DATA_DIR / "kaggle_cardio.csv")
    else:
        print("kaggle: place cardio_train.csv next to this script to convert it")
    if failures:
        print("some downloads failed (offline?); replicas will be used instead:")
        for f in failures:
            print(f"  - {f}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
