#!/usr/bin/env python3
"""Fetch the desk-scale corpora used by the acceptance suite.

Both datasets are pulled out of wheels on the Python package index, which is
the only network source the build sandbox can reach:

  * WikiText-2 (raw) from the ``nlpia2`` wheel  -> data/wikitext-2/wiki.{train,valid,test}.raw
  * GeoNames cities1000 from ``geonamescache``  -> data/us_cities.csv (US rows only)

Usage: python3 tools/fetch_data.py [--out data] [--wheels DIR]
"""

import argparse
import csv
import glob
import gzip
import json
import pathlib
import subprocess
import sys
import tempfile
import time
import zipfile

WIKITEXT_WHEEL = "nlpia2==0.0.42"
WIKITEXT_PREFIX = "nlpia2/ch08/rnn_word/data/wikitext-2/"
CITIES_WHEEL = "geonamescache==3.0.2"
CITIES_MEMBER = "geonamescache/data/cities1000.json"
ATTEMPTS = 4


def download_wheel(spec: str, dest: pathlib.Path, cache: list) -> zipfile.ZipFile:
    name = spec.split("==")[0]
    for directory in cache:
        wheels = glob.glob(str(pathlib.Path(directory) / f"{name}-*.whl"))
        if wheels:
            return zipfile.ZipFile(wheels[0])
    for attempt in range(ATTEMPTS):
        result = subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "300",
             "-d", str(dest), spec],
            stdout=subprocess.DEVNULL)
        wheels = glob.glob(str(dest / f"{name}-*.whl"))
        if result.returncode == 0 and wheels:
            return zipfile.ZipFile(wheels[0])
        time.sleep(5 * (attempt + 1))
    raise SystemExit(f"could not download {spec}")


def fetch_wikitext(out: pathlib.Path, tmp: pathlib.Path, cache: list) -> None:
    target = out / "wikitext-2"
    target.mkdir(parents=True, exist_ok=True)
    wheel = download_wheel(WIKITEXT_WHEEL, tmp, cache)
    for split in ("train", "valid", "test"):
        raw = gzip.decompress(wheel.read(f"{WIKITEXT_PREFIX}{split}.raw.gz"))
        (target / f"wiki.{split}.raw").write_bytes(raw)
        print(f"wrote {target / f'wiki.{split}.raw'} ({len(raw)} bytes)")


def fetch_cities(out: pathlib.Path, tmp: pathlib.Path, cache: list) -> None:
    wheel = download_wheel(CITIES_WHEEL, tmp, cache)
    cities = json.loads(wheel.read(CITIES_MEMBER))
    rows = [c for c in cities.values() if c["countrycode"] == "US" and c["population"] > 0]
    rows.sort(key=lambda c: (-c["population"], c["name"], c["geonameid"]))
    path = out / "us_cities.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "latitude", "longitude", "population"])
        for c in rows:
            writer.writerow([f"{c['name']}, {c['admin1code']}", c["latitude"],
                             c["longitude"], c["population"]])
    print(f"wrote {path} ({len(rows)} cities)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("--wheels", action="append", default=[],
                        help="directory holding already-downloaded wheels (repeatable)")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        fetch_wikitext(out, pathlib.Path(tmp), args.wheels)
        fetch_cities(out, pathlib.Path(tmp), args.wheels)


if __name__ == "__main__":
    main()
