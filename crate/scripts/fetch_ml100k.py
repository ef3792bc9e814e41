#!/usr/bin/env python3
"""Rebuild the MovieLens-100K raw files (u.data, u.item, u.user).

The GroupLens download host is not always reachable, so this script pulls the
RecBole wheel from the package index (it bundles ml-100k as tab-separated
"atomic" files) and writes the three files in the original MovieLens layout:

  u.data  user \t item \t rating \t timestamp   (original line order)
  u.item  id|title|release_date|video_release_date|url|19 genre flags (Latin-1)
  u.user  id|age|gender|occupation|zip

The release_date column is left empty; the loader recovers the year from the
"(YYYY)" title suffix. Pass --wheel to use an already downloaded wheel.
"""

import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]
PREFIX = "recbole/dataset_example/ml-100k/"


def fetch_wheel(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
         "-d", str(dest), "recbole==1.2.1"],
        check=True,
    )
    return next(dest.glob("recbole-*.whl"))


def rows(zf: zipfile.ZipFile, name: str):
    text = zf.read(PREFIX + name).decode("utf-8")
    lines = text.splitlines()
    for line in lines[1:]:
        if line:
            yield line.split("\t")


def title_with_year(title: str, year: str) -> str:
    if title == "unkonwn":
        return "unknown"
    if year == "V":
        # "Land Before Time III ... (1995) (V)" lost its video marker
        return f"{title} (V)"
    return f"{title} ({year})"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/ml-100k")
    ap.add_argument("--wheel")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = pathlib.Path(args.wheel) if args.wheel else fetch_wheel(pathlib.Path(tmp))
        zf = zipfile.ZipFile(wheel)

        data = io.StringIO()
        for user, item, rating, ts in rows(zf, "ml-100k.inter"):
            data.write(f"{user}\t{item}\t{int(float(rating))}\t{int(float(ts))}\n")
        (out / "u.data").write_text(data.getvalue(), encoding="ascii")

        items = io.StringIO()
        for item_id, title, year, classes in rows(zf, "ml-100k.item"):
            tags = set(classes.split(" "))
            unknown = set(tags) - set(GENRES)
            if unknown:
                raise SystemExit(f"item {item_id}: unexpected genre tags {unknown}")
            flags = "|".join("1" if g in tags else "0" for g in GENRES)
            items.write(f"{item_id}|{title_with_year(title, year)}||||{flags}\n")
        (out / "u.item").write_bytes(items.getvalue().encode("latin-1"))

        users = io.StringIO()
        for user_id, age, gender, occupation, zip_code in rows(zf, "ml-100k.user"):
            users.write(f"{user_id}|{age}|{gender}|{occupation}|{zip_code}\n")
        (out / "u.user").write_text(users.getvalue(), encoding="ascii")

    print(f"wrote {out}/u.data, u.item, u.user")
    return 0


if __name__ == "__main__":
    sys.exit(main())
