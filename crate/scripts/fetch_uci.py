"""Write data/ionosphere.csv and data/sonar.csv (label in the last column, +1/-1).

The files are taken from the keel-ds wheel, which ships the UCI Ionosphere and
Sonar sets. Pass a wheel path to skip the download.
"""

import pathlib
import subprocess
import sys
import tempfile
import zipfile

SETS = {
    "ionosphere": {"g": "1", "b": "-1"},
    "sonar": {"M": "1", "R": "-1"},
}


def find_wheel(arg):
    if arg:
        return pathlib.Path(arg)
    tmp = pathlib.Path(tempfile.mkdtemp())
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(tmp), "keel-ds"],
        check=True,
    )
    return next(tmp.glob("keel_ds-*.whl"))


def main():
    wheel = find_wheel(sys.argv[1] if len(sys.argv) > 1 else None)
    out = pathlib.Path(__file__).resolve().parent.parent / "data"
    out.mkdir(exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        for name, labels in SETS.items():
            text = z.read(f"keel_ds/data/balanced/raw/{name}.dat").decode()
            rows = []
            for line in text.splitlines():
                fields = [f.strip() for f in line.split(",")]
                if len(fields) < 2:
                    continue
                rows.append(",".join(fields[:-1] + [labels[fields[-1]]]))
            (out / f"{name}.csv").write_text("\n".join(rows) + "\n")
            print(f"{name}: {len(rows)} rows, {len(rows[0].split(',')) - 1} features")


if __name__ == "__main__":
    main()
