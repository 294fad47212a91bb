#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Extract the desk-scale evaluation corpus: 32 four-voice Palestrina mass
movements in **kern from the music21 9.9.2 wheel. The files keep their
upstream license and are never checked in."""

import argparse
import pathlib
import subprocess
import sys
import tempfile
import zipfile

VERSION = "9.9.2"
FILES = """
Agnus_03 Agnus_I_00 Agnus_I_20 Agnus_I_64 Benedictus_13_a Benedictus_20_b Benedictus_32_a
Benedictus_41_a Benedictus_52_a Benedictus_71_a Benedictus_78 Benedictus_85_a Credo_02_c
Credo_16_b Credo_31_g Credo_55_c Credo_66_c Credo_70_f Credo_87_b Gloria_14_d Gloria_69_d
Kyrie_03_b Kyrie_06_c Kyrie_29 Kyrie_38 Kyrie_57_b Kyrie_64_b Kyrie_81_b Kyrie_98_b
Sanctus_05_a Sanctus_15_c Sanctus_26_b
""".split()


def find_wheel(explicit):
    if explicit:
        return pathlib.Path(explicit)
    tmp = pathlib.Path(tempfile.mkdtemp(prefix="music21_"))
    subprocess.run(
        [sys.executable, "-m", "pip", "download", f"music21=={VERSION}", "--no-deps", "--only-binary=:all:",
         "-q", "-d", str(tmp)],
        check=True,
    )
    wheels = sorted(tmp.glob("music21-*.whl"))
    if not wheels:
        raise SystemExit("pip did not produce a music21 wheel")
    return wheels[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dest", help="output directory")
    ap.add_argument("--wheel", help="use this music21 wheel instead of downloading one")
    args = ap.parse_args()

    dest = pathlib.Path(args.dest)
    if all((dest / f"{name}.krn").exists() for name in FILES):
        print(f"desk corpus already present in {dest}")
        return
    dest.mkdir(parents=True, exist_ok=True)
    wheel = find_wheel(args.wheel)
    with zipfile.ZipFile(wheel) as z:
        for name in FILES:
            data = z.read(f"music21/corpus/palestrina/{name}.krn")
            (dest / f"{name}.krn").write_bytes(data)
    print(f"extracted {len(FILES)} files from {wheel.name} into {dest}")


if __name__ == "__main__":
    main()
