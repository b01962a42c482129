#!/usr/bin/env python3
"""Run each subcommand of the fisherlens binary and validate its JSON output.

usage: check_schemas.py FISHERLENS SCHEMA_DIR WORK_DIR
"""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def load(path):
    with open(path) as f:
        return json.load(f)


def run(exe, *args, expect=0):
    proc = subprocess.run([exe, *map(str, args)], capture_output=True, text=True)
    if proc.returncode != expect:
        sys.exit(f"{' '.join(map(str, args))}: exit {proc.returncode}, "
                 f"expected {expect}\n{proc.stderr}")
    return proc


def main():
    exe, schema_dir, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schemas = {p.stem.split(".")[0]: load(p) for p in schema_dir.glob("*.schema.json")}
    for s in schemas.values():
        jsonschema.Draft202012Validator.check_schema(s)

    x = [min(i, 31 - i) + 1.0 for i in range(32)]
    problem = work / "problem.json"
    problem.write_text(json.dumps({
        "psf": {"kind": "gaussian", "sigma_psf": 1.5, "n": 32},
        "noise_cov": 1.0,
        "image": x,
        "true_object": x,
    }))

    checked = 0

    def check(name, doc):
        nonlocal checked
        jsonschema.validate(doc, schemas[name])
        checked += 1

    for method in ["lse", "truncated", "tikhonov", "tikhonov-nn", "quasiopt"]:
        out = work / f"restore_{method}"
        proc = run(exe, "restore", problem, "--method", method, "--out", out)
        check("restore", load(out / "restore.json"))
        check("restore", json.loads(proc.stdout))
    run(exe, "restore", problem, "--method", "wiener-oracle",
        "--i-have-the-true-object", "--out", work / "restore_oracle")
    check("restore", load(work / "restore_oracle" / "restore.json"))

    check("diagnose", json.loads(run(exe, "diagnose", problem, "--json").stdout))

    for case in ["fig2", "fig3"]:
        out = work / f"sim_{case}"
        run(exe, "simulate", "--case", case, "--trials", 3, "--seed", 5, "--out", out)
        check("report", load(out / "report.json"))
    out = work / "sim_custom"
    run(exe, "simulate", "--case", "custom", "--problem", problem, "--trials", 2,
        "--alpha-mode", "fixed", "--out", out)
    check("report", load(out / "report.json"))

    proc = run(exe, "restore", work / "missing.json", "--out", work / "x", expect=2)
    check("error", json.loads(proc.stderr))
    proc = run(exe, "restore", problem, "--method", "wiener-oracle",
               "--out", work / "x", expect=2)
    check("error", json.loads(proc.stderr))

    print(f"{checked} documents valid")


if __name__ == "__main__":
    main()
