"""combsync command line.

Exit codes: 0 success, 1 invalid scenario or inputs, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import noise, optics
from .sim import SCENARIO_DIR, Scenario, ScenarioError, jitter_report, run_scenario

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

DEFAULT_FILTERS_HZ = (25e9, 50e9, 100e9, 200e9)
DEFAULT_LENGTHS_KM = (0.0, 0.08, 1.0, 2.0, 5.0, 13.0, 13.08, 20.0)


class InputError(Exception):
    pass


def resolve_scenario(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    for cand in (SCENARIO_DIR / ref, SCENARIO_DIR / f"{ref}.json"):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"scenario {ref!r} not found")


def load_scenario(ref: str, seed: int | None = None) -> Scenario:
    s = Scenario.load(resolve_scenario(ref))
    return s if seed is None else replace(s, seed=seed)


def _emit(rows: list[dict], fmt: str, out=None) -> None:
    fh = out or sys.stdout
    if fmt == "json":
        json.dump(rows, fh, indent=2)
        fh.write("\n")
        return
    if not rows:
        return
    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def cmd_run(args) -> int:
    ref = Path(args.scenario)
    batch = ref.is_dir()
    refs = sorted(ref.glob("*.json")) if batch else [args.scenario]
    if batch and not refs:
        raise InputError(f"no scenario files in {ref}")
    out = Path(args.out)
    for r in refs:
        s = load_scenario(str(r), args.seed)
        report = run_scenario(s)
        dest = out / Path(r).stem if batch else out
        report.write(dest)
        print(report.summary_line())
        if args.format == "json":
            print(json.dumps(report.metrics(), indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    s.validate()
    print(f"ok scenario={s.name} config_hash={s.config_hash()}")
    return EXIT_OK


def cmd_presets(args) -> int:
    names = noise.available_presets()
    if not names:
        raise InputError(f"no noise presets in {noise.preset_dir()}")
    rows = []
    for n in names:
        p = noise.load_preset(n)
        rows.append(
            {
                "name": n,
                "carrier_hz": p.carrier_frequency,
                "f_min_hz": p.f_min,
                "f_max_hz": p.f_max,
                "segments": len(p.segments),
            }
        )
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            p.save(Path(args.out) / f"{n}.json")
    _emit(rows, args.format)
    return EXIT_OK


def cmd_jitter(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    try:
        presets = noise.load_presets(list(s.noise_presets))
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    if not presets:
        raise InputError("no noise presets selected")
    table = jitter_report(presets, s)
    rows = [
        {
            "name": n,
            "carrier_hz": f.carrier_frequency,
            "f_low_hz": f.integration_band[0],
            "f_high_hz": f.integration_band[1],
            "rms_jitter_fs": round(f.rms_jitter * 1e15, 4),
        }
        for n, f in table.figures.items()
    ]
    _emit(rows, args.format)
    print(
        f"# carrier k={table.carrier_harmonic} amplitude={table.carrier_amplitude:.4f} "
        f"survives={table.carrier_survives}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_fading_table(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    filters = args.filters or DEFAULT_FILTERS_HZ
    lengths = args.lengths or DEFAULT_LENGTHS_KM
    rows = optics.fading_table(s.comb, filters, lengths, s.pd, s.trunk.dispersion)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        ext = "json" if args.format == "json" else "csv"
        with open(Path(args.out) / f"fading_table.{ext}", "w", newline="") as fh:
            _emit(rows, args.format, fh)
    else:
        _emit(rows, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="default", help="scenario JSON path or bundled name")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--format", choices=("json", "csv"), default="csv")

    parser = argparse.ArgumentParser(prog="combsync", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run a scenario and write reports")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", parents=[common], help="check a scenario without writing")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("presets", parents=[common], help="list or export noise presets")
    p.set_defaults(func=cmd_presets)
    p = sub.add_parser("jitter", parents=[common], help="integrated jitter of each preset")
    p.set_defaults(func=cmd_jitter)
    p = sub.add_parser("fading-table", parents=[common], help="RF harmonic fading vs filter/length")
    p.add_argument("--filters", type=float, nargs="+", help="OBPF bandwidths, Hz")
    p.add_argument("--lengths", type=float, nargs="+", help="fiber lengths, km")
    p.set_defaults(func=cmd_fading_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "run" and args.out is None:
        args.out = "combsync_out"
    try:
        return args.func(args)
    except (ScenarioError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
