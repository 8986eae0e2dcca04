"""Command line entry point: ``coolopt run | verify | export | schema``.

Exit codes: 0 success, 1 verification checks failed, 2 configuration error,
3 solver failure (including aborted runs), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import MODES, RunConfig, config_schema
from .errors import ArtifactError, ConfigError, MeshError, SolverError
from .export import load_snapshot, write_csv, write_vtk
from .workflow import export_outputs, load_manifest, run

log = logging.getLogger("coolopt")

VERIFY_GROUPS = {
    "formulas": ("formulas",),
    "mms": ("mms",),
    "limits": ("limits",),
    "conservation": ("conservation",),
    "gradients": ("gradients",),
    "mma": ("mma",),
    "geometry": ("geometry",),
    "trends": ("trends",),
    "determinism": ("determinism",),
    "all": ("formulas", "mms", "limits", "conservation", "gradients", "mma", "geometry", "trends",
            "determinism"),
}


def _parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    changes = dict(_parse_override(s) for s in args.set or [])
    if args.mode:
        changes["mode"] = args.mode
    if args.p_in is not None:
        changes["p_in"] = args.p_in
    try:
        return config.updated(**changes) if changes else config
    except KeyError as exc:
        raise ConfigError(f"unknown configuration key {exc}") from exc


def cmd_run(args) -> int:
    config = _load_config(args)
    out = Path(args.out or f"run_{config.mode}_{config.p_in:g}Pa")
    result = run(config)
    export_outputs(result, out)
    print(f"{result.status}: final J = {result.final_J:.4f} K, outputs in {out}")
    if result.status != "completed":
        print(result.message, file=sys.stderr)
        return 3
    return 0


def cmd_verify(args) -> int:
    from . import verification as v

    out = Path(args.out) if args.out else None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create {out}: {exc}") from exc
    report = v.VerificationReport(f"coolopt verify {args.suite}")
    for name in VERIFY_GROUPS[args.suite]:
        fn = v.SUITES[name]
        if name == "gradients":
            part = fn(out_dir=out)
        elif name == "trends":
            part = fn(out_dir=out / "trends" if out else None)
        else:
            part = fn()
        print(part.to_text(), end="\n\n")
        report.extend(part)
    print("\n".join(report.criterion_lines()))
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    if out is not None:
        try:
            (out / f"verify_{args.suite}.json").write_text(report.to_json() + "\n")
        except OSError as exc:
            raise ArtifactError(f"cannot write report to {out}: {exc}") from exc
    return 0 if report.passed else 1


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    manifest = load_manifest(run_dir)
    config = RunConfig.from_dict(manifest["config"])
    mesh = config.mesh()
    out = Path(args.out) if args.out else run_dir / f"export_{args.format}"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(f"cannot create {out}: {exc}") from exc
    written = 0
    for name in manifest.get("snapshots", []):
        snap = load_snapshot(run_dir / "snapshots" / f"{name}.npz")
        if args.format == "vtk":
            write_vtk(out / f"{name}.vtk", mesh, snap)
            written += 1
        else:
            written += len(write_csv(out, mesh, snap))
    print(f"wrote {written} {args.format} file(s) to {out}")
    return 0


def cmd_schema(args) -> int:
    text = json.dumps(config_schema(), indent=2) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise ArtifactError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coolopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"coolopt {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one optimization and write its artifacts")
    p.add_argument("--config", help="JSON configuration file (defaults when omitted)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--p-in", type=float, dest="p_in", help="inlet pressure in Pa")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set domain.nx=60 (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run a verification battery")
    p.add_argument("suite", choices=sorted(VERIFY_GROUPS))
    p.add_argument("--out", help="directory for the JSON report and tables")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="regenerate field files from a run's snapshots")
    p.add_argument("--run", required=True, help="run directory holding manifest.json")
    p.add_argument("--format", choices=("vtk", "csv"), required=True)
    p.add_argument("--out", help="target directory (default: <run>/export_<format>)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("schema", help="print the configuration JSON schema")
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ArtifactError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
