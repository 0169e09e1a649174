"""Command line interface: ``wgmhd run`` and ``wgmhd check``.

Exit codes: 0 on success, 1 when a check or a mesh row failed (a JSON
failure summary is printed as the last line of stdout), 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checks import CHECKS, run_checks
from .forms import TAU_LENGTHS, PhysicalParams
from .verify import convergence_study, emit_report

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# run options: name -> (converter, default)
RUN_DEFAULTS = {
    "example": (int, 1),
    "k": (int, 1),
    "meshes": (None, "2,4,8,16"),
    "tol": (float, 1e-8),
    "condense": (None, "on"),
    "out": (str, None),
    "format": (str, "csv"),
    "Ha": (float, 1.0),
    "N": (float, 1.0),
    "Rm": (float, 1.0),
    "max_iter": (int, 100),
    "strategy": (str, "coupled"),
    "tau_length": (str, "area"),
}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in RUN_DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def parse_meshes(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        meshes = [int(s) for s in str(value).replace(" ", "").split(",") if s]
    except ValueError as exc:
        raise ConfigError(f"bad mesh list {value!r}") from exc
    if not meshes:
        raise ConfigError("empty mesh list")
    return meshes


def parse_switch(value) -> bool:
    v = str(value).strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {value!r}")


def resolve_run_options(args: argparse.Namespace) -> dict:
    """Merge defaults, then the config file, then explicit flags (flags win)."""
    merged = {k: d for k, (_, d) in RUN_DEFAULTS.items()}
    if args.config:
        merged.update(read_config(args.config))
    for key in RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    opts = {}
    for key, (conv, _) in RUN_DEFAULTS.items():
        value = merged[key]
        if conv is not None and value is not None:
            try:
                value = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        opts[key] = value
    opts["meshes"] = parse_meshes(opts["meshes"])
    opts["condense"] = parse_switch(opts["condense"])
    if opts["example"] not in (1, 2):
        raise ConfigError("example must be 1 or 2")
    if opts["k"] < 1:
        raise ConfigError("k must be a positive integer")
    if opts["format"] not in ("csv", "md"):
        raise ConfigError("format must be csv or md")
    if opts["tau_length"] not in TAU_LENGTHS:
        raise ConfigError(f"tau_length must be one of {TAU_LENGTHS}")
    return opts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgmhd", description="Weak Galerkin solver for steady 2D MHD.")
    p.add_argument("-v", "--verbose", action="store_true", help="log Oseen iterations")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence study on the manufactured examples")
    run.add_argument("--config", help="key=value file; explicit flags override it")
    run.add_argument("--example", type=int, choices=(1, 2))
    run.add_argument("--k", type=int)
    run.add_argument("--meshes", help="comma separated, e.g. 8,16,32,64")
    run.add_argument("--tol", type=float)
    run.add_argument("--condense", choices=("on", "off"))
    run.add_argument("--out", help="report path (stdout when omitted)")
    run.add_argument("--format", choices=("csv", "md"))
    run.add_argument("--Ha", type=float)
    run.add_argument("--N", type=float)
    run.add_argument("--Rm", type=float)
    run.add_argument("--max-iter", dest="max_iter", type=int)
    run.add_argument("--strategy", choices=("coupled", "decoupled"))
    run.add_argument("--tau-length", dest="tau_length", choices=TAU_LENGTHS)

    chk = sub.add_parser("check", help="run the invariant and property suites")
    chk.add_argument("--only", help=f"comma separated subset of: {', '.join(CHECKS)}")
    chk.add_argument("--json", action="store_true", help="print every result as JSON")
    return p


def _summary(status, failures, **extra) -> str:
    return json.dumps({"status": status, "failures": failures, **extra}, sort_keys=True)


def cmd_run(args) -> int:
    try:
        opts = resolve_run_options(args)
        params = PhysicalParams(Ha=opts["Ha"], N=opts["N"], Rm=opts["Rm"], k=opts["k"])
    except (ConfigError, ValueError) as exc:
        print(f"wgmhd run: {exc}", file=sys.stderr)
        return EXIT_USAGE

    def progress(row):
        state = row.failure or f"{row.iterations} iterations"
        print(f"n={row.n}: {state} ({row.seconds:.1f}s)", file=sys.stderr)

    try:
        table = convergence_study(opts["example"], opts["k"], opts["meshes"], params=params,
                                  progress=progress, tol=opts["tol"], condense=opts["condense"],
                                  max_iter=opts["max_iter"], strategy=opts["strategy"],
                                  tau_length=opts["tau_length"])
    except ValueError as exc:
        print(f"wgmhd run: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = emit_report(table, opts["format"], opts["out"])
    if opts["out"] is None:
        sys.stdout.write(text)
    failures = [{"n": r.n, "error": r.failure} for r in table.rows if r.failure]
    if failures:
        print(_summary("fail", failures, command="run"))
        return EXIT_FAIL
    return EXIT_OK


def cmd_check(args) -> int:
    names = [s for s in args.only.split(",") if s] if args.only else None
    try:
        results = run_checks(names)
    except ValueError as exc:
        print(f"wgmhd check: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        line = f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (tol {r.tolerance:.0e}) {r.detail}"
        print(line if not args.json else json.dumps(r.as_dict(), sort_keys=True))
    failures = [r.as_dict() for r in results if not r.passed]
    if failures:
        print(_summary("fail", failures, command="check"))
        return EXIT_FAIL
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return cmd_run(args) if args.command == "run" else cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
