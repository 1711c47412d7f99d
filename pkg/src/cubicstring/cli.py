"""Command-line front end.

    cubicstring selftest    [--scope S] [--potential P] [--theta-phi F] [--l L]
    cubicstring spectrum    --potential P [--theta-phi F] [--h H] [--n-lo A] [--n-hi B] --out FILE.csv
    cubicstring reconstruct --theta-set F --theta-hat-set F --theta-h-set F --theta-hat-h-set F
                            [--config FILE] --out FILE.csv
    cubicstring plotdata    --kind {sfun,charfun,eigfun,roundtrip} [...] --out FILE.csv

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 validation failure.
Every command that writes ``X.csv`` also writes ``X.manifest.json`` with the
command line, the full configuration, input and output paths, the wall-clock
time and the library version.  CSV files hold a header row; complex numbers
are split into ``_re`` and ``_im`` columns.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import inverse, op_l0, op_lq, selftest
from .errors import CubicStringError, InvalidInputError, NumericError, ValidationError
from .gtrig import s_eval
from .potential import BUILTIN_POTENTIALS, Potential, builtin_potential

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def parse_potential(text: str, l: float) -> Potential:
    """``name`` or ``name:key=value,...`` for a builtin, otherwise a file of x, q rows.

    Files may separate columns by commas or whitespace; lines starting with
    ``#`` and a non-numeric header line are ignored.
    """
    name, _, rest = text.partition(":")
    if name in BUILTIN_POTENTIALS:
        params = {}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise InvalidInputError(f"potential parameter {item!r} is not key=value")
            try:
                params[key.strip()] = int(value) if key.strip() == "k" else float(value)
            except ValueError:
                raise InvalidInputError(f"potential parameter {item!r} is not numeric") from None
        try:
            return builtin_potential(name, l, **params)
        except TypeError as exc:
            raise InvalidInputError(f"bad parameters for potential {name!r}: {exc}") from None
    path = Path(text)
    if not path.is_file():
        raise InvalidInputError(f"{text!r} is neither a builtin potential {BUILTIN_POTENTIALS} nor a file")
    rows = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.replace(",", " ").split()
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if not rows and number == 1:
                continue
            raise InvalidInputError(f"{path}:{number}: cannot parse {line!r} as numbers") from None
        if len(values) != 2:
            raise InvalidInputError(f"{path}:{number}: expected two columns x, q, got {len(values)}")
        rows.append(values)
    if len(rows) < 4:
        raise InvalidInputError(f"{path}: need at least 4 samples, found {len(rows)}")
    data = np.array(rows)
    return Potential.from_samples(data[:, 0], data[:, 1], name=path.name)


def parse_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Flat ``key = value`` file (``#`` comments) plus ``key=value`` overrides."""
    values: dict[str, str] = {}
    lines = []
    if path:
        p = Path(path)
        if not p.is_file():
            raise InvalidInputError(f"config file {path!r} not found")
        lines += [(f"{path}:{i}", line) for i, line in enumerate(p.read_text().splitlines(), start=1)]
    lines += [("--set", item) for item in overrides or []]
    for where, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(f"{where}: expected key = value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def _theta(phi: float) -> complex:
    return complex(math.cos(2.0 * phi), math.sin(2.0 * phi))


def _split(name: str, value: complex) -> dict:
    return {f"{name}_re": repr(float(value.real)), f"{name}_im": repr(float(value.imag))}


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_manifest(out: Path, command: str, argv: list[str], config: dict, inputs: list[str],
                   outputs: list[Path], started: float) -> Path:
    manifest = out.with_name(out.stem + ".manifest.json")
    doc = {
        "command": command,
        "argv": argv,
        "config": config,
        "inputs": inputs,
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": time.perf_counter() - started,
        "version": __version__,
    }
    manifest.write_text(json.dumps(doc, indent=2, default=str))
    return manifest


def _potential_config(pot: Potential) -> dict:
    return {"name": pot.name, "l": pot.l, "params": pot.params}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_selftest(args, argv) -> int:
    pot = parse_potential(args.potential, args.l)
    rows = selftest.run(args.scope, pot, args.theta_phi)
    width = max(len(r.name) for r in rows)
    print(f"{'suite':6s}  {'check':{width}s}  {'max residual':>12s}  {'tolerance':>9s}  status")
    for r in rows:
        print(f"{r.suite:6s}  {r.name:{width}s}  {r.value:12.3e}  {r.tolerance:9.1e}  {r.status}"
              + (f"  ({r.note})" if r.note else ""))
    failed = [r for r in rows if r.failed]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks without failure")
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_spectrum(args, argv) -> int:
    started = time.perf_counter()
    if not args.out:
        raise UsageError("spectrum needs --out")
    pot = parse_potential(args.potential, args.l)
    theta = _theta(args.theta_phi)
    h = args.h or 0.0
    spectrum = op_lq.lq_real_zeros(pot, theta, args.n_lo, args.n_hi, h=h)
    free = op_lq.free_real_zeros(pot.l, theta, h, args.n_lo, args.n_hi)
    defect = np.abs(spectrum.zeros - free) * free**2
    out = Path(args.out)
    write_csv(out, ["n", "lambda_n", "lambda_n_cubed", "residual", "defect"],
              ([int(n), repr(float(lam)), repr(float(lam) ** 3), repr(float(res)), repr(float(d))]
               for n, lam, res, d in zip(spectrum.indices, spectrum.zeros, spectrum.residuals, defect)))
    data = inverse.SpectralSet(pot.l, theta, spectrum.a, spectrum.zeros, int(spectrum.indices[0]),
                               args.h if args.h else None, spectrum.b if args.h else None)
    doc = data.to_dict()
    doc["manifest"] = out.stem + ".manifest.json"
    set_path = out.with_suffix(".json")
    set_path.write_text(json.dumps(doc, indent=1))
    print(f"{'n':>6s}  {'lambda_n':>22s}  {'|lambda_n(q)-lambda_n(0)| lambda_n^2':>36s}")
    for n, lam, d in zip(spectrum.indices, spectrum.zeros, defect):
        print(f"{int(n):6d}  {lam:22.15g}  {d:36.6e}")
    config = {"potential": _potential_config(pot), "theta_phi": args.theta_phi, "h": h,
              "n_lo": args.n_lo, "n_hi": args.n_hi}
    write_manifest(out, "spectrum", argv, config, [args.potential], [out, set_path], started)
    return EXIT_OK


_ROLES = (("theta_set", "theta"), ("theta_hat_set", "theta_hat"),
          ("theta_h_set", "(theta, h)"), ("theta_hat_h_set", "(theta_hat, h)"))


def cmd_reconstruct(args, argv) -> int:
    started = time.perf_counter()
    missing = [role for attr, role in _ROLES if not getattr(args, attr)]
    if missing:
        raise UsageError(f"missing spectral data set for role(s): {', '.join(missing)}")
    if not args.out:
        raise UsageError("reconstruct needs --out")
    sets = []
    for attr, role in _ROLES:
        path = getattr(args, attr)
        if not Path(path).is_file():
            raise UsageError(f"spectral data set for role {role} not found: {path}")
        sets.append(inverse.SpectralSet.from_json(path))
    cfg = inverse.ReconstructionConfig.from_mapping(parse_config(args.config, args.set))
    out = Path(args.out)
    report_path = out.with_name(out.stem + ".report.json")
    inputs = [getattr(args, attr) for attr, _ in _ROLES] + ([args.config] if args.config else [])
    try:
        result = inverse.reconstruct_potential(sets, cfg)
    except inverse.ReconstructionError as exc:
        report = {"status": "failed", "failed_stage": exc.stage, "error": str(exc),
                  "manifest": out.stem + ".manifest.json", **exc.diagnostics}
        report_path.write_text(json.dumps(report, indent=2, default=str))
        write_manifest(out, "reconstruct", argv, cfg.to_dict(), inputs, [report_path], started)
        print(f"reconstruction failed at stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    result.to_csv(out)
    report = {"status": "ok", "manifest": out.stem + ".manifest.json", **result.diagnostics}
    report_path.write_text(json.dumps(report, indent=2, default=str))
    write_manifest(out, "reconstruct", argv, cfg.to_dict(), inputs, [out, report_path], started)
    return EXIT_OK


def _plot_sfun(args):
    x = np.linspace(0.0, 5.0, args.points)
    header = ["x"] + [f"s{p}_{part}" for p in range(3) for part in ("re", "im")]
    rows = []
    for xv in x:
        row = [repr(float(xv))]
        for p in range(3):
            v = complex(s_eval(p, float(xv)))
            row += [repr(v.real), repr(v.imag)]
        rows.append(row)
    return header, rows


def _plot_charfun(args, pot):
    lam = np.linspace(args.lam_min, args.lam_max, args.points)
    if pot.is_zero:
        values = op_l0.real_characteristic(op_l0.L0Config(pot.l, args.theta_phi), lam)
    else:
        values = op_lq.real_characteristic_q(pot, args.theta_phi, args.h or 0.0, lam)
    change = np.zeros(lam.size, dtype=int)
    change[1:] = (np.sign(values[1:]) * np.sign(values[:-1]) <= 0).astype(int)
    header = ["lambda", "re_exp_i_phi_delta_scaled", "sign_change"]
    return header, ([repr(float(a)), repr(float(b)), int(c)] for a, b, c in zip(lam, values, change))


def _plot_eigfun(args, pot):
    x = np.linspace(0.0, pot.l, args.points)
    theta = _theta(args.theta_phi)
    indices = range(args.n_lo, args.n_hi + 1)
    columns = []
    for n in indices:
        if pot.is_zero:
            columns.append(np.asarray(op_l0.eigenfunction0(op_l0.L0Config(pot.l, args.theta_phi), n, x)))
        else:
            columns.append(np.asarray(op_lq.eigenfunction_q(pot, theta, n, x)))
    header = ["x"] + [f"psi{n}_{part}" for n in indices for part in ("re", "im")]
    rows = []
    for j, xv in enumerate(x):
        row = [repr(float(xv))]
        for col in columns:
            row += [repr(float(col[j].real)), repr(float(col[j].imag))]
        rows.append(row)
    return header, rows


def _plot_roundtrip(args, pot, cfg):
    t_hat = _theta(args.theta_hat_phi)
    theta = _theta(args.theta_phi)
    h = args.h if args.h else inverse.DEFAULT_H
    sets = [inverse.forward_spectral_data(pot, theta, None, -cfg.N, cfg.N),
            inverse.forward_spectral_data(pot, t_hat, None, -cfg.N, cfg.N),
            inverse.forward_spectral_data(pot, theta, h, -cfg.N, cfg.N),
            inverse.forward_spectral_data(pot, t_hat, h, -cfg.N, cfg.N)]
    s2 = inverse.reconstruct_s2(sets[0], sets[1], cfg)
    s0 = inverse.reconstruct_s0(*sets, cfg)
    s1 = inverse.reconstruct_s1(s0, s2, pot.l, cfg)
    lam = np.linspace(args.lam_min, args.lam_max, args.points)
    header = ["lambda"]
    for p in range(3):
        header += [f"s{p}_rec_re", f"s{p}_rec_im", f"s{p}_ode_re", f"s{p}_ode_im"]
    rows = []
    recon = {0: s0(lam), 1: s1(lam), 2: s2(lam)}
    for j, lv in enumerate(lam):
        fs = op_lq.fundamental_system(pot, float(lv), starred=False)
        row = [repr(float(lv))]
        for p in range(3):
            ode = fs.at_end(p)
            row += [repr(float(recon[p][j].real)), repr(float(recon[p][j].imag)),
                    repr(float(ode.real)), repr(float(ode.imag))]
        rows.append(row)
    return header, rows


def cmd_plotdata(args, argv) -> int:
    started = time.perf_counter()
    if not args.out:
        raise UsageError("plotdata needs --out")
    pot = parse_potential(args.potential, args.l)
    cfg = inverse.ReconstructionConfig.from_mapping(parse_config(args.config, args.set))
    if args.kind == "sfun":
        header, rows = _plot_sfun(args)
    elif args.kind == "charfun":
        header, rows = _plot_charfun(args, pot)
    elif args.kind == "eigfun":
        header, rows = _plot_eigfun(args, pot)
    else:
        header, rows = _plot_roundtrip(args, pot, cfg)
    out = Path(args.out)
    write_csv(out, header, rows)
    config = {"kind": args.kind, "potential": _potential_config(pot), "theta_phi": args.theta_phi,
              "theta_hat_phi": args.theta_hat_phi, "h": args.h, "points": args.points,
              "lam_range": [args.lam_min, args.lam_max], "n_range": [args.n_lo, args.n_hi],
              "reconstruction": cfg.to_dict() if args.kind == "roundtrip" else None}
    write_manifest(out, "plotdata", argv, config, [args.potential], [out], started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cubicstring", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, potential_default="cosine"):
        p.add_argument("--l", type=float, default=1.0, help="interval length")
        p.add_argument("--potential", default=potential_default,
                       help="builtin name[:key=value,...] or a file of x, q samples")
        p.add_argument("--theta-phi", type=float, default=inverse.DEFAULT_PHI,
                       help="theta = exp(2 i phi)")
        p.add_argument("--h", type=float, default=None, help="boundary parameter h")
        p.add_argument("--n-lo", type=int, default=-20)
        p.add_argument("--n-hi", type=int, default=20)
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--config", help="key = value file with reconstruction settings")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")

    p = sub.add_parser("selftest", help="run the invariant suites")
    common(p)
    p.set_defaults(theta_phi=0.7)
    p.add_argument("--scope", choices=selftest.SCOPES, default="all")

    p = sub.add_parser("spectrum", help="real zeros of the characteristic function")
    common(p)

    p = sub.add_parser("reconstruct", help="recover q from four spectral data sets")
    common(p)
    p.add_argument("--theta-set", help="data set for theta")
    p.add_argument("--theta-hat-set", help="data set for theta_hat")
    p.add_argument("--theta-h-set", help="data set for (theta, h)")
    p.add_argument("--theta-hat-h-set", help="data set for (theta_hat, h)")

    p = sub.add_parser("plotdata", help="plottable columns")
    common(p)
    p.add_argument("--kind", required=True, choices=("sfun", "charfun", "eigfun", "roundtrip"))
    p.add_argument("--theta-hat-phi", type=float, default=inverse.DEFAULT_PHI_HAT)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--lam-min", type=float, default=-3.0)
    p.add_argument("--lam-max", type=float, default=3.0)
    return parser


_COMMANDS = {"selftest": cmd_selftest, "spectrum": cmd_spectrum,
             "reconstruct": cmd_reconstruct, "plotdata": cmd_plotdata}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CubicStringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
