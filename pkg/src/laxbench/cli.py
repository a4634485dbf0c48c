"""Command-line entry point: every verification and simulation as a
subcommand with machine-readable outputs and stable exit codes.

Exit codes: 0 success, 1 verification/numerical failure, 2 usage, I/O or
configuration error.  Every invocation writes a run manifest next to its
main output; the manifest holds the only timestamp, so reports themselves
are byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .cnls_sim import (BlowUpError, FieldState, Grid, SimConfig,
                       SolitonWrapError, conserved, manakov_soliton, run)
from .lax_numeric import invariant_scan, residual_fd, trace_drift
from .loop_algebra import (MappingTable, check_relations, load_relations,
                           parse_relation_record)
from .scalars import parse_scalar
from .zero_curvature import DerivationError, build_lax, derive_pde

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _out_path(path: str) -> str:
    base = os.environ.get("LAXBENCH_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _digest(paths, extra: str = "") -> str:
    h = hashlib.sha256()
    for p in paths:
        try:
            with open(p, "rb") as fh:
                h.update(fh.read())
        except OSError:
            h.update(b"<unreadable>")
    h.update(extra.encode())
    return h.hexdigest()


def _write_manifest(out_path: str, subcommand: str, inputs, outputs,
                    summary: dict, seed):
    manifest = {
        "subcommand": subcommand,
        "config_digest": _digest(inputs, json.dumps(summary, sort_keys=True)),
        "versions": {"laxbench": __version__,
                     "python": sys.version.split()[0],
                     "numpy": np.__version__},
        "inputs": list(inputs),
        "outputs": list(outputs),
        "seed": seed,
        "summary": summary,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = out_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _packaged(name: str) -> str:
    return str(resources.files("laxbench").joinpath("data", name))


def _load_mapping(spec: str, n: int, l: int) -> MappingTable:
    if spec == "default":
        return MappingTable.default(n=n, l=l)
    with open(spec, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    from .loop_algebra import LoopElement, gen
    from .scalars import Scalar
    images = {}
    for sym, terms in raw.items():
        el = LoopElement.zero()
        for coeff, (gl, gm, gn) in terms:
            el = el + LoopElement.of(gen(gl, gm, gn), parse_scalar(coeff))
        images[sym] = el
    return MappingTable(images, n, l)


def cmd_algebra_verify(args) -> int:
    try:
        rels = load_relations(args.relations)
        table = _load_mapping(args.map, args.n, args.l)
        with open(args.whitelist, "r", encoding="utf-8") as fh:
            whitelist = json.load(fh).get("relations", {})
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = check_relations(table, rels)
    out = _out_path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    bad = []
    for r in report.results:
        if r.classification == "exact":
            continue
        allowed = whitelist.get(r.tag, {}).get("allowed", [])
        if r.classification == "fails" and r.classification not in allowed:
            bad.append(r.tag)
    summary = {"relations": len(report.results),
               "passing": report.passing_count(),
               "unexpected_failures": bad,
               "mu_consistent": report.mu_consistent}
    _write_manifest(out, "algebra-verify",
                    [args.relations, args.whitelist], [out], summary, args.seed)
    if bad:
        print("unexpected failing relations: " + ", ".join(bad), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_lax_derive(args) -> int:
    if args.family not in ("L", "M", "N"):
        print(f"error: unknown family {args.family!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        system, conv, report = derive_pde(build_lax(args.family))
    except DerivationError as exc:
        print(f"derivation failed: {exc} "
              f"(minimal residual terms {exc.minimal_residual_terms})",
              file=sys.stderr)
        return EXIT_FAIL
    out = _out_path(args.out)
    payload = report.to_dict()
    payload["system"] = {"a": str(system.a), "b": str(system.b),
                         "c": str(system.c),
                         "kmatrix": {"m1": str(system.kmatrix.m1),
                                     "m2": str(system.kmatrix.m2),
                                     "kappa": str(system.kmatrix.kappa)},
                         "eps": str(system.eps)}
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary = {"family": args.family, "convention": conv.render(),
               "coefficients": payload["coefficients"]}
    _write_manifest(out, "lax-derive", [], [out], summary, args.seed)
    return EXIT_OK


def _build_initial(cfg_json: dict, grid: Grid, eps: float) -> FieldState:
    init = cfg_json.get("init", {})
    kind = init.get("type")
    if kind == "soliton":
        if eps < 0:
            raise ValueError("the soliton fixture is disabled for eps < 0")
        return manakov_soliton(init.get("eta", 1.0), init.get("a", 0.0),
                               init.get("c", [1.0, 0.0]), init.get("t0", 0.0),
                               0.0, grid, eps)
    if kind == "plane_wave":
        amp1 = complex(*init.get("a1", [1.0, 0.0]))
        amp2 = complex(*init.get("a2", [0.0, 0.0]))
        n = grid.n
        return FieldState(0.0, np.full(n, amp1, dtype=complex),
                          np.full(n, amp2, dtype=complex))
    if kind == "samples":
        data = np.loadtxt(init["path"], delimiter=",")
        if data.shape != (grid.n, 4):
            raise ValueError("sample file must have grid-size rows of "
                             "re_b1,im_b1,re_b2,im_b2")
        return FieldState(0.0, data[:, 0] + 1j * data[:, 1],
                          data[:, 2] + 1j * data[:, 3])
    raise ValueError(f"unknown initial condition type {kind!r}")


def write_trajectory_csv(path: str, trajectory, grid: Grid):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "re_b1", "im_b1", "re_b2", "im_b2"])
        t = grid.points()
        for state in trajectory:
            for j in range(grid.n):
                w.writerow([repr(state.x), repr(t[j]),
                            repr(state.b1[j].real), repr(state.b1[j].imag),
                            repr(state.b2[j].real), repr(state.b2[j].imag)])


def read_trajectory_csv(path: str):
    xs, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["x", "t"]:
            raise ValueError("not a trajectory file")
        for row in reader:
            rows.append([float(v) for v in row])
    data = np.array(rows)
    xs = np.unique(data[:, 0])
    states = []
    tvals = None
    for x in xs:
        block = data[data[:, 0] == x]
        block = block[np.argsort(block[:, 1])]
        if tvals is None:
            tvals = block[:, 1]
        states.append(FieldState(float(x),
                                 block[:, 2] + 1j * block[:, 3],
                                 block[:, 4] + 1j * block[:, 5]))
    return states, tvals


def cmd_simulate(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg_json = json.load(fh)
        grid = Grid(cfg_json["grid"]["period"], cfg_json["grid"]["n"])
        km = cfg_json.get("kmatrix", {})
        cfg = SimConfig(grid,
                        m1=km.get("m1", 0.0), m2=km.get("m2", 0.0),
                        kappa=km.get("kappa", 0.0),
                        eps=cfg_json.get("eps", 2.0),
                        dx=cfg_json["dx"], x_end=cfg_json["x_end"],
                        snapshot_stride=cfg_json.get("snapshot_stride", 100))
        init = _build_initial(cfg_json, grid, cfg.eps)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError,
            SolitonWrapError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        trajectory, diagnostics = run(cfg, init)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_FAIL
    prefix = _out_path(args.out_prefix)
    traj_path = prefix + "_trajectory.csv"
    diag_path = prefix + "_diagnostics.csv"
    meta_path = prefix + "_meta.json"
    write_trajectory_csv(traj_path, trajectory, grid)
    with open(diag_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "power", "momentum", "hamiltonian"])
        for d in diagnostics:
            w.writerow([repr(d.x), repr(d.power), repr(d.momentum),
                        repr(d.hamiltonian)])
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({"grid": {"period": grid.period, "n": grid.n},
                   "kmatrix": {"m1": cfg.m1, "m2": cfg.m2, "kappa": cfg.kappa},
                   "eps": cfg.eps, "dx": cfg.dx, "x_end": cfg.x_end,
                   "snapshot_stride": cfg.snapshot_stride},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    powers = [d.power for d in diagnostics]
    drift = (max(powers) - min(powers)) / max(abs(powers[0]), 1e-30)
    tol = cfg_json.get("power_tol", 1e-10)
    summary = {"steps": cfg.steps(), "snapshots": len(trajectory),
               "power_drift": drift, "power_tol": tol}
    _write_manifest(traj_path, "simulate", [args.config],
                    [traj_path, diag_path, meta_path], summary, args.seed)
    if drift > tol:
        print(f"power drift {drift:g} exceeds tolerance {tol:g}",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_monodromy(args) -> int:
    meta_path = args.meta or (args.trajectory.replace("_trajectory.csv", "")
                              + "_meta.json")
    try:
        states, tvals = read_trajectory_csv(args.trajectory)
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        lams = [complex(v) for v in args.lam.split(",")]
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if any(abs(l.imag) > 0 for l in lams) and not args.allow_complex:
        print("complex lambda requires --allow-complex", file=sys.stderr)
        return EXIT_USAGE
    xs = np.array([s.x for s in states])
    if len(xs) > 2:
        hx = np.diff(xs)
        if not np.allclose(hx, hx[0], rtol=1e-9, atol=1e-12):
            print("non-uniform snapshot spacing", file=sys.stderr)
            return EXIT_USAGE
    grid = Grid(meta["grid"]["period"], meta["grid"]["n"])
    km = meta.get("kmatrix", {})
    cfg = SimConfig(grid, m1=km.get("m1", 0.0), m2=km.get("m2", 0.0),
                    kappa=km.get("kappa", 0.0), eps=meta.get("eps", 2.0),
                    dx=meta.get("dx", 1e-3), x_end=meta.get("x_end", 1.0),
                    snapshot_stride=meta.get("snapshot_stride", 100))
    rows = invariant_scan(states, lams, cfg, allow_complex=args.allow_complex)
    out = _out_path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_lambda", "im_lambda", "re_tr", "im_tr",
                    "abs_eig1", "abs_eig2", "abs_eig3", "det_deviation"])
        for r in rows:
            w.writerow([repr(r.x), repr(r.lam.real), repr(r.lam.imag),
                        repr(r.trace.real), repr(r.trace.imag),
                        repr(abs(r.eigenvalues[0])), repr(abs(r.eigenvalues[1])),
                        repr(abs(r.eigenvalues[2])), repr(r.det_deviation)])
    worst_det = max(r.det_deviation for r in rows)
    summary = {"lambdas": [str(l) for l in lams], "snapshots": len(states),
               "worst_det_deviation": worst_det}
    _write_manifest(out, "monodromy", [args.trajectory, meta_path], [out],
                    summary, args.seed)
    if worst_det > 1e-8:
        print(f"det deviation {worst_det:g} exceeds 1e-8", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laxbench",
        description="loop-algebra verification, zero-curvature derivation "
                    "and coupled-NLS numerics")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed recorded in the run manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("algebra-verify",
                       help="classify the abstract relation list under a "
                            "mapping table")
    p.add_argument("--relations", default=_packaged("relations_sec2.json"))
    p.add_argument("--map", default="default")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--whitelist", default=_packaged("known_discrepancies.json"))
    p.add_argument("--out", default="relation_report.json")
    p.set_defaults(func=cmd_algebra_verify)

    p = sub.add_parser("lax-derive",
                       help="derive the evolution system from a spectral "
                            "matrix family")
    p.add_argument("--family", required=True)
    p.add_argument("--out", default="derivation.json")
    p.set_defaults(func=cmd_lax_derive)

    p = sub.add_parser("simulate", help="split-step propagation run")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("monodromy",
                       help="transverse monodromy invariants of a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--lambda", dest="lam", default="0,0.3,-0.3")
    p.add_argument("--meta", default=None)
    p.add_argument("--allow-complex", action="store_true")
    p.add_argument("--out", default="scan.csv")
    p.set_defaults(func=cmd_monodromy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
