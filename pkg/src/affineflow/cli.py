"""Command-line interface.

Subcommands:
  hierarchy print  --n N --j J [--latex|--json] [--out FILE]
  verify SUITE     --n N [--grid M] [--T T] [--out FILE]
  simulate         --n N --j J --init SPEC --T T [--dt DT] [--out FILE] [--csv]
  backlund         --n N --j J --k K --c c1,c2,... [--steps S] [--out FILE]

Every run writes a manifest next to its outputs.  JSON output is canonical:
keys sorted, floats rendered %.12e, so identical invocations are
byte-identical.  Exit codes: 0 pass, 1 verification failure, 2 usage error,
3 numerical abort.  A key=value config file (--config) supplies defaults;
AFFINEFLOW_THREADS caps suite-level parallelism in `verify all`.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import __version__
from . import backlund as bt
from . import curvegeo as cg
from . import dynamics as dy
from . import looplax as lx
from . import verification
from .dynamics import NumericsError
from .gridfn import GridFunction
from .jets import Jet
from .looplax import FlowSpec

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, %.12e floats."""
    def render(o):
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return "%.12e" % float(o)
        if isinstance(o, complex):
            return render({"re": o.real, "im": o.imag})
        if isinstance(o, str):
            import json
            return json.dumps(o)
        if o is None:
            return "null"
        if isinstance(o, dict):
            items = sorted(o.items())
            return "{" + ",".join(f"{render(str(k))}:{render(v)}" for k, v in items) + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            return "[" + ",".join(render(v) for v in o) + "]"
        raise TypeError(f"cannot serialize {type(o)}")
    return render(obj)


def write_output(path: str, obj) -> str:
    with open(path, "w") as f:
        f.write(canonical_json(obj))
        f.write("\n")
    return path


def write_manifest(command: str, args: dict, outputs: list[str], passed: bool) -> str:
    config = {k: v for k, v in sorted(args.items())
              if v is not None and isinstance(v, (str, int, float, bool))}
    manifest = {
        "command": command,
        "config": config,
        "versions": {"affineflow": __version__, "numpy": np.__version__},
        "outputs": sorted(outputs),
        "pass": passed,
    }
    base = outputs[0] if outputs else f"{command}_{_config_hash(args)}"
    path = base + ".manifest.json"
    with open(path, "w") as f:
        f.write(canonical_json(manifest))
        f.write("\n")
    return path


def _config_hash(args: dict) -> str:
    blob = canonical_json({k: str(v) for k, v in args.items()
                           if isinstance(v, (str, int, float, bool))})
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def read_config_file(path: str) -> dict:
    """key=value lines; '#' starts a comment; values parsed as int/float/str."""
    out = {}
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.rstrip()}")
            key, val = (s.strip() for s in line.split("=", 1))
            for cast in (int, float):
                try:
                    val = cast(val)
                    break
                except ValueError:
                    continue
            out[key.replace("-", "_")] = val
    return out


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("AFFINEFLOW_THREADS", "1")))
    except ValueError:
        return 1


# -- subcommands -------------------------------------------------------------


def cmd_hierarchy(args) -> int:
    try:
        FlowSpec(args.n, args.j)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    z = lx.z_matrix(args.n, args.j)
    rhs = lx.kdv_rhs(args.n, args.j)
    dens_idx = [i for i in range(1, 2 * args.n) if i % args.n][:3]
    densities = {f"H{i}": lx.conserved_density(args.n, i) for i in dens_idx}
    phi = cg.phi_n(args.n)

    if args.latex:
        lines = [f"Z_{{{args.j},0}} = \\begin{{pmatrix}}"]
        lines += [" & ".join(z.at(i + 1, k + 1).to_latex() for k in range(args.n)) + r" \\"
                  for i in range(args.n)]
        lines.append("\\end{pmatrix}")
        for i, p in enumerate(rhs, start=1):
            lines.append(f"(u_{{{i}}})_t = {p.to_latex()}")
        lines.append(f"\\phi_{{{args.n}}} = {phi.to_latex()}")
        for name, d in densities.items():
            lines.append(f"{name}: \\oint {d.density.to_latex()} \\,dx")
        text = "\n".join(lines)
    else:
        payload = {
            "n": args.n, "j": args.j,
            "z_matrix": [[z.at(i + 1, k + 1).to_text() for k in range(args.n)]
                         for i in range(args.n)],
            "flow_rhs": [p.to_text() for p in rhs],
            "tangency_completion": phi.to_text(),
            "densities": {name: d.density.to_text() for name, d in densities.items()},
            "gradients": {name: [g.to_text() for g in d.gradient]
                          for name, d in densities.items()},
        }
        text = canonical_json(payload)

    outputs = []
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
        outputs.append(args.out)
    else:
        print(text)
    write_manifest("hierarchy", vars(args), outputs, True)
    return EXIT_PASS


def cmd_verify(args) -> int:
    name = args.suite
    if name not in (*verification.SUITES, "all"):
        print(f"error: unknown suite {name!r}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = {"n": args.n, "m": args.grid, "t_final": args.T}
    try:
        if name == "all" and thread_cap() > 1:
            from concurrent.futures import ThreadPoolExecutor
            names = ["symbolic", "poisson", "forms", "backlund"] + (
                ["dynamics"] if args.n == 3 else [])
            with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
                parts = pool.map(lambda s: verification.run_suite(s, **kwargs), names)
            checks = [c for part in parts for c in part]
        else:
            checks = verification.run_suite(name, **kwargs)
    except NumericsError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    passed = all(c["pass"] for c in checks)
    report = {"suite": name, "n": args.n, "checks": checks, "pass": passed}
    outputs = []
    if args.out:
        outputs.append(write_output(args.out, report))
    else:
        print(canonical_json(report))
    write_manifest("verify", vars(args), outputs, passed)
    return EXIT_PASS if passed else EXIT_FAIL


def _parse_builtin(spec: str, n: int, m: int):
    """builtin:NAME?key=val&... initial curvature/curve data."""
    name, _, query = spec.partition("?")
    params = {}
    if query:
        for kv in query.split("&"):
            key, _, val = kv.partition("=")
            params[key] = float(val)
    if name == "perturbed":
        c0 = cg.perturbed_closed_curve(
            int(params.get("n", n)), m,
            amplitude=params.get("amplitude", 0.05),
            modes=int(params.get("modes", 2)),
            seed=int(params.get("seed", 42)),
            winding=params.get("winding", 0.8 if n == 3 else 1.0))
        return c0
    if name == "soliton1":
        # the real tan-family has poles on every period; use the smooth
        # localized profile of the complex family (real part) as initial data
        mu = params.get("c", 1.0)
        length = params.get("period", 8 * np.pi)
        x = np.arange(m) * length / m - length / 2
        sol = bt.soliton1_complex_solution(mu)
        xj = Jet.variable(x.astype(complex), 0)
        tj = Jet.const(0.0, 0, x.shape)
        vals = [c.value().real for c in sol.u_components(xj, tj)]
        return cg.CurvatureField(3, [GridFunction(v, length) for v in vals])
    raise ValueError(f"unknown builtin {name!r}")


def cmd_simulate(args) -> int:
    try:
        spec = FlowSpec(args.n, args.j)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.init.startswith("builtin:"):
            init = _parse_builtin(args.init[len("builtin:"):], args.n, args.grid)
        elif args.init.endswith(".csv"):
            init = cg.load_curve_csv(args.init)
        else:
            import json
            with open(args.init) as f:
                init = cg.curve_from_json_dict(json.load(f))
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    cfg = dy.EvolutionConfig(flow=spec, dt=args.dt, t_final=args.T)
    try:
        if isinstance(init, cg.CurveSample):
            traj = dy.evolve_curve(init, cfg)
        else:
            traj = dy.evolve_u(init, cfg)
    except NumericsError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC

    out = args.out or f"traj_{_config_hash(vars(args))}.json"
    payload = {
        "meta": traj.meta,
        "times": list(traj.times),
        "u": [[list(row) for row in snap] for snap in traj.u_snaps],
        "gamma": ([[list(row) for row in snap] for snap in traj.gamma_snaps]
                  if traj.gamma_snaps is not None else None),
        "invariants": {k: list(v) for k, v in traj.invariants.items()},
    }
    outputs = [write_output(out, payload)]
    if args.csv:
        field = traj.final_field()
        csv_path = out.replace(".json", "_final_u.csv")
        cg.save_curvature_csv(csv_path, field)
        outputs.append(csv_path)
        if traj.gamma_snaps is not None:
            curve_path = out.replace(".json", "_final_gamma.csv")
            cg.save_curve_csv(curve_path, traj.final_curve())
            outputs.append(curve_path)
    write_manifest("simulate", vars(args), outputs, True)
    return EXIT_PASS


def cmd_backlund(args) -> int:
    try:
        FlowSpec(args.n, args.j)
        cvec = [float(s) for s in args.c.split(",")] if args.c else [0.3] * (args.n - 1)
        if len(cvec) != args.n - 1:
            raise ValueError(f"need {args.n - 1} constants in --c")
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    frame = bt.VacuumFrame(args.n, args.j)
    x = np.linspace(args.x_lo, args.x_hi, args.grid)
    samples = []
    residuals = []
    try:
        h_prev = None
        u_jets = [Jet.const(0.0, 12, x.shape) for _ in range(args.n - 1)]
        k = args.k
        for step in range(args.steps):
            c0 = np.concatenate([cvec, [-1.0]]).astype(complex)
            sol = bt.HSolution(args.n, args.j, k, c0, frame)
            hj = sol.h_jet(x, args.t, 12)
            res = sol.residual(x, args.t) if step == 0 else {"x": float("nan"), "t": float("nan")}
            if step == 0:
                u_jets = bt.transform_u_jets(args.n, u_jets, hj, 8)
                residuals.append(res)
            else:
                ht, _ = bt.permutability_pair(hj, h_prev)
                u_jets = bt.transform_u_jets(args.n, u_jets, ht, max(1, 8 - 2 * step))
            h_prev = hj
            k = k - 1.0  # next spectral point for iterated transformations
            samples.append({f"u{i + 1}": [float(v.real) for v in u_jets[i].value()]
                            for i in range(args.n - 1)})
    except (bt.WindowError, np.linalg.LinAlgError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    out = args.out or f"bt_{_config_hash(vars(args))}.json"
    payload = {
        "family": "iterated_vacuum_transformation",
        "params": {"n": args.n, "j": args.j, "k": args.k, "c": cvec,
                   "steps": args.steps, "t": args.t},
        "window": {"x_lo": args.x_lo, "x_hi": args.x_hi, "grid": args.grid},
        "samples": samples,
        "residuals": residuals,
    }
    outputs = [write_output(out, payload)]
    write_manifest("backlund", vars(args), outputs, True)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="affineflow",
                                 description="central affine curve flows and the matrix KdV hierarchy")
    ap.add_argument("--config", help="key=value file supplying argument defaults")
    sub = ap.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hierarchy", help="print symbolic flow data")
    hsub = h.add_subparsers(dest="action", required=True)
    hp = hsub.add_parser("print")
    hp.add_argument("--n", type=int, required=True)
    hp.add_argument("--j", type=int, required=True)
    grp = hp.add_mutually_exclusive_group()
    grp.add_argument("--latex", action="store_true")
    grp.add_argument("--json", action="store_true")
    hp.add_argument("--out")
    hp.set_defaults(func=cmd_hierarchy)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=[*verification.SUITES, "all"])
    v.add_argument("--n", type=int, default=3)
    v.add_argument("--grid", type=int, default=256)
    v.add_argument("--T", type=float, default=0.1)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="integrate a flow")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--init", required=True,
                   help="curve CSV/JSON path or builtin:NAME?k=v&...")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--dt", type=float)
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--out")
    s.add_argument("--csv", action="store_true", help="also write final-state CSV tables")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("backlund", help="generate transformed solutions from the vacuum")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--j", type=int, required=True)
    b.add_argument("--k", type=float, required=True)
    b.add_argument("--c", help="comma-separated constants c1,..,c_{n-1}")
    b.add_argument("--steps", type=int, default=1)
    b.add_argument("--t", type=float, default=0.0)
    b.add_argument("--x-lo", type=float, default=-0.5)
    b.add_argument("--x-hi", type=float, default=0.5)
    b.add_argument("--grid", type=int, default=33)
    b.add_argument("--out")
    b.set_defaults(func=cmd_backlund)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        defaults = read_config_file(args.config)
        for key, val in defaults.items():
            if getattr(args, key, None) is None:
                setattr(args, key, val)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
