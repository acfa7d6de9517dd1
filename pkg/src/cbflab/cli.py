"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 scenario error, 3 solver
inconsistency, 4 safety anomaly, 5 unresolved search cells, 6 validation
tolerance breach, 7 estimate unavailable. The environment variable
CBFLAB_SEED overrides --seed wherever one is accepted. Outputs carry a
manifest with content hashes and no timestamps, so identical invocations
produce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import lie_data
from .equilibria import SearchGrid, find_equilibria, interior_certificate
from .errors import (
    CbflabError,
    ConfigurationError,
    EstimateUnavailableError,
    InternalInconsistencyError,
    OracleInfeasibleError,
    ScenarioError,
)
from .modified import estimate_roa
from .oracle import kkt_residual, solve_oracle
from .qp import solve
from .scenarios import load, registry_names, ring_starts
from .simulate import IntegratorConfig, batch

# Validation tolerances (also enforced by the acceptance suite).
DU_TOL = 1e-6
DDELTA_TOL = 1e-6
KKT_TOL = 1e-8


def _fmt(v: float) -> str:
    return f"{float(v):.10g}"


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ConfigurationError(f"could not parse {what}: {text!r}") from None
    if not vals:
        raise ConfigurationError(f"empty {what}: {text!r}")
    return vals


def _parse_starts(text: str | None, scenario):
    if text is None:
        return scenario.starts
    if text.startswith("ring:"):
        parts = text.split(":")
        if len(parts) != 3 or not parts[2].startswith("r="):
            raise ConfigurationError(f"ring start spec must look like ring:16:r=6, got {text!r}")
        try:
            count, radius = int(parts[1]), float(parts[2][2:])
        except ValueError:
            raise ConfigurationError(f"bad ring start spec: {text!r}") from None
        return ring_starts(count, radius, n=scenario.model.n)
    starts = []
    for chunk in text.split(";"):
        vals = _parse_floats(chunk, "start state")
        if len(vals) != scenario.model.n:
            raise ConfigurationError(
                f"start {chunk!r} has {len(vals)} coordinates, expected {scenario.model.n}"
            )
        starts.append(np.array(vals))
    return tuple(starts)


def _parse_box(text: str | None, scenario):
    if text is None:
        return scenario.box
    bounds = []
    for chunk in text.split(","):
        lohi = chunk.split(":")
        if len(lohi) != 2:
            raise ConfigurationError(f"box axis must look like lo:hi, got {chunk!r}")
        try:
            lo, hi = float(lohi[0]), float(lohi[1])
        except ValueError:
            raise ConfigurationError(f"bad box bounds: {chunk!r}") from None
        bounds.append((lo, hi))
    if len(bounds) != scenario.model.n:
        raise ConfigurationError(f"box has {len(bounds)} axes, expected {scenario.model.n}")
    return tuple(bounds)


def _p_values(args, scenario) -> tuple[float, ...]:
    if getattr(args, "p", None) is None:
        return scenario.p_defaults
    return _parse_floats(args.p, "p list")


def _ptag(p: float) -> str:
    return f"{p:g}".replace(".", "_").replace("-", "m")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(outdir: Path, command: str, config: dict, outputs: list[Path],
                    extra: dict | None = None) -> None:
    doc = {"command": command, **config}
    config_hash = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")
    ).hexdigest()
    manifest = {
        **doc,
        "config_hash": config_hash,
        "tool": {"name": "cbflab", "version": __version__},
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    if extra:
        manifest.update(extra)
    path = outdir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_trajectory_csv(path: Path, traj, n: int, m: int) -> None:
    header = (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{i + 1}" for i in range(m)]
        + ["V", "h", "delta", "lambda1", "lambda2", "region"]
    )
    lines = [",".join(header)]
    for i in range(len(traj)):
        row = [repr(float(traj.times[i]))]
        row += [repr(float(v)) for v in traj.states[i]]
        row += [repr(float(v)) for v in traj.inputs[i]]
        row += [
            repr(float(traj.v_values[i])),
            repr(float(traj.h_values[i])),
            repr(float(traj.deltas[i])),
            repr(float(traj.lambda1s[i])),
            repr(float(traj.lambda2s[i])),
            traj.regions[i].value,
        ]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_solve(args) -> int:
    scenario = load(args.scenario)
    p = float(args.p)
    x = np.array(_parse_floats(args.x, "state"))
    lie = lie_data(scenario.model, scenario.certs, x)
    sol = solve(lie, p)
    clf_row = lie.f_v + float(lie.lg_v @ sol.u_star) - sol.delta
    cbf_row = lie.f_h + float(lie.lg_h @ sol.u_star)
    print(f"scenario: {scenario.name}")
    print(f"p: {_fmt(p)}")
    print(f"x: ({', '.join(_fmt(v) for v in x)})")
    print(f"region: {sol.region.value}")
    print(f"u*: ({', '.join(_fmt(v) for v in sol.u_star)})")
    print(f"delta: {_fmt(sol.delta)}")
    print(f"lambda1: {_fmt(sol.lambda1)}")
    print(f"lambda2: {_fmt(sol.lambda2)}")
    print(f"clf row (FV + LgV.u - delta): {_fmt(clf_row)}")
    print(f"cbf row (Fh + Lgh.u): {_fmt(cbf_row)}")
    return 0


def _cmd_simulate(args) -> int:
    scenario = load(args.scenario)
    p_values = _p_values(args, scenario)
    starts = _parse_starts(args.starts, scenario)
    cfg = IntegratorConfig(step=args.step, horizon=args.horizon)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    search_scenario = scenario.transformed() if args.mode == "modified" else scenario
    outputs: list[Path] = []
    anomalies: list[str] = []
    for p in p_values:
        trajs = batch(scenario, args.mode, p, starts, cfg)
        for i, traj in enumerate(trajs):
            csv_path = outdir / f"sim_{scenario.name}_{args.mode}_p{_ptag(p)}_s{i:02d}.csv"
            _write_trajectory_csv(csv_path, traj, scenario.model.n, scenario.model.m)
            outputs.append(csv_path)
            if traj.terminal.kind == "safety-anomaly":
                anomalies.append(csv_path.name)
            print(f"p={p:g} start {i}: {traj.terminal.kind} "
                  f"({', '.join(_fmt(v) for v in traj.terminal.state)}) "
                  f"min h = {_fmt(traj.min_h) if len(traj) else 'n/a'}")
        marks = ()
        if scenario.model.n == 2:
            try:
                grid = SearchGrid(scenario.box, resolution=81)
                marks = find_equilibria(search_scenario, p, grid).reports
            except CbflabError:
                marks = ()
            svg_path = outdir / f"portrait_{scenario.name}_{args.mode}_p{_ptag(p)}.svg"
            from .svgplot import phase_portrait

            phase_portrait(
                svg_path, scenario, trajs, marks,
                title=f"{scenario.name} ({args.mode}), p = {p:g}",
            )
            outputs.append(svg_path)

    _write_manifest(
        outdir, "simulate",
        {
            "scenario": scenario.name,
            "mode": args.mode,
            "p_values": [float(p) for p in p_values],
            "starts": [[float(v) for v in s] for s in starts],
            "integrator": {"step": cfg.step, "horizon": cfg.horizon},
            "seed": args.seed,
        },
        outputs,
        extra={"safety_anomalies": sorted(anomalies)},
    )
    if anomalies:
        print(f"safety anomaly in {len(anomalies)} trajectory(ies)", file=sys.stderr)
        return 4
    return 0


def _cmd_equilibria(args) -> int:
    scenario = load(args.scenario)
    p_values = _p_values(args, scenario)
    box = _parse_box(args.box, scenario)
    grid = SearchGrid(box, resolution=args.resolution)

    rows = []
    cert_rows = []
    unresolved_total = 0
    for p in p_values:
        search = find_equilibria(scenario, p, grid)
        cert = interior_certificate(scenario, p, grid)
        unresolved_total += len(search.unresolved)
        counts: dict[str, int] = {}
        for rep in search.reports:
            counts[rep.kind.value] = counts.get(rep.kind.value, 0) + 1
        summary = ", ".join(f"{k} x{v}" for k, v in sorted(counts.items())) or "none"
        print(f"p={p:g}: {len(search.reports)} equilibria ({summary}); "
              f"interior certificate {'holds' if cert.holds else 'FAILS'}")
        for rep in search.reports:
            loc = ", ".join(_fmt(v) for v in rep.location)
            print(f"  {rep.kind.value:9s} ({loc})  residual {rep.residual:.3e}  {rep.region.value}")
            rows.append((p, rep))
        for rep in search.anomalies:
            loc = ", ".join(_fmt(v) for v in rep.location)
            print(f"  ANOMALY   ({loc})  residual {rep.residual:.3e}  outside the safe set")
        for seed in search.unresolved:
            loc = ", ".join(_fmt(v) for v in seed)
            print(f"  UNRESOLVED cell near ({loc})")
        witnesses = ";".join(
            " ".join(_fmt(v) for v in w) for w in cert.witnesses
        )
        cert_rows.append((p, cert.holds, witnesses))

    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        n = scenario.model.n
        eq_path = outdir / "equilibria.csv"
        header = ["p", "kind"] + [f"x{i + 1}" for i in range(n)] + ["residual", "region"]
        lines = [",".join(header)]
        for p, rep in rows:
            lines.append(",".join(
                [repr(float(p)), rep.kind.value]
                + [repr(float(v)) for v in rep.location]
                + [repr(float(rep.residual)), rep.region.value]
            ))
        eq_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        cert_path = outdir / "certificates.csv"
        lines = ["p,holds,witnesses"]
        for p, holds, witnesses in cert_rows:
            lines.append(f"{float(p)!r},{str(holds).lower()},{witnesses}")
        cert_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_manifest(
            outdir, "equilibria",
            {
                "scenario": scenario.name,
                "p_values": [float(p) for p in p_values],
                "box": [[float(lo), float(hi)] for lo, hi in box],
                "resolution": args.resolution,
                "seed": args.seed,
            },
            [eq_path, cert_path],
        )

    if unresolved_total:
        print(f"{unresolved_total} unresolved cell(s)", file=sys.stderr)
        return 5
    return 0


def _cmd_validate(args) -> int:
    scenario = load(args.scenario)
    p_values = _p_values(args, scenario)
    if args.samples == 0:
        print("warning: 0 samples requested; validation passes vacuously")
        return 0
    if args.samples < 0:
        raise ConfigurationError("sample count must be nonnegative")
    lo = np.array([b[0] for b in scenario.box])
    hi = np.array([b[1] for b in scenario.box])

    ok = True
    for idx, p in enumerate(p_values):
        rng = np.random.default_rng([args.seed, idx])
        pts = rng.uniform(lo, hi, size=(args.samples, scenario.model.n))
        worst_du = worst_dd = worst_kkt = 0.0
        worst_state = pts[0]
        failure = None
        for row in pts:
            lie = lie_data(scenario.model, scenario.certs, row)
            try:
                closed = solve(lie, p)
                oracle = solve_oracle(lie, p)
            except (InternalInconsistencyError, OracleInfeasibleError) as exc:
                failure = (row, str(exc))
                break
            du = float(np.max(np.abs(closed.u_star - oracle.u_star)))
            dd = abs(closed.delta - oracle.delta)
            kkt = kkt_residual(lie, closed, p)
            if max(du - worst_du, dd - worst_dd, kkt - worst_kkt) > 0:
                worst_state = row
            worst_du = max(worst_du, du)
            worst_dd = max(worst_dd, dd)
            worst_kkt = max(worst_kkt, kkt)
        if failure is not None:
            state = ", ".join(_fmt(v) for v in failure[0])
            print(f"p={p:g}: solver failure at ({state}): {failure[1]}")
            ok = False
            continue
        passed = worst_du <= DU_TOL and worst_dd <= DDELTA_TOL and worst_kkt <= KKT_TOL
        state = ", ".join(_fmt(v) for v in worst_state)
        print(f"p={p:g}: max |du| = {worst_du:.3e}, max |ddelta| = {worst_dd:.3e}, "
              f"max KKT residual = {worst_kkt:.3e}  worst state ({state})")
        ok = ok and passed
    if ok:
        print(f"PASS ({args.samples} samples per p, tolerances "
              f"{DU_TOL:g}/{DDELTA_TOL:g}/{KKT_TOL:g})")
        return 0
    print("FAIL: deviation above tolerance", file=sys.stderr)
    return 6


def _cmd_roa(args) -> int:
    scenario = load(args.scenario)
    if scenario.nominal is None:
        raise ConfigurationError(f"scenario {scenario.name!r} has no nominal controller")
    p_values = _p_values(args, scenario)
    p = float(p_values[0])
    tscen = scenario.transformed()
    est = estimate_roa(
        tscen.model, tscen.certs, p, box=tscen.box, seed=args.seed,
    )
    print(f"scenario: {scenario.name}")
    print(f"p: {_fmt(p)}")
    print(f"eta: {_fmt(est.eta)}")
    print(f"radius sqrt(2 eta) (for V = |x|^2/2): {_fmt(float(np.sqrt(2.0 * est.eta)))}")
    print(f"accepted samples per level: {est.sample_count}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbflab",
        description="CLF-CBF quadratic-program safety filter toolbox",
    )
    parser.add_argument("--version", action="version", version=f"cbflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str, seed: bool = True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--scenario", required=True,
                        help=f"registry name ({', '.join(registry_names())}) or document path")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("solve", _cmd_solve, "solve the filter QP at one state", seed=False)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--x", required=True, help="state, comma-separated")

    sp = add("simulate", _cmd_simulate, "integrate closed-loop trajectories")
    sp.add_argument("--mode", choices=("original", "modified"), default="original")
    sp.add_argument("--p", default=None, help="comma-separated p list (default: scenario)")
    sp.add_argument("--starts", default=None,
                    help="ring:COUNT:r=RADIUS or semicolon-separated states (default: scenario)")
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--horizon", type=float, default=20.0)
    sp.add_argument("--out", default="cbflab-out")

    sp = add("equilibria", _cmd_equilibria, "find and classify closed-loop equilibria")
    sp.add_argument("--p", default=None)
    sp.add_argument("--box", default=None, help="search box, lo:hi per axis, comma-separated")
    sp.add_argument("--resolution", type=int, default=161)
    sp.add_argument("--out", default=None)

    sp = add("validate", _cmd_validate, "cross-check the closed form against the oracle")
    sp.add_argument("--p", default=None)
    sp.add_argument("--samples", type=int, default=10000)

    sp = add("roa", _cmd_roa, "estimate the region of attraction (modified controller)")
    sp.add_argument("--p", default=None)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    env_seed = os.environ.get("CBFLAB_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"invalid CBFLAB_SEED: {env_seed!r}", file=sys.stderr)
            return 1

    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except (InternalInconsistencyError, OracleInfeasibleError) as exc:
        print(f"solver inconsistency: {exc}", file=sys.stderr)
        return 3
    except EstimateUnavailableError as exc:
        print(f"estimate unavailable: {exc}", file=sys.stderr)
        return 7
    except CbflabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
