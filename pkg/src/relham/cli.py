"""Command line entry point: ``relham <command> [--config FILE] [--out DIR] ...``.

Exit codes: 0 when the run's checks pass, 1 when a check fails or a run
hypothesis is violated, 2 for usage or configuration errors.
"""
import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .config import ConfigError, compile_profile, parse_config
from .dynamics import run
from .energy import InadmissibleStateError, LagrangianState, eval_energy
from .experiments import (HypothesisViolation, exp_force_oracle, exp_friction_limit, exp_lower_bounds,
                          exp_rarefaction)
from .measure import center_of_mass
from .relative import relative_hamiltonian_monitor

COMMANDS = ("simulate", "compare", "sweep-friction", "rarefaction", "check-bounds", "oracle-check")
TRAJECTORY_COLUMNS = ("t", "H", "K", "E_r", "E_a", "E_w", "com", "n_clusters")
RELATIVE_COLUMNS = ("H_rel", "K_rel", "Ew_rel", "Er_rel", "Ea_rel", "shift_a", "work_rate", "correction",
                    "residual")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_atomic(path, text):
    """Write to a temporary file in the same directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    write_atomic(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in (obj.tolist() if isinstance(obj, np.ndarray) else obj)]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


def write_summary(path, command, passed, measured, cfg, seed):
    doc = {"command": command, "passed": bool(passed), "measured": measured, "seed": seed,
           "config": cfg.echo(), "version": __version__}
    write_atomic(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _initial(block, ref):
    x = ref.labels
    return LagrangianState(compile_profile(block["position"])(x), compile_profile(block["velocity"])(x))


def _energy_rows(traj, ref, model):
    rows = []
    for k in range(len(traj)):
        st = traj.state(k)
        e = eval_energy(st, ref, model)
        rows.append((st.t, e.H, e.K, e.E_r, e.E_a, e.E_w, center_of_mass(st, ref), int(traj.n_clusters[k])))
    return rows


def cmd_simulate(cfg, args):
    ref = cfg.build_reference()
    traj = run(_initial(cfg.initial, ref), ref, cfg.model, cfg.integrator)
    rows = _energy_rows(traj, ref, cfg.model)
    # gradient-flow velocities are not momenta, so only the potential is judged there
    gradient = cfg.integrator.scheme == "gradient-euler"
    energy = np.array([r[1] - r[2] if gradient else r[1] for r in rows])
    scale = max(1.0, abs(energy[0]))
    growth = float(np.max(energy - energy[0]))
    tol = cfg.tolerances["energy"]
    passed = growth <= tol * scale
    measured = {"energy_growth": growth, "energy_tolerance": tol * scale, "final_clusters": int(traj.n_clusters[-1]),
                "merge_events": len(traj.merge_events),
                "max_merge_energy_increase": max((e.H_after - e.H_before for e in traj.merge_events), default=0.0)}
    if cfg.integrator.scheme == "leapfrog" and not traj.merge_events:
        drift = float(np.max(np.abs(energy - energy[0])))
        measured["energy_drift"] = drift
        passed = passed and drift <= tol * scale
    if cfg.output["trajectory"]:
        write_csv(os.path.join(args.out, "simulate.csv"), TRAJECTORY_COLUMNS, rows)
    return passed, measured


def cmd_compare(cfg, args):
    ref = cfg.build_reference()
    model, ic = cfg.model, cfg.integrator
    tw = run(_initial(cfg.initial, ref), ref, model, ic)
    ts = run(_initial(cfg.reference, ref), ref, model, ic)
    mon = relative_hamiltonian_monitor(tw, ts, ref, model, cfg.tolerances["monitor"])
    base = _energy_rows(tw, ref, model)
    rows = []
    for k, rep in enumerate(mon.reports):
        rows.append(base[k] + (rep.H_rel, rep.K_rel, rep.Ew_rel, rep.Er_rel, rep.Ea_rel, rep.shift_a,
                               rep.work_rate, rep.correction, mon.residual[k]))
    if cfg.output["trajectory"]:
        write_csv(os.path.join(args.out, "compare.csv"), TRAJECTORY_COLUMNS + RELATIVE_COLUMNS, rows)
    h = mon.series("H_rel")
    passed = bool(mon.holds) and mon.gronwall_holds is not False
    return passed, {"max_H_rel": float(np.max(h)), "H_rel0": float(h[0]),
                    "max_abs_residual": float(np.max(np.abs(mon.residual))), "tolerance": mon.tolerance,
                    "identity_holds": bool(mon.holds), "gronwall_C0": mon.gronwall_C0,
                    "gronwall_holds": mon.gronwall_holds}


def cmd_sweep_friction(cfg, args):
    if cfg.model.formulation != "B":
        raise ConfigError(["[model] sweep-friction runs the pressureless model (formulation B)"])
    e = cfg.experiment
    rep = exp_friction_limit(e["eps_list"], cfg.n, e["s_end"], e["dt_factor"], threads=args.threads)
    m = rep.measured
    write_csv(os.path.join(args.out, "sweep-friction.csv"), ("eps", "sup_distance", "sup_velocity_norm", "dt"),
              zip(m["eps"], m["sup_distance"], m["sup_velocity_norm"], m["dt"]))
    return rep.passed, m


def cmd_rarefaction(cfg, args):
    if cfg.model.formulation != "A":
        raise ConfigError(["[model] rarefaction needs formulation A"])
    ic = cfg.integrator
    try:
        rep = exp_rarefaction(cfg.model, cfg.n, ic.t_end, ic.dt, ic.output_stride, cfg.experiment["perturbation"],
                              cfg.tolerances["rarefaction"])
    except ValueError as exc:
        raise ConfigError([f"[model] {exc}"]) from None
    s = rep.series
    write_csv(os.path.join(args.out, "rarefaction.csv"), ("t", "H_rel", "decay_integral", "lhs"),
              zip(s["t"], s["H_rel"], s["decay_integral"], s["lhs"]))
    return rep.passed, rep.measured


def cmd_check_bounds(cfg, args):
    e = cfg.experiment
    rep = exp_lower_bounds(args.seed, e["n_pairs"], e["pair_particles"], list(e["cells"]))
    cells = rep.measured["cells"]
    write_csv(os.path.join(args.out, "check-bounds.csv"), ("cell", "certificates", "violations", "min_lhs_over_rhs"),
              ((name, c["certificates"], c["violations"], c["min_lhs_over_rhs"]) for name, c in cells.items()))
    return rep.passed, rep.measured


def cmd_oracle_check(cfg, args):
    e = cfg.experiment
    rep = exp_force_oracle(args.seed, e["n_states"], e["oracle_particles"], e["h"])
    write_csv(os.path.join(args.out, "oracle-check.csv"), ("formulation", "p", "q", "gamma", "max_error", "ratio"),
              rep.series["table"])
    m = rep.measured
    print(f"max scaled force error {m['max_scaled_error']:.3e}; "
          f"error ratio for h -> h/2 in [{m['ratio_min']:.3f}, {m['ratio_max']:.3f}]")
    return rep.passed, m


HANDLERS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep-friction": cmd_sweep_friction,
    "rarefaction": cmd_rarefaction,
    "check-bounds": cmd_check_bounds,
    "oracle-check": cmd_oracle_check,
}


def build_parser():
    p = argparse.ArgumentParser(prog="relham", description="Lagrangian particle runs and relative-energy checks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI configuration file (defaults are used when omitted)")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="random seed, unsigned 64-bit (overrides [run] seed)")
    p.add_argument("--threads", type=int, help="worker processes for sweeps (overrides [run] threads)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, os.environ)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError(["--seed must be an unsigned 64-bit integer"])
        if args.threads is not None and args.threads < 1:
            raise ConfigError(["--threads must be >= 1"])
    except OSError as exc:
        print(f"relham: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print("relham: invalid configuration:\n  " + "\n  ".join(exc.errors), file=sys.stderr)
        return 2
    args.out = args.out or cfg.output["dir"]
    args.seed = cfg.seed if args.seed is None else args.seed
    args.threads = cfg.threads if args.threads is None else args.threads
    try:
        passed, measured = HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print("relham: invalid configuration:\n  " + "\n  ".join(exc.errors), file=sys.stderr)
        return 2
    except (HypothesisViolation, InadmissibleStateError, FloatingPointError) as exc:
        print(f"relham: {args.command} aborted: {exc}", file=sys.stderr)
        write_summary(os.path.join(args.out, f"{args.command}.json"), args.command, False,
                      {"aborted": str(exc)}, cfg, args.seed)
        return 1
    write_summary(os.path.join(args.out, f"{args.command}.json"), args.command, passed, measured, cfg, args.seed)
    print(f"relham {args.command}: {'PASS' if passed else 'FAIL'} (outputs in {args.out})")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
