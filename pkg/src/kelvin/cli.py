"""Command-line front end.

    kelvin spectrum|steady|trajectory|rates|optimize|reproduce \
        --config cfg.json --out outdir [--seed N] [--engine fock|cm] [--threads N]

Configs are strict JSON: unknown keys are rejected and physics parameters
have no implicit defaults (only output and run-control knobs do).  All files
are written atomically (temp + rename), CSVs carry a header row, and every
summary.json embeds the config hash and package version for reproducibility.

Exit codes: 0 success, 1 reproduction assertion failure, 2 invalid config,
3 non-unique fixed point, 4 unsupported engine/noise combination,
5 optimization failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import analytic as an
from . import optimize as op
from . import protocol as pr
from . import repro, svgplot
from .errors import ConfigError, NonUniqueFixedPoint, OptimizationFailed, UnsupportedCombination
from .model import (
    BathSpec,
    CouplingScheme,
    ModelParams,
    bogoliubov_angle,
    dispersion,
    energy_density_limit,
    ground_state_energy,
)

EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NONUNIQUE = 3
EXIT_UNSUPPORTED = 4
EXIT_OPTFAIL = 5


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

_SCHEMA = {
    "model": {"N", "theta"},
    "scheme": {"nn", "lambda", "mu", "g"},
    "bath": {"delta", "cycle_time"},
    "schedule": {"kind", "L", "R", "freq_rule", "k_fractions", "k_modes"},
    "noise": {"kind", "kappa", "kappa_prime", "delta_e", "p_e"},
    "run": {"cycles", "snapshot_stride", "initial", "dsp", "cross_check", "wide"},
    "optimize": {"objective", "phase", "mode", "budget", "restarts", "init"},
    "reproduce": {"target", "fast"},
}
_TOP_KEYS = set(_SCHEMA) | {"seed", "engine", "threads"}

_REQUIRED = {
    "spectrum": ["model"],
    "steady": ["model", "scheme", "bath", "schedule", "noise"],
    "trajectory": ["model", "scheme", "bath", "schedule", "noise", "run"],
    "rates": ["model", "scheme", "bath", "schedule"],
    "optimize": ["model", "scheme", "optimize"],
    "reproduce": ["reproduce"],
}


def _check_keys(name: str, obj: dict, allowed: set):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")


def load_config(path: str, command: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys("<root>", cfg, _TOP_KEYS)
    for section, val in cfg.items():
        if section in _SCHEMA:
            if not isinstance(val, dict):
                raise ConfigError(f"section {section!r} must be an object")
            _check_keys(section, val, _SCHEMA[section])
    for section in _REQUIRED[command]:
        if section not in cfg:
            raise ConfigError(f"command {command!r} requires section {section!r}")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    try:
        return ModelParams(int(m["N"]), float(m["theta"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model section: {exc}") from exc


def _scheme(cfg: dict) -> CouplingScheme:
    s = cfg["scheme"]
    try:
        lam = {int(k): float(v) for k, v in s["lambda"].items()}
        mu = {int(k): float(v) for k, v in s["mu"].items()}
        return CouplingScheme(nn=float(s["nn"]), lam=lam, mu=mu, g=float(s["g"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scheme section: {exc}") from exc


def _bath(cfg: dict, params: ModelParams) -> BathSpec:
    b = cfg["bath"]
    try:
        d = b["delta"]
        if isinstance(d, dict):
            _check_keys("bath.delta", d, {"mode_k", "mode_fraction"})
            if "mode_k" in d:
                k = int(d["mode_k"])
            else:
                k = int(round(float(d["mode_fraction"]) * params.N / 2))
            delta = dispersion(params.theta, params.N, k)
        else:
            delta = float(d)
        return BathSpec(delta, float(b["cycle_time"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid bath section: {exc}") from exc


def _noise(cfg: dict) -> an.NoiseSpec:
    n = cfg.get("noise", {"kind": "none"})
    kind = n.get("kind")
    try:
        if kind == "none":
            return an.NoiseSpec.none()
        if kind == "depolarizing":
            return an.NoiseSpec.depolarizing(float(n["kappa"]))
        if kind == "finite_env":
            return an.NoiseSpec.finite_env(float(n["kappa_prime"]),
                                           float(n["delta_e"]), float(n["p_e"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid noise section: {exc}") from exc
    raise ConfigError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=os.path.basename(path) + ".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                cells.append("")
            elif isinstance(v, float):
                cells.append(f"{v:.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _summary(cfg: dict, extra: dict) -> dict:
    return {"config_hash": config_hash(cfg), "version": __version__, **extra}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_spectrum(cfg: dict, out: str, args) -> int:
    params = _params(cfg)
    rows = []
    for k in params.mode_indices:
        w = 0.5 if k in (0, params.N // 2) else 1.0
        rows.append((k, dispersion(params.theta, params.N, k),
                     bogoliubov_angle(params.theta, params.N, k), w))
    write_csv(os.path.join(out, "spectrum.csv"),
              ["k", "epsilon_k", "phi_k", "weight"], rows)
    e_gs = ground_state_energy(params)
    write_json(os.path.join(out, "summary.json"), _summary(cfg, {
        "E_GS": e_gs,
        "N_times_f_theta": params.N * energy_density_limit(params.theta),
    }))
    return 0


def cmd_steady(cfg: dict, out: str, args) -> int:
    params = _params(cfg)
    scheme = _scheme(cfg)
    bath = _bath(cfg, params)
    noise = _noise(cfg)
    dsp = cfg.get("run", {}).get("dsp", False)
    rep = pr.steady_report(params, scheme, bath, cfg["schedule"], noise=noise,
                           engine=args.engine, dsp=dsp, threads=args.threads)
    deltas = pr.schedule_frequencies(cfg["schedule"], params, bath)
    e_closed = an.closed_form_relative_energies(
        params, scheme, deltas, bath.cycle_time_mean, noise,
        schedule_kind=cfg["schedule"].get("kind", "single"),
        mode="dsp" if dsp else "cooling")

    def opt(v):
        return None if (isinstance(v, float) and math.isnan(v)) else v

    rows = [(int(k), rep.epsilon[k], rep.mode_energy[k],
             opt(rep.mode_relative_energy[k]), rep.alpha[k],
             opt(float(e_closed[k])),
             opt(float(rep.mode_relative_energy[k] - e_closed[k])))
            for k in rep.ks]
    write_csv(os.path.join(out, "steady.csv"),
              ["k", "epsilon_k", "E_k", "e_k", "alpha_k",
               "e_k_closed_form", "e_k_delta"], rows)
    write_json(os.path.join(out, "summary.json"), _summary(cfg, {
        "E": rep.energy, "e": rep.relative_energy, "fidelity": rep.fidelity,
        "engine": rep.engine, "max_residual": rep.max_residual,
    }))
    return 0


def cmd_trajectory(cfg: dict, out: str, args) -> int:
    params = _params(cfg)
    run = cfg["run"]
    sched = pr.make_schedule(cfg["schedule"], params, _bath(cfg, params), args.seed)
    kwargs = dict(noise=_noise(cfg), n_global_cycles=int(run["cycles"]),
                  snapshot_stride=int(run.get("snapshot_stride", 10)),
                  initial=run.get("initial", "most_excited"),
                  dsp=bool(run.get("dsp", False)), threads=args.threads)
    traj = pr.run_trajectory(params, _scheme(cfg), sched, engine=args.engine, **kwargs)

    header = ["cycle", "E", "e", "F"]
    wide = bool(run.get("wide", False))
    if wide:
        header += [f"E_k{k}" for k in range(params.N // 2 + 1)]
    rows = []
    for s in traj.snapshots:
        row = [s.cycle, s.energy, s.relative_energy, s.fidelity]
        if wide:
            row += list(s.mode_energies)
        rows.append(row)
    write_csv(os.path.join(out, "trajectory.csv"), header, rows)

    cycles = [s.cycle for s in traj.snapshots]
    es = [s.relative_energy for s in traj.snapshots]
    try:
        svgplot.line_plot({"relative energy": (cycles, es)},
                          os.path.join(out, "trajectory.svg"),
                          title="cooling trajectory", xlabel="global cycle",
                          ylabel="e", ylog=all(v > 0 for v in es))
    except ValueError:
        pass

    extra = {"converged_at": traj.converged_at,
             "final_e": traj.snapshots[-1].relative_energy,
             "final_F": traj.snapshots[-1].fidelity}
    if run.get("cross_check", False):
        other = "cm" if args.engine == "fock" else "fock"
        traj2 = pr.run_trajectory(params, _scheme(cfg), sched, engine=other, **kwargs)
        extra["cross_check_max_dE_k"] = float(max(
            np.max(np.abs(a.mode_energies - b.mode_energies))
            for a, b in zip(traj.snapshots, traj2.snapshots)))
    write_json(os.path.join(out, "summary.json"), _summary(cfg, extra))
    return 0


def cmd_rates(cfg: dict, out: str, args) -> int:
    params = _params(cfg)
    scheme = _scheme(cfg)
    bath = _bath(cfg, params)
    deltas = pr.schedule_frequencies(cfg["schedule"], params, bath)
    a, b = an.coupling_arrays(scheme, params)
    rt = an.rate_table(params, deltas, bath.cycle_time_mean, scheme.g,
                       a2=np.abs(a) ** 2, b2=np.abs(b) ** 2)
    _, eps, _, _ = an.mode_grid(params)
    e_val, e_rel, m, f = an.lindblad_steady(rt.gamma_c, rt.gamma_h, eps)
    rows = [(int(k), eps[k], rt.gamma_c[k], rt.gamma_h[k], rt.alpha[k], e_rel[k])
            for k in rt.ks]
    write_csv(os.path.join(out, "rates.csv"),
              ["k", "epsilon_k", "gamma_c", "gamma_h", "alpha_k", "e_k"], rows)
    write_json(os.path.join(out, "summary.json"),
               _summary(cfg, {"gamma0": rt.gamma0, "n_frequencies": len(deltas)}))
    return 0


def cmd_optimize(cfg: dict, out: str, args) -> int:
    params = _params(cfg)
    scheme = _scheme(cfg)
    o = cfg["optimize"]
    mode = o.get("mode", "cooling")
    objective_kind = o["objective"]
    noise = _noise(cfg)
    init_cfg = o.get("init", {})
    init = op.ParamVector(scheme, float(init_cfg.get("delta", 1.0)),
                          float(init_cfg.get("t", 3.0)))

    if objective_kind == "theta_specific":
        def objective(pv):
            return op.objective_theta_specific(pv, params, noise, mode)
    elif objective_kind == "phase_averaged":
        phase = o.get("phase")
        if phase not in ("low", "high"):
            raise ConfigError("phase_averaged objective requires phase: low|high")

        def objective(pv):
            return op.objective_phase_averaged(pv, phase, params.N, noise, mode)
    else:
        raise ConfigError(f"unknown objective {objective_kind!r}")

    res = op.optimize(objective, init, budget=int(o.get("budget", 4000)),
                      restarts=int(o.get("restarts", 8)), seed=args.seed,
                      vary_delta_t=(mode != "dsp"))
    best = res.best
    write_json(os.path.join(out, "optimum.json"), _summary(cfg, {
        "params": {
            "nn": best.scheme.nn,
            "lambda": {str(j): v for j, v in best.scheme.lam.items()},
            "mu": {str(j): v for j, v in best.scheme.mu.items()},
            "g": best.scheme.g, "delta": best.delta, "t": best.t,
        },
        "objective": res.objective,
        "evaluations": res.evaluations,
        "restarts_used": res.restarts_used,
        "history": res.history[-200:],
    }))

    # exact-engine validation at the optimum (theta-specific point evaluations)
    thetas = [params.theta] if objective_kind == "theta_specific" else \
        [float(t) for t in op.phase_grid(o["phase"], 5)]
    rows = {}
    for th in thetas:
        p_th = ModelParams(params.N, th)
        rep = pr.steady_report(p_th, best.scheme, BathSpec(best.delta, best.t),
                               {"kind": "single"}, noise=noise, engine="fock",
                               dsp=(mode == "dsp"), threads=args.threads)
        analytic = op.objective_theta_specific(best, p_th, noise, mode)
        rows[f"{th:.6f}"] = {"exact_e": rep.relative_energy, "analytic_e": analytic,
                             "difference": rep.relative_energy - analytic}
    write_json(os.path.join(out, "validation.json"), _summary(cfg, {"by_theta": rows}))
    return 0


def cmd_reproduce(cfg: dict, out: str, args) -> int:
    r = cfg["reproduce"]
    if r.get("target") not in repro.TARGETS:
        raise ConfigError(f"unknown reproduction target {r.get('target')!r}; "
                          f"choose from {sorted(repro.TARGETS)}")
    result = repro.run_target(r["target"], fast=bool(r.get("fast", False)))
    payload = _summary(cfg, {
        "target": result.target,
        "passed": result.passed,
        "assertions": [{
            "name": a.name, "measured": a.measured, "expected": a.expected,
            "rel_tol": a.rel_tol, "pass": a.ok, "note": a.note,
        } for a in result.assertions],
        "annotations": result.annotations,
        "data": result.data,
    })
    write_json(os.path.join(out, "report.json"), payload)
    for a in result.assertions:
        status = "PASS" if a.ok else "FAIL"
        exp = "" if a.expected is None else f" expected={a.expected:g}+-{100 * a.rel_tol:g}%"
        print(f"[{status}] {a.name}: measured={a.measured:g}{exp}")
    for note in result.annotations:
        print(f"[note] {note}")
    return 0 if result.passed else EXIT_ASSERTION


COMMANDS = {
    "spectrum": cmd_spectrum,
    "steady": cmd_steady,
    "trajectory": cmd_trajectory,
    "rates": cmd_rates,
    "optimize": cmd_optimize,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kelvin",
        description="bath-reset cooling protocols on a free-fermion chain")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="64-bit RNG seed")
    parser.add_argument("--engine", choices=["fock", "cm"], default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="per-mode worker threads (default KELVIN_THREADS or 1)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.command)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if args.engine is None:
            args.engine = cfg.get("engine", "fock")
            if args.engine not in ("fock", "cm"):
                raise ConfigError(f"unknown engine {args.engine!r}")
        if args.threads is None:
            args.threads = int(cfg.get("threads",
                                       os.environ.get("KELVIN_THREADS", "1")))
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args)
    except ConfigError as exc:
        json.dump({"error": "config", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_CONFIG
    except NonUniqueFixedPoint as exc:
        json.dump({"error": "non_unique_fixed_point", "message": str(exc),
                   "eigenspace_dim": exc.eigenspace_dim}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_NONUNIQUE
    except UnsupportedCombination as exc:
        json.dump({"error": "unsupported_combination", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_UNSUPPORTED
    except OptimizationFailed as exc:
        json.dump({"error": "optimization_failed", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_OPTFAIL


if __name__ == "__main__":
    sys.exit(main())
