"""Batch runner: ``varns <experiment> [--config FILE] [--out DIR] [--seed N]``.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Keys not
listed in ``KEYS`` are rejected.  A seed is mandatory, from ``seed = ...`` or
``--seed`` (the flag wins).

Exit status: 0 when every check passes, 1 when a check fails, 2 on
configuration or input errors (nothing is written in that case).

Artifacts in the output directory:
    config.txt     resolved configuration, one key per line
    checks.csv     one row per check (name, defect, tolerance, pass, context)
    report.json    run summary and check list
    plot_data.csv  per-slice series (time, energy, energy defect, error, ...)
    field.stf      final field in the snapshot format of ``fieldio``
"""

from __future__ import annotations

import argparse
import csv
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .checks import TheoremCheck, checks_summary, energy_balance, write_checks_csv
from .fieldio import FieldFormatError, read_raw, write_field
from .flux import FluxModel
from .functional import FunctionalSpec, evaluate, first_variation_report, tangent_pairing
from .grid import FieldDataError, Grid, SpaceTimeField, TimeGrid, grad_inner, l2_inner, project_admissible
from .minimize import CertifyTolerances, MinimizeConfig, certify_field, initial_field, minimize
from .oracle import AnalyticCase, OracleConfigError, compare, heat_flow_exact, reference_solve
from .verify import cutoff_sweep, heat_demo, st_distance, two_mode_field

EXPERIMENTS = ("heat-demo", "taylor-green", "cutoff-sweep", "gradcheck", "oracle-compare", "certify")


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


KEYS = {
    "seed": int, "nx": int, "ny": int, "lx": float, "ly": float, "m": int, "T": float, "nu": float,
    "flux": str, "n": float, "v0": str, "k": _ints, "modes": str, "peak_sq": float, "field_file": str,
    "max_iters": int, "tol_W": float, "tol_grad": float, "memory": int, "init": str, "objective": str,
    "precondition": _bool, "levels": _floats, "reference_steps": int, "steps": int,
    "tol_gap": float, "tol_energy": float, "tol_weak": float, "tol_error": float, "tol_saturation": float,
    "tol_fd": float, "tol_variation": float, "directions": int, "fd_step": float,
}

COMMON = {"nx": 64, "ny": 64, "lx": 2 * math.pi, "ly": 2 * math.pi, "m": 64, "T": 1.0, "nu": 1.0,
          "max_iters": 200, "tol_W": 1e-6, "tol_grad": 1e-12, "memory": 10, "init": "constant",
          "objective": "rewrite", "precondition": True, "tol_gap": 1e-6, "tol_energy": 1e-3,
          "tol_weak": 1e-3, "peak_sq": 10.0, "k": (1, 0), "modes": "1,0,1;1,1,0.5;2,1,0.25"}

DEFAULTS = {
    "heat-demo": {"v0": "heat_mode", "flux": "zero", "tol_error": 1e-3},
    "taylor-green": {"v0": "taylor_green", "flux": "cutoff", "n": 4.0, "tol_error": 1e-2},
    "cutoff-sweep": {"v0": "taylor_green", "levels": (1.0, 4.0, 16.0), "tol_saturation": 1e-5},
    "gradcheck": {"nx": 16, "ny": 16, "m": 8, "flux": "cutoff", "n": 10.0, "v0": "random",
                  "directions": 20, "fd_step": 1e-4, "tol_fd": 1e-6, "tol_variation": 1e-3},
    "oracle-compare": {"v0": "two_mode", "flux": "exact", "steps": 512, "tol_error": 1e-2},
    "certify": {"flux": "cutoff", "n": 4.0, "v0": "file"},
}

DESCRIPTIONS = {
    "heat-demo": (
        "Minimizes the space-time heat objective\n"
        "  1/2 [ int int (nu |grad u|^2 + (1/nu) |grad inv_lap(d_t u)|^2) + |u(T)|^2 ]\n"
        "from the constant-in-time start.  Checks that the residual W = u - inv_lap(d_t u)/nu\n"
        "vanishes (relative tol_W), also on the last interval (W(T) = 0), and that the\n"
        "minimizer matches the continuum heat flow exp(nu lap t) v0 (tol_error)."),
    "taylor-green": (
        "Minimizes the Navier-Stokes objective with the cutoff flux for the Taylor-Green\n"
        "datum (cos x sin y, -sin x cos y).  Certificate: W residual (tol_W), functional gap\n"
        "I(u) - |v0|^2/2 (tol_gap), energy equality\n"
        "  1/2 |u(t)|^2 + nu int_0^t |grad u|^2 = 1/2 |v0|^2   per slice (tol_energy),\n"
        "weak-form residual over the 20-function battery (tol_weak), and the error against\n"
        "(cos x sin y, -sin x cos y) exp(-2 nu t) (tol_error)."),
    "cutoff-sweep": (
        "Minimizes once per cutoff level n in `levels` (flux f_n(|u|^2) u (x) u + g_n(|u|^2) I).\n"
        "Checks the limit n -> infinity: consecutive saturated levels (n >= sup |u|^2)\n"
        "agree to tol_saturation, distances between consecutive levels do not grow once\n"
        "saturated, the energy inequality\n"
        "  nu int_0^t |grad u|^2 <= 1/2 (|v0|^2 - |u(t)|^2)   up to tol_energy,\n"
        "and, with reference_steps set, distances to the exact-flux time-stepper do not grow.\n"
        "Levels whose certificate fails mark the sweep inconclusive."),
    "gradcheck": (
        "Random admissible u.  Checks the discrete gradient against central differences\n"
        "in `directions` random admissible directions (tol_fd, both objective forms), and\n"
        "the continuous first-variation formula\n"
        "  int int nu grad W : grad d + d_t d . W - (F'(u) d) : grad W\n"
        "against <grad, d> on smooth data (tol_variation)."),
    "oracle-compare": (
        "Minimizes the Navier-Stokes objective and integrates the same equation with the\n"
        "pseudo-spectral RK4 time-stepper (`steps` steps).  Checks their relative space-time\n"
        "L2 distance (tol_error)."),
    "certify": (
        "Reads `field_file` and certifies it: W residual (tol_W), functional gap (tol_gap),\n"
        "energy equality (tol_energy) and weak-form residual (tol_weak)."),
}


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    out = {}
    for key, value in raw.items():
        try:
            out[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


def resolve_config(experiment: str, given: dict, seed: int | None) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[experiment])
    cfg.update(given)
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise ConfigError("a seed is required (config key `seed` or --seed)")
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return cfg


def _grids(cfg):
    try:
        return Grid(cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"]), TimeGrid(cfg["m"], cfg["T"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _flux(cfg) -> FluxModel:
    kind = cfg.get("flux", "exact")
    try:
        if kind == "exact":
            return FluxModel.exact()
        if kind == "zero":
            return FluxModel.zero()
        if kind == "cutoff":
            return FluxModel.cutoff(cfg.get("n", 0.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown flux {kind!r} (exact | cutoff | zero)")


def _parse_modes(text):
    modes = []
    for chunk in text.split(";"):
        parts = _floats(chunk)
        if len(parts) != 3:
            raise ConfigError("modes entries are k1,k2,amplitude separated by ';'")
        modes.append(((int(parts[0]), int(parts[1])), parts[2]))
    return modes


def _initial(cfg, grid: Grid, time: TimeGrid):
    """(v0, analytic case or None, preloaded field or None)."""
    preset = cfg["v0"]
    nu = cfg["nu"]
    if preset in ("heat_mode", "heat_modes", "taylor_green") and (grid.lx != 2 * math.pi or grid.ly != 2 * math.pi):
        raise ConfigError(f"preset {preset} is defined on the 2*pi torus")
    if preset == "heat_mode":
        case = AnalyticCase.heat_mode(tuple(cfg["k"]), nu)
    elif preset == "heat_modes":
        case = AnalyticCase.heat_modes(_parse_modes(cfg["modes"]), nu)
    elif preset == "taylor_green":
        case = AnalyticCase.taylor_green(nu)
    elif preset == "zero":
        return np.zeros((2,) + grid.shape), None, None
    elif preset == "two_mode":
        return two_mode_field(grid, cfg["seed"], cfg["peak_sq"]), None, None
    elif preset == "random":
        rng = np.random.default_rng(cfg["seed"])
        data = project_admissible(rng.standard_normal((time.m + 1, 2) + grid.shape), grid)
        return data[0], None, SpaceTimeField(data, grid, time)
    elif preset == "file":
        if "field_file" not in cfg:
            raise ConfigError("v0 = file needs field_file")
        path = Path(cfg["field_file"])
        if not path.is_file():
            raise ConfigError(f"field file {path} does not exist")
        try:
            data, g2, t2 = read_raw(path)
            fieldv = SpaceTimeField(data, g2, t2)
        except (FieldFormatError, FieldDataError, ValueError) as exc:
            raise ConfigError(f"field file {path}: {exc}") from None
        return fieldv.v0, None, fieldv
    else:
        raise ConfigError(f"unknown v0 preset {preset!r}")
    return case.initial(grid), case, None


def _minimize_config(cfg) -> MinimizeConfig:
    try:
        return MinimizeConfig(max_iters=cfg["max_iters"], tol_grad=cfg["tol_grad"], tol_W=cfg["tol_W"],
                              memory=cfg["memory"], precondition=cfg["precondition"], objective=cfg["objective"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _tolerances(cfg) -> CertifyTolerances:
    return CertifyTolerances(cfg["tol_W"], cfg["tol_gap"], cfg["tol_energy"], cfg["tol_weak"])


# -- experiments ----------------------------------------------------------------
# Each returns (checks, summary dict, final field or None, plot rows).

def _plot_rows(u: SpaceTimeField, nu: float, truth=None):
    g = u.grid
    e = 0.5 * l2_inner(u.data, u.data, g)
    diss = grad_inner(u.data, u.data, g)
    bal = energy_balance(u, nu)
    err = None
    if truth is not None:
        d = u.data - truth
        err = np.sqrt(l2_inner(d, d, g))
    rows = []
    for j, t in enumerate(u.time.times):
        row = {"slice": j, "t": float(t), "energy": float(e[j]), "dissipation_rate": float(nu * diss[j]),
               "energy_defect": float(bal[j])}
        if err is not None:
            row["error_l2"] = float(err[j])
        rows.append(row)
    return rows


def _run_heat(cfg, grid, time):
    v0, case, _ = _initial(cfg, grid, time)
    truth = case.sample(grid, time) if case is not None else None
    rep = heat_demo(v0, time.t_final, grid, time.m, cfg["nu"], _minimize_config(cfg), truth,
                    cfg["tol_W"], cfg["tol_error"])
    u = rep.run.final_field
    ref = truth if truth is not None else heat_flow_exact(v0, grid, time, cfg["nu"])
    summary = {"minimize": rep.run.as_dict(), "w_ratio": rep.w_ratio, "terminal_w": rep.terminal_w,
               "error": rep.error.as_dict()}
    return list(rep.checks), summary, u, _plot_rows(u, cfg["nu"], ref)


def _run_taylor_green(cfg, grid, time):
    v0, case, _ = _initial(cfg, grid, time)
    spec = FunctionalSpec("navier_stokes", v0, _flux(cfg), cfg["nu"])
    run = minimize(spec, initial_field(v0, grid, time, cfg["init"], cfg["nu"]), _minimize_config(cfg))
    cert = certify_field(run.final_field, spec, _tolerances(cfg), run.converged_by)
    checks = list(cert.checks)
    summary = {"minimize": run.as_dict(), "certificate_passed": cert.passed}
    truth = None
    if case is not None:
        truth = case.sample(grid, time)
        err = compare(run.final_field, truth)
        checks.append(TheoremCheck("analytic_error", err.relative_l2, cfg["tol_error"], {"case": case.name}))
        summary["error"] = err.as_dict()
    return checks, summary, run.final_field, _plot_rows(run.final_field, cfg["nu"], truth)


def _run_sweep(cfg, grid, time):
    v0, _, _ = _initial(cfg, grid, time)
    sweep = cutoff_sweep(v0, cfg["nu"], time, grid, cfg["levels"], _minimize_config(cfg),
                         cfg.get("reference_steps"), cfg["tol_saturation"], _tolerances(cfg))
    summary = {"status": sweep.status, "inconclusive_levels": list(sweep.inconclusive_levels),
               "levels": sweep.table(),
               "failed_certificates": {f"{r.n:g}": list(r.failed_checks) for r in sweep.results}}
    last = sweep.results[-1].run.final_field
    return list(sweep.checks), summary, last, _plot_rows(last, cfg["nu"])


def _run_gradcheck(cfg, grid, time):
    v0, _, u = _initial(cfg, grid, time)
    if u is None:
        rng = np.random.default_rng(cfg["seed"])
        later = v0 + 0.3 * project_admissible(rng.standard_normal((time.m, 2) + grid.shape), grid)
        u = SpaceTimeField.from_slices(v0, later, grid, time)
    rng = np.random.default_rng([cfg["seed"], 1])
    spec = FunctionalSpec("navier_stokes" if cfg["flux"] != "zero" else "heat", u.v0, _flux(cfg), cfg["nu"])
    checks, summary = [], {}
    scale = float(np.sqrt(np.mean(u.data ** 2)))
    s = cfg["fd_step"] * max(scale, 1e-300)
    for objective in ("defining", "rewrite"):
        ev = evaluate(u, spec, with_gradient=True, objective=objective)
        worst = 0.0
        for _ in range(cfg["directions"]):
            d = np.zeros_like(u.data)
            d[1:] = project_admissible(rng.standard_normal((time.m, 2) + grid.shape), grid)
            d /= float(np.sqrt(np.mean(d ** 2)))

            def f(sign):
                e = evaluate(u.replace_later(u.data[1:] + sign * s * d[1:]), spec)
                return e.value if objective == "defining" else e.value_via_rewrite
            fd = (f(1) - f(-1)) / (2 * s)
            an = tangent_pairing(ev.grad, d, grid)
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-300))
        checks.append(TheoremCheck(f"gradient_fd[{objective}]", worst, cfg["tol_fd"],
                                   {"directions": cfg["directions"], "step": s, "flux": spec.flux.label}))
    # continuous first-variation formula on smooth data
    sg, st = Grid(32, 32), TimeGrid(32, time.t_final)
    x, y = sg.coords
    ts = st.times[:, None, None]
    base = np.stack([np.cos(x) * np.sin(y), -np.sin(x) * np.cos(y)])
    extra = np.stack([np.zeros_like(x), np.sin(x)])
    smooth = (np.exp(-0.5 * ts)[:, None] * base + (ts * (1 - 0.3 * ts))[:, None] * extra)
    su = SpaceTimeField(project_admissible(smooth, sg), sg, st)
    sspec = FunctionalSpec(spec.kind, su.v0, spec.model, cfg["nu"])
    shape = base + np.stack([np.zeros_like(x), np.sin(2 * x)])
    delta = np.stack([np.sin(np.pi * t / (2 * st.t_final)) * shape for t in st.times])
    delta = project_admissible(delta, sg)
    delta[0] = 0.0
    g_pair = tangent_pairing(evaluate(su, sspec, True).grad, delta, sg)
    fv = first_variation_report(su, delta, sspec)
    rel = abs(g_pair - fv) / max(abs(g_pair), 1e-300)
    checks.append(TheoremCheck("first_variation_agreement", rel, cfg["tol_variation"],
                               {"grad_pairing": g_pair, "formula": fv}))
    summary["first_variation"] = {"grad_pairing": g_pair, "formula": fv}
    return checks, summary, u, _plot_rows(u, cfg["nu"])


def _run_oracle(cfg, grid, time):
    v0, case, _ = _initial(cfg, grid, time)
    model = _flux(cfg)
    spec = FunctionalSpec("navier_stokes" if model.kind != "zero" else "heat", v0, model, cfg["nu"])
    run = minimize(spec, initial_field(v0, grid, time, cfg["init"], cfg["nu"]), _minimize_config(cfg))
    try:
        ref = reference_solve(v0, cfg["nu"], time, cfg["steps"], model, grid)
    except OracleConfigError as exc:
        raise ConfigError(str(exc)) from None
    err = compare(run.final_field, ref)
    checks = [TheoremCheck("variational_vs_reference", err.relative_l2, cfg["tol_error"],
                           {"steps": cfg["steps"], "flux": model.label}),
              TheoremCheck("minimizer_w_residual", run.trace[-1].w_ratio, cfg["tol_W"],
                           {"converged_by": run.converged_by})]
    summary = {"minimize": run.as_dict(), "error": err.as_dict(), "reference_max_divergence": ref.max_divergence}
    if case is not None:
        summary["reference_vs_analytic"] = compare(ref.field(), case).as_dict()
    return checks, summary, run.final_field, _plot_rows(run.final_field, cfg["nu"], ref.data)


def _run_certify(cfg, grid, time):
    _, _, u = _initial(cfg, grid, time)
    if u is None:
        raise ConfigError("certify needs v0 = file and field_file")
    spec = FunctionalSpec("navier_stokes" if _flux(cfg).kind != "zero" else "heat", u.v0, _flux(cfg), cfg["nu"])
    cert = certify_field(u, spec, _tolerances(cfg))
    return list(cert.checks), {"certificate_passed": cert.passed}, u, _plot_rows(u, cfg["nu"])


RUNNERS = {"heat-demo": _run_heat, "taylor-green": _run_taylor_green, "cutoff-sweep": _run_sweep,
           "gradcheck": _run_gradcheck, "oracle-compare": _run_oracle, "certify": _run_certify}


# -- output -------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _format_value(v):
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_artifacts(out: Path, experiment, cfg, checks, summary, u, rows):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.txt", "w") as fh:
        fh.write(f"# varns {__version__} experiment {experiment}\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {_format_value(cfg[key])}\n")
    write_checks_csv(checks, out / "checks.csv")
    report = {"experiment": experiment, "version": __version__, "config": cfg,
              **checks_summary(checks), "summary": summary}
    with open(out / "report.json", "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if rows:
        keys = list(rows[0])
        with open(out / "plot_data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for r in rows:
                w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    if u is not None:
        write_field(out / "field.stf", u)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varns", description="Space-time variational Navier-Stokes experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=DESCRIPTIONS[name].splitlines()[0])
        sp.add_argument("--config", type=Path, help="flat key = value config file")
        sp.add_argument("--out", type=Path, help="output directory (default: runs/<experiment>)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
    d = sub.add_parser("describe", help="print what an experiment checks and its default tolerances")
    d.add_argument("name")
    return p


def describe(name: str) -> str:
    if name not in DESCRIPTIONS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    defaults = dict(COMMON)
    defaults.update(DEFAULTS[name])
    tol = {k: v for k, v in sorted(defaults.items()) if k.startswith("tol")}
    lines = [name, "", DESCRIPTIONS[name], "", "default tolerances:"]
    lines += [f"  {k} = {_format_value(v)}" for k, v in tol.items()]
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "describe":
            print(describe(args.name))
            return 0
        given = {}
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file {args.config} does not exist")
            given = parse_config_text(args.config.read_text())
        cfg = resolve_config(args.command, given, args.seed)
        grid, time = _grids(cfg)
        _flux(cfg)
        _minimize_config(cfg)
        checks, summary, u, rows = RUNNERS[args.command](cfg, grid, time)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path("runs") / args.command
    write_artifacts(out, args.command, cfg, checks, summary, u, rows)
    failed = [c.name for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  defect={c.defect:.3e}  tol={c.tolerance:.1e}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
