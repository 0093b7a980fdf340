"""Command-line front end producing reproducible data files.

Every output embeds the fully resolved configuration (a comment header in
CSV, a sibling object in JSON) so a file can be regenerated from itself.
Numbers are written with 17 significant digits.  The coherent delta line of
a spectrum is rendered to a finite-width Lorentzian only here; the library
keeps it as an exact scalar.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analytic, liouville, moments, validation
from .errors import BudgetError, ParameterError, SingularSystemError, StepSizeError
from .liouville import SpaceSpec
from .model import SystemParams, params_from_dict, params_to_dict

# config-file keys that steer a command rather than the physics
_OPTION_KEYS = {
    "omega_l", "grid", "method", "cutoff", "seed", "sweep",
    "render_width", "epsilon", "kappa_p",
}

_DEFAULT_RENDER_WIDTH = 1e-2 / math.pi


def _fmt(value: float) -> str:
    return f"{value:.16e}"


def _parse_grid(text: str, log_spaced: bool = False) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ParameterError(f"grid must be min:max:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ParameterError(f"grid must be min:max:n, got {text!r}") from exc
    if not (lo < hi and n >= 2):
        raise ParameterError(f"grid needs min < max and n >= 2, got {text!r}")
    if log_spaced:
        if lo <= 0:
            raise ParameterError("log-spaced grid needs min > 0")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _load_config(args) -> tuple[SystemParams, dict]:
    """Split the config file into physics parameters and command options.

    Command-line flags win over config-file options.
    """
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParameterError("config must be a JSON object")
    options = {key: raw.pop(key) for key in list(raw) if key in _OPTION_KEYS}
    params = params_from_dict(raw)
    for key in _OPTION_KEYS:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            options[key] = flag
    return params, options


def _resolved_config(command: str, params: SystemParams, options: dict) -> dict:
    doc = {"command": command}
    doc.update(params_to_dict(params))
    for key in sorted(options):
        doc[key] = options[key]
    return doc


def _emit(args, config: dict, header: dict, columns: list[str],
          rows: list[list[float]]) -> None:
    if getattr(args, "format", "csv") == "json":
        doc = {"config": config, "header": header, "columns": columns,
               "rows": [[float(v) for v in row] for row in rows]}
        text = json.dumps(doc, indent=2) + "\n"
    else:
        lines = [f"# config: {json.dumps(config)}"]
        lines += [f"# {key}: {value}" for key, value in header.items()]
        lines.append(",".join(columns))
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _map_ordered(fn, tasks: list, workers: int) -> list:
    """Dispatch tasks to a pool; results come back in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _chunks(grid: np.ndarray, workers: int) -> list[np.ndarray]:
    n = max(1, min(workers, len(grid)))
    return [chunk for chunk in np.array_split(grid, n) if len(chunk)]


def _grid_text(grid: np.ndarray) -> str:
    return f"{grid[0]:.17g}:{grid[-1]:.17g}:{len(grid)}"


# --- profile ----------------------------------------------------------------

_PROFILE_COLUMNS = ["omega_L", "re_r", "im_r", "re_t", "im_t", "R", "T",
                    "abs_t_sq", "n_cav", "abs_mean_field_sq", "p_exc"]
_PROFILE_MOM_COLUMNS = ["R_mom", "T_mom", "n_cav_mom",
                        "abs_mean_field_sq_mom", "p_exc_mom"]


def _profile_row(task) -> list[float]:
    params, omega_l, with_moments = task
    r, t = analytic.field_coefficients(params, omega_l)
    big_r, big_t = analytic.intensity_coefficients(params, omega_l)
    summary = analytic.steady_state_summary(params, omega_l)
    row = [omega_l, r.real, r.imag, t.real, t.imag, big_r, big_t,
           abs(t) ** 2, summary.photon_number,
           abs(summary.mean_field) ** 2, summary.p_exc]
    if with_moments:
        state = moments.steady_state(params, omega_l)
        r_mom, t_mom = moments.intensity_from_state(params, state)
        row += [r_mom, t_mom, state.s3, abs(state.s1) ** 2, state.s5]
    return row


def cmd_profile(args) -> int:
    params, options = _load_config(args)
    method = options.get("method", "analytic")
    if method not in ("analytic", "moments"):
        raise ParameterError(f"profile method must be analytic or moments, got {method!r}")
    grid = _parse_grid(options.get("grid", "-10:10:401"))
    options["method"], options["grid"] = method, options.get("grid", "-10:10:401")
    with_moments = method == "moments"
    tasks = [(params, float(om), with_moments) for om in grid]
    rows = _map_ordered(_profile_row, tasks, args.workers)
    columns = _PROFILE_COLUMNS + (_PROFILE_MOM_COLUMNS if with_moments else [])
    _emit(args, _resolved_config("profile", params, options), {}, columns, rows)
    return 0


# --- spectrum ----------------------------------------------------------------

def _regression_chunk(task):
    params, omega_l, chunk = task
    return moments.regression_spectrum(params, omega_l, chunk)


def _probe_chunk(task):
    params, omega_l, chunk, epsilon, kappa_p, space = task
    return liouville.probe_spectrum(params, omega_l, chunk, epsilon=epsilon,
                                    kappa_p=kappa_p, space=space)


def cmd_spectrum(args) -> int:
    params, options = _load_config(args)
    omega_l = float(options.get("omega_l", 0.0))
    method = options.get("method", "analytic")
    if method not in ("analytic", "moments", "probe"):
        raise ParameterError(
            f"spectrum method must be analytic, moments or probe, got {method!r}")
    if "grid" in options:
        grid = _parse_grid(options["grid"])
    elif method == "probe":
        # one steady-state solve per point: make the cost explicit
        raise ParameterError("probe spectra need an explicit --grid")
    else:
        grid = analytic.spectrum_grid(params)
    options["omega_l"], options["method"] = omega_l, method
    options["grid"] = options.get("grid", _grid_text(grid))

    if method == "analytic":
        result = analytic.emission_spectrum(params, omega_l, grid)
    elif method == "moments":
        parts = _map_ordered(_regression_chunk,
                             [(params, omega_l, c) for c in _chunks(grid, args.workers)],
                             args.workers)
        density = np.concatenate([p.incoherent_density for p in parts])
        result = parts[0]
        result = type(result)(omega_l=omega_l, grid=grid, incoherent_density=density,
                              coherent_power=result.coherent_power,
                              method=result.method, meta=result.meta)
    else:
        epsilon = float(options.get("epsilon", 1e-3))
        kappa_p = options.get("kappa_p")
        kappa_p = float(kappa_p) if kappa_p is not None else None
        cutoff = int(options.get("cutoff", 6))
        options["epsilon"], options["cutoff"] = epsilon, cutoff
        space = SpaceSpec(cavity_cutoff=cutoff, n_atoms=params.n_atoms,
                          atom_model="hp", atom_cutoff=3, probe_enabled=True)
        parts = _map_ordered(
            _probe_chunk,
            [(params, omega_l, c, epsilon, kappa_p, space)
             for c in _chunks(grid, args.workers)],
            args.workers)
        density = np.concatenate([p.incoherent_density for p in parts])
        result = parts[0]
        meta = dict(result.meta)
        result = type(result)(omega_l=omega_l, grid=grid, incoherent_density=density,
                              coherent_power=result.coherent_power,
                              method=result.method, meta=meta)

    if method == "probe":
        width = float(result.meta["kappa_p"])
        options["kappa_p"] = width
    else:
        width = float(options.get("render_width", _DEFAULT_RENDER_WIDTH))
        options["render_width"] = width
    line = width / math.pi / ((grid - omega_l) ** 2 + width ** 2)
    rendered = result.incoherent_density + result.coherent_power * line

    total = float(np.trapezoid(result.incoherent_density, grid)) + result.coherent_power
    n_cav = float(result.meta["photon_number"])
    header = {
        "method": result.method,
        "coherent_power": _fmt(result.coherent_power),
        "render_width": _fmt(width),
        "photon_number": _fmt(n_cav),
        "integral_relative_error": _fmt(abs(total - n_cav) / n_cav if n_cav else 0.0),
    }
    rows = [[float(om), float(si), float(sr)]
            for om, si, sr in zip(grid, result.incoherent_density, rendered)]
    _emit(args, _resolved_config("spectrum", params, options), header,
          ["omega", "s_incoherent", "s_rendered"], rows)
    return 0


# --- wigner -------------------------------------------------------------------

def _default_cutoff(params: SystemParams, omega_l: float) -> int:
    """Starting cavity cutoff from the closed-form photon number."""
    try:
        n_cav = analytic.steady_state_summary(params, omega_l).photon_number
    except ParameterError:
        # atoms plus jitter: bound by the empty-cavity jitter ratio
        ratio = 1.0 + params.inv_tau_jitter / params.kappa
        n_cav = abs(analytic.mean_field(params, omega_l)) ** 2 * ratio
    return int(4.0 * n_cav) + 8


def cmd_wigner(args) -> int:
    params, options = _load_config(args)
    omega_l = float(options.get("omega_l", 0.0))
    cutoff = int(options.get("cutoff", _default_cutoff(params, omega_l)))
    options["omega_l"], options["cutoff"] = omega_l, cutoff
    atoms = {} if params.n_atoms == 0 else {"atom_cutoff": 3}
    space = SpaceSpec(cavity_cutoff=cutoff, n_atoms=params.n_atoms, **atoms)
    _, trunc, space = liouville.converged_moment_state(params, omega_l, space)
    cavity = liouville.reduce_cavity(trunc)
    if "grid" in options:
        xs = ps = _parse_grid(options["grid"])
    else:
        xs, ps = liouville.wigner_grid_for_state(cavity)
        options["grid"] = _grid_text(xs)
    w = liouville.wigner(cavity, xs, ps)
    header = {
        "grid": f"x,p in [{xs[0]:.6g}, {xs[-1]:.6g}] x [{ps[0]:.6g}, {ps[-1]:.6g}], "
                f"{len(xs)}x{len(ps)} points",
        "cavity_cutoff": space.cavity_cutoff,
        "normalization_residual": _fmt(w.normalization_residual()),
        "photon_number": _fmt(w.photon_number()),
    }
    rows = [[float(x), float(p), float(w.w[i, j])]
            for i, x in enumerate(xs) for j, p in enumerate(ps)]
    _emit(args, _resolved_config("wigner", params, options), header,
          ["x", "p", "W"], rows)
    return 0


# --- height scan ---------------------------------------------------------------

def cmd_height_scan(args) -> int:
    params, options = _load_config(args)
    sweep = options.get("sweep", "dephasing_time")
    if sweep not in ("dephasing_time", "gamma_par"):
        raise ParameterError(
            f"sweep must be dephasing_time or gamma_par, got {sweep!r}")
    values = _parse_grid(options.get("grid", "0.01:100:41"), log_spaced=True)
    options["sweep"], options["grid"] = sweep, options.get("grid", "0.01:100:41")
    if sweep == "gamma_par":
        # hold the dephasing time fixed at whichever channel the config set
        t0 = min(params.tau_indiv, params.tau_common)
        if not math.isfinite(t0):
            raise ParameterError("gamma_par sweep needs a finite dephasing time")
    rows = []
    for value in values:
        if sweep == "dephasing_time":
            p_ind = params.replace(tau_indiv=value, tau_common=None)
            p_com = params.replace(tau_common=value, tau_indiv=None)
        else:
            p_ind = params.replace(gamma_par=value, tau_indiv=t0, tau_common=None)
            p_com = params.replace(gamma_par=value, tau_common=t0, tau_indiv=None)
        rep_ind = analytic.lorentzian_height(p_ind)
        rep_com = analytic.lorentzian_height(p_com)
        # gamma_perp is channel-symmetric, so C is shared by both columns
        rows.append([float(value), rep_ind.height, rep_com.height,
                     rep_ind.cooperativity])
    _emit(args, _resolved_config("height-scan", params, options), {},
          ["swept_value", "h_individual", "h_common", "C"], rows)
    return 0


# --- validate --------------------------------------------------------------------

def cmd_validate(args) -> int:
    seed = args.seed if args.seed is not None else validation.DEFAULT_SEED
    results = validation.run_all(seed=seed)
    for result in results:
        print(result.line(), file=sys.stderr)
    doc = {
        "seed": seed,
        "all_passed": all(r.passed or r.skipped for r in results),
        "results": [r.to_dict() for r in results],
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if doc["all_passed"] else 1


# --- argument parsing ---------------------------------------------------------------

def _add_io_flags(sub, with_method: bool = True) -> None:
    sub.add_argument("--config", required=True, help="JSON file with system parameters")
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--grid", help="grid as min:max:n")
    sub.add_argument("--workers", type=int, default=1,
                     help="worker processes for grid points")
    if with_method:
        sub.add_argument("--method", help="computation backend")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavlab",
        description="Steady-state optics of a driven cavity coupled to "
                    "two-level emitters.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="reflection/transmission sweep over drive frequency")
    _add_io_flags(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("spectrum", help="emission spectrum of the cavity output")
    _add_io_flags(p)
    p.add_argument("--omega-l", dest="omega_l", type=float, help="drive frequency")
    p.add_argument("--cutoff", type=int, help="cavity cutoff for the probe method")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("wigner", help="steady-state Wigner function of the cavity")
    _add_io_flags(p, with_method=False)
    p.add_argument("--omega-l", dest="omega_l", type=float, help="drive frequency")
    p.add_argument("--cutoff", type=int, help="starting cavity cutoff")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("height-scan", help="incoherent-excess height vs dephasing "
                                           "time or decay rate")
    _add_io_flags(p, with_method=False)
    p.add_argument("--sweep", choices=("dephasing_time", "gamma_par"))
    p.set_defaults(func=cmd_height_scan)

    p = sub.add_parser("validate", help="run the acceptance checks, report JSON")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--seed", type=int, help="seed for the random sweeps")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, BudgetError, SingularSystemError, StepSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
