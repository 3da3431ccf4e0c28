"""Command-line interface.

Subcommands
-----------
run            full pipeline for one preset experiment and one (omega, N)
baseline       plain bilinear interior-penalty run (no enrichment)
reference      pseudospectral reference field only
offline-build  precompute entry blocks over a polar direction grid
online-run     snap learned directions onto a store and assemble from it

Frequencies accept plain floats or multiples of pi, e.g. ``10pi``.
Options may also come from an INI file (section ``[run]``) passed with
``--config``; explicit command-line flags win over file values.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericalError, RaydgError
from .medium import Mesh, make_medium
from .driver import (
    ExperimentConfig,
    ResultRow,
    example_defaults,
    resolve_config,
    run_experiment,
    track_capture,
)
from .reference import default_resolution, reference_run
from .driver import example_data
from . import iofmt
from .offline import (
    load_store,
    offline_build,
    online_assemble,
    online_snap,
    polar_grid,
    save_store,
)


def parse_omega(text: str) -> float:
    """Parse '31.4', '10pi', '10*pi', or 'pi'."""
    s = text.strip().lower().replace(" ", "").replace("*", "")
    try:
        if s.endswith("pi"):
            head = s[:-2]
            factor = 1.0 if head in ("", "+") else -1.0 if head == "-" else float(head)
            return factor * np.pi
        return float(s)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse frequency {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega", type=str, default=None, help="frequency, e.g. 10pi")
    p.add_argument("--n", type=int, default=None, help="mesh cells per side")
    p.add_argument("--example", type=int, default=None, choices=(1, 2, 3, 4))
    p.add_argument("--config", type=str, default=None, help="INI file with a [run] section")
    p.add_argument("--out", type=str, default=None, help="artifact directory")
    p.add_argument("--gamma", type=float, default=None, help="interior penalty")
    p.add_argument("--eps", type=float, default=None, help="direction separation radius")
    p.add_argument("--pod", type=float, default=None, metavar="ETA",
                   help="low-rank mass conditioning threshold (0 disables)")
    p.add_argument("--dt-factor", type=float, default=None, help="step = h / factor")
    p.add_argument("--ref-n", type=int, default=None, help="reference grid override")
    p.add_argument("--ref-dt", type=float, default=None, help="reference step override")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--n-parts", type=int, default=None, help="front split count")
    p.add_argument("--threads", type=int, default=None, help="tracking threads")


_CONFIG_KEYS = {
    "example": int,
    "omega": parse_omega,
    "n": int,
    "medium": str,
    "t_final": float,
    "dt_factor": float,
    "gamma": float,
    "eps": float,
    "pod_eta": float,
    "ref_n": int,
    "ref_dt": float,
    "slice_x2": float,
    "out_dir": str,
    "n_parts": int,
    "threads": int,
}


def load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    if "run" not in parser:
        raise ConfigurationError(f"config file {path} has no [run] section")
    out = {}
    for key, raw in parser["run"].items():
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key '{key}'")
        if raw.strip() == "":
            continue
        try:
            out[key] = _CONFIG_KEYS[key](raw)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for '{key}': {raw}") from exc
    return out


def build_experiment_config(args, baseline: bool = False) -> ExperimentConfig:
    merged = {}
    if args.config:
        merged.update(load_config_file(args.config))
    cli_vals = {
        "example": args.example,
        "omega": parse_omega(args.omega) if args.omega is not None else None,
        "n": args.n,
        "t_final": args.t_final,
        "dt_factor": args.dt_factor,
        "gamma": args.gamma,
        "eps": args.eps,
        "pod_eta": args.pod,
        "ref_n": args.ref_n,
        "ref_dt": args.ref_dt,
        "out_dir": args.out,
        "n_parts": args.n_parts,
        "threads": args.threads,
    }
    for key, val in cli_vals.items():
        if val is not None:
            merged[key] = val
    if merged.get("pod_eta") == 0.0:
        merged["pod_eta"] = None
        merged["use_preset_pod"] = False
    cfg = ExperimentConfig(**{k: v for k, v in merged.items() if v is not None or k == "pod_eta"})
    if baseline:
        cfg.baseline = True
    return cfg


def _cmd_run(args) -> int:
    cfg = build_experiment_config(args, baseline=False)
    res = run_experiment(cfg)
    print(ResultRow.HEADER)
    print(res.row.to_csv())
    return 0


def _cmd_baseline(args) -> int:
    cfg = build_experiment_config(args, baseline=True)
    res = run_experiment(cfg)
    print(ResultRow.HEADER)
    print(res.row.to_csv())
    return 0


def _cmd_reference(args) -> int:
    cfg = resolve_config(build_experiment_config(args))
    medium = make_medium(cfg.medium)
    data = example_data(cfg.example)
    ref = reference_run(medium, cfg.omega, data, cfg.t_final, cfg.ref_n, cfg.ref_dt)
    out = Path(args.out or ".") / "field_ref.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    iofmt.write_field(out, ref.values, cfg.omega, cfg.t_final)
    print(f"reference grid {ref.n} written to {out}")
    return 0


def _cmd_offline_build(args) -> int:
    cfg = resolve_config(build_experiment_config(args))
    medium = make_medium(cfg.medium)
    mesh = Mesh(cfg.n)
    pre = polar_grid(args.p_lo, args.p_hi, args.delta)
    store = offline_build(
        mesh, medium, cfg.omega, cfg.gamma, pre, example_defaults(cfg.example)
    )
    save_store(args.store, store)
    print(
        f"store {args.store}: {store.directions.shape[0]} directions, "
        f"{len(store.mass)} mass, {len(store.avol)} volume, "
        f"{len(store.face)} face, {len(store.mc)} weighted blocks"
    )
    return 0


def _cmd_online_run(args) -> int:
    cfg = resolve_config(build_experiment_config(args))
    medium = make_medium(cfg.medium)
    mesh = Mesh(cfg.n)
    store = load_store(args.store)
    capture = track_capture(cfg, medium, mesh)
    raw = {
        flat: capture.raw(flat % mesh.n, flat // mesh.n)
        for flat in range(mesh.n_cells)
    }
    report = online_snap(raw, example_defaults(cfg.example), cfg.eps, store, mesh)
    from .assembly import build_basis

    space = build_basis(mesh, report.dirsets)
    system, fresh = online_assemble(space, medium, store)
    print(
        f"assembled {system.ndof} dofs from store; {fresh} fresh entry blocks; "
        f"{len(report.violations)} directions outside the annulus; "
        f"max snap deviation {report.max_deviation:.4f}"
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="raydg",
        description="Ray-enriched interior-penalty DG solver for the periodic "
        "acoustic wave equation at high frequency.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline for one (omega, N)")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", help="plain bilinear interior-penalty run")
    _add_common(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_ref = sub.add_parser("reference", help="pseudospectral reference field")
    _add_common(p_ref)
    p_ref.set_defaults(func=_cmd_reference)

    p_off = sub.add_parser("offline-build", help="precompute entry blocks")
    _add_common(p_off)
    p_off.add_argument("--store", type=str, required=True, help="output store file")
    p_off.add_argument("--delta", type=float, default=0.2, help="snapping radius")
    p_off.add_argument("--p-lo", type=float, default=0.5, help="annulus inner radius")
    p_off.add_argument("--p-hi", type=float, default=1.5, help="annulus outer radius")
    p_off.set_defaults(func=_cmd_offline_build)

    p_on = sub.add_parser("online-run", help="assemble from a store")
    _add_common(p_on)
    p_on.add_argument("--store", type=str, required=True, help="input store file")
    p_on.set_defaults(func=_cmd_online_run)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RaydgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
