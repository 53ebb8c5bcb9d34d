"""Batch front end: config-driven pipelines emitting CSV artifacts.

Config files are line-oriented ``section.key = value`` text with ``#``
comments; unknown sections or keys are rejected.  Every run either
completes all its artifacts or removes the partial ones, and failures
print a single machine-parsable line (CONFIG_INVALID, IO_ERROR,
TOLERANCE_EXCEEDED, AUDIT_VIOLATIONS, RUNTIME_FAILURE) to stderr.
Outputs carry no timestamps and print floats via repr, so reruns with the
same config and seed are bit-identical.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .core import Quadrature, audit_conditions
from .kou import GaussianBump, KouSpec, LinearKouTriplet, build_field, fourier_reference
from .pide import SpatialGrid, restart, solve
from .simulate import mc_lower_bound
from .transform import exponential_tails, power_tails, quantile_k, verify_transport

__all__ = ["RunConfig", "main", "parse_config"]

SUBCOMMANDS = ("solve", "simulate", "validate", "fourier-check", "transform", "dpp-check")


class ConfigError(ValueError):
    """Config text failed parsing or semantic validation."""


def _floats(raw: str):
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip() != "")
    except ValueError as e:
        raise ConfigError(f"bad float list {raw!r}") from e


_SCHEMA = {
    "model": {
        "b_lo": float, "b_hi": float, "a_lo": float, "a_hi": float,
        "lam_lo": float, "lam_hi": float, "lam_star": float, "lam_floor": float,
    },
    "control": {"resolution": int},
    "pide": {
        "x_min": float, "x_max": float, "nx": int, "t_horizon": float,
        "cfl_safety": float, "z_cut": float, "nz": int,
    },
    "psi": {"kind": ("gaussian", "tanh", "constant"), "amplitude": float,
            "center": float, "width": float},
    "mc": {"paths": int, "dt": float, "seed": int, "tolerance": float},
    "fourier": {"check_points": _floats, "tolerance": float, "n_xi": int, "xi_max": float},
    "dpp": {"tolerance": float, "restart_safety": float, "inner_fraction": float},
    "transform": {
        "family": ("exponential", "power"), "lam": float, "lam_star": float,
        "alpha": float, "c_target": float, "c_reference": float,
        "y_abs_min": float, "y_abs_max": float, "n_points": int, "tol": float,
        "thresholds": _floats, "tolerance": float, "z_max": float,
    },
    "audit": {"sample_budget": int, "seed": int},
    "output": {"directory": str},
}

_DEFAULTS = {
    "model": {"b_lo": 0.05, "b_hi": 0.05, "a_lo": 0.2, "a_hi": 0.2,
              "lam_lo": 1.5, "lam_hi": 1.5, "lam_star": 1.5, "lam_floor": 0.5},
    "control": {"resolution": 2},
    "pide": {"x_min": -10.0, "x_max": 10.0, "nx": 801, "t_horizon": 1.0,
             "cfl_safety": 0.9, "z_cut": 10.0, "nz": 401},
    "psi": {"kind": "gaussian", "amplitude": 1.0, "center": 0.0, "width": 1.0},
    "mc": {"paths": 10000, "dt": 1e-3, "seed": 12345, "tolerance": 1e-2},
    "fourier": {"check_points": (-1.0, 0.0, 1.0), "tolerance": 1e-2,
                "n_xi": 4097, "xi_max": 0.0},
    "dpp": {"tolerance": 2e-2, "restart_safety": 0.45, "inner_fraction": 0.6},
    "transform": {"family": "exponential", "lam": 1.0, "lam_star": 2.0,
                  "alpha": 1.5, "c_target": 1.0, "c_reference": 2.0,
                  "y_abs_min": 0.05, "y_abs_max": 4.0, "n_points": 41,
                  "tol": 1e-9, "thresholds": (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0),
                  "tolerance": 1e-6, "z_max": 1e6},
    "audit": {"sample_budget": 64, "seed": 0},
    "output": {"directory": "out"},
}


class RunConfig:
    """Validated, typed view of the config sections."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def set_entry(self, section: str, key: str, raw: str) -> None:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        conv = _SCHEMA[section][key]
        if isinstance(conv, tuple):
            if raw not in conv:
                raise ConfigError(f"{section}.{key} must be one of {conv}, got {raw!r}")
            self.values[section][key] = raw
        elif conv is str:
            self.values[section][key] = raw
        else:
            try:
                self.values[section][key] = conv(raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from e

    def validate(self) -> None:
        p = self["pide"]
        if not p["x_min"] < p["x_max"]:
            raise ConfigError("pide.x_min must be below pide.x_max")
        if p["nx"] < 3 or p["nz"] < 3:
            raise ConfigError("pide.nx and pide.nz must be >= 3")
        if not 0 < p["cfl_safety"] <= 1:
            raise ConfigError("pide.cfl_safety must be in (0, 1]")
        if p["t_horizon"] <= 0 or p["z_cut"] <= 0:
            raise ConfigError("pide.t_horizon and pide.z_cut must be positive")
        if self["control"]["resolution"] < 1:
            raise ConfigError("control.resolution must be >= 1")
        if self["psi"]["width"] <= 0:
            raise ConfigError("psi.width must be positive")
        m = self["mc"]
        if m["paths"] < 2 or m["dt"] <= 0 or m["tolerance"] <= 0:
            raise ConfigError("mc section out of range")
        f = self["fourier"]
        if f["n_xi"] < 3 or f["tolerance"] <= 0 or f["xi_max"] < 0:
            raise ConfigError("fourier section out of range")
        d = self["dpp"]
        if d["tolerance"] <= 0 or not 0 < d["restart_safety"] <= 1 or not 0 < d["inner_fraction"] <= 1:
            raise ConfigError("dpp section out of range")
        t = self["transform"]
        if t["n_points"] < 1 or t["tol"] <= 0 or t["tolerance"] <= 0 or t["z_max"] <= 0:
            raise ConfigError("transform section out of range")
        if not 0 < t["y_abs_min"] < t["y_abs_max"]:
            raise ConfigError("need 0 < transform.y_abs_min < transform.y_abs_max")
        if any(v == 0 for v in t["thresholds"]):
            raise ConfigError("transform.thresholds must be nonzero")
        if self["audit"]["sample_budget"] < 1:
            raise ConfigError("audit.sample_budget must be >= 1")
        try:
            self.kou_spec().validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def kou_spec(self) -> KouSpec:
        m = self["model"]
        return KouSpec(
            b_lo=m["b_lo"], b_hi=m["b_hi"], a_lo=m["a_lo"], a_hi=m["a_hi"],
            lam_lo=m["lam_lo"], lam_hi=m["lam_hi"],
            lam_star=m["lam_star"], lam_floor=m["lam_floor"],
        )

    def field(self):
        p = self["pide"]
        return build_field(
            self.kou_spec(),
            self["control"]["resolution"],
            z_cut=p["z_cut"],
            nz=p["nz"],
            state_box=(p["x_min"], p["x_max"]),
        )

    def grid(self) -> SpatialGrid:
        p = self["pide"]
        return SpatialGrid(x_min=p["x_min"], x_max=p["x_max"], nx=p["nx"])

    def psi(self):
        s = self["psi"]
        if s["kind"] == "gaussian":
            return GaussianBump(s["amplitude"], s["center"], s["width"]).value
        if s["kind"] == "tanh":
            amp, c, w = s["amplitude"], s["center"], s["width"]
            return lambda x: amp * np.tanh((np.asarray(x, dtype=float) - c) / w)
        amp = s["amplitude"]
        return lambda x: amp + 0.0 * np.asarray(x, dtype=float)


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig({s: dict(v) for s, v in _DEFAULTS.items()})
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, rhs = line.split("=", 1)
        lhs = lhs.strip()
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} missing section prefix")
        section, key = lhs.split(".", 1)
        cfg.set_entry(section.strip(), key.strip(), rhs.strip())
    return cfg


class _Artifacts:
    """Tracks written files so failed runs can remove partial output."""

    def __init__(self, outdir: str):
        self.outdir = outdir
        self.written: list = []

    def write(self, name: str, content: str) -> str:
        path = os.path.join(self.outdir, name)
        self.written.append(path)
        with open(path, "w") as fh:
            fh.write(content)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            try:
                os.unlink(path)
            except OSError:
                pass


def _csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _meta_text(metadata: dict) -> str:
    lines = []
    for key in sorted(metadata):
        val = metadata[key]
        if isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def _value_csv(fieldU) -> str:
    xs = fieldU.grid.xs()
    lines = ["t,x,u"]
    for t, row in zip(fieldU.times, fieldU.values):
        for x, v in zip(xs, row):
            lines.append(f"{float(t)!r},{float(x)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def _run_solve(cfg: RunConfig, art: _Artifacts):
    p = cfg["pide"]
    fieldU = solve(cfg.field(), cfg.psi(), p["t_horizon"], cfg.grid(), p["cfl_safety"])
    art.write("u.csv", _value_csv(fieldU))
    art.write("meta.txt", _meta_text(fieldU.metadata))
    return 0, None


def _run_simulate(cfg: RunConfig, art: _Artifacts):
    p, m = cfg["pide"], cfg["mc"]
    T = p["t_horizon"]
    field = cfg.field()
    psi = cfg.psi()
    fieldU = solve(field, psi, T, cfg.grid(), p["cfl_safety"])
    mean, stderr, pide_value = mc_lower_bound(
        field, fieldU, psi, 0.5 * (p["x_min"] + p["x_max"]), T,
        m["dt"], m["paths"], m["seed"],
    )
    art.write("mc.csv", _csv("mean,stderr,pide_value", [(mean, stderr, pide_value)]))
    slack = 3.0 * stderr + m["tolerance"]
    if mean > pide_value + slack:
        return 1, f"TOLERANCE_EXCEEDED: mc mean {mean!r} above pide {pide_value!r} + {slack!r}"
    if cfg.kou_spec().degenerate and abs(mean - pide_value) > slack:
        return 1, f"TOLERANCE_EXCEEDED: degenerate mc mean {mean!r} vs pide {pide_value!r}"
    return 0, None


def _run_validate(cfg: RunConfig, art: _Artifacts):
    a = cfg["audit"]
    audit = audit_conditions(cfg.field(), a["sample_budget"], a["seed"])
    lines = [
        f"passed = {audit.passed}",
        f"lipschitz_constant_estimate = {audit.lipschitz_constant_estimate!r}",
        f"sup_drift_dispersion = {audit.sup_drift_dispersion!r}",
        f"sup_jump_moment = {audit.sup_jump_moment!r}",
        f"coefficient_bound = {audit.coefficient_bound!r}",
        f"n_violations = {len(audit.violations)}",
    ]
    for kind, witness in audit.violations:
        lines.append(f"violation = {kind} {witness}")
    art.write("audit.txt", "\n".join(lines) + "\n")
    if not audit.passed:
        return 1, f"AUDIT_VIOLATIONS: n={len(audit.violations)}"
    return 0, None


def _run_fourier_check(cfg: RunConfig, art: _Artifacts):
    spec = cfg.kou_spec()
    if not spec.degenerate:
        raise ConfigError("fourier-check needs a degenerate model (collapsed intervals)")
    if cfg["psi"]["kind"] != "gaussian":
        raise ConfigError("fourier-check needs psi.kind = gaussian")
    p, f = cfg["pide"], cfg["fourier"]
    T = p["t_horizon"]
    s = cfg["psi"]
    bump = GaussianBump(s["amplitude"], s["center"], s["width"])
    field = cfg.field()
    fieldU = solve(field, bump.value, T, cfg.grid(), p["cfl_safety"])
    triplet = LinearKouTriplet(b=cfg["model"]["b_lo"], a=cfg["model"]["a_lo"],
                               lam=cfg["model"]["lam_lo"])
    xi_max = f["xi_max"] if f["xi_max"] > 0 else None
    rows = []
    worst = 0.0
    for x0 in f["check_points"]:
        pv = float(fieldU.terminal_value(x0))
        fv = fourier_reference(triplet, bump, T, x0, xi_max=xi_max, n_xi=f["n_xi"])
        rows.append((x0, pv, fv, pv - fv))
        worst = max(worst, abs(pv - fv))
    art.write("fourier.csv", _csv("x0,pide,fourier,diff", rows))
    if worst > f["tolerance"]:
        return 1, f"TOLERANCE_EXCEEDED: fourier diff {worst!r} > {f['tolerance']!r}"
    return 0, None


def _run_transform(cfg: RunConfig, art: _Artifacts):
    t = cfg["transform"]
    if t["family"] == "exponential":
        if not 0 < t["lam"] <= t["lam_star"]:
            raise ConfigError("need 0 < transform.lam <= transform.lam_star")
        tails = exponential_tails(t["lam"], t["lam_star"])
    else:
        tails = power_tails(t["alpha"], t["c_target"], t["c_reference"])
    ys_pos = np.geomspace(t["y_abs_min"], t["y_abs_max"], t["n_points"])
    ys = np.concatenate([-ys_pos[::-1], ys_pos])
    rows = [(y, quantile_k(tails, float(y), t["tol"], z_max=t["z_max"])) for y in ys]
    art.write("k.csv", _csv("y,k", rows))
    quad = Quadrature(nodes=ys, weights=np.zeros_like(ys), z_cut=float(t["y_abs_max"]))
    err = verify_transport(tails, quad, t["thresholds"], tol=t["tol"], z_max=t["z_max"])
    if err > t["tolerance"]:
        return 1, f"TOLERANCE_EXCEEDED: transport error {err!r} > {t['tolerance']!r}"
    return 0, None


def _run_dpp_check(cfg: RunConfig, art: _Artifacts):
    p, d = cfg["pide"], cfg["dpp"]
    T = p["t_horizon"]
    field = cfg.field()
    grid = cfg.grid()
    direct = solve(field, cfg.psi(), T, grid, p["cfl_safety"], checkpoints=(0.5 * T,))
    two_step = restart(direct, field, 0.5 * T, 0.5 * T, safety=d["restart_safety"])
    mask = grid.inner_mask(d["inner_fraction"])
    xs = grid.xs()[mask]
    u_direct = direct.values[-1][mask]
    u_restart = two_step.values[-1][mask]
    rows = list(zip(xs, u_direct, u_restart, u_direct - u_restart))
    art.write("dpp.csv", _csv("x,u_direct,u_restart,diff", rows))
    worst = float(np.max(np.abs(u_direct - u_restart)))
    if worst > d["tolerance"]:
        return 1, f"TOLERANCE_EXCEEDED: dpp gap {worst!r} > {d['tolerance']!r}"
    return 0, None


_RUNNERS = {
    "solve": _run_solve,
    "simulate": _run_simulate,
    "validate": _run_validate,
    "fourier-check": _run_fourier_check,
    "transform": _run_transform,
    "dpp-check": _run_dpp_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sublevy",
        description="Robust jump-diffusion semigroup pipelines (solve, simulate, checks).",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="path to a section.key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override section.key=value (repeatable)")
    parser.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, default=None, help="override mc.seed and audit.seed")
    args = parser.parse_args(argv)

    text = ""
    if args.config is not None:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as e:
            print(f"IO_ERROR: {e}", file=sys.stderr)
            return 2
    try:
        cfg = parse_config(text)
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set needs key=value, got {item!r}")
            lhs, rhs = item.split("=", 1)
            if "." not in lhs:
                raise ConfigError(f"--set key {lhs!r} missing section prefix")
            section, key = lhs.split(".", 1)
            cfg.set_entry(section.strip(), key.strip(), rhs.strip())
        if args.seed is not None:
            cfg["mc"]["seed"] = args.seed
            cfg["audit"]["seed"] = args.seed
        cfg.validate()
    except ConfigError as e:
        print(f"CONFIG_INVALID: {e}", file=sys.stderr)
        return 2

    outdir = args.out if args.out is not None else cfg["output"]["directory"]
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as e:
        print(f"IO_ERROR: {e}", file=sys.stderr)
        return 2

    art = _Artifacts(outdir)
    try:
        code, message = _RUNNERS[args.subcommand](cfg, art)
    except ConfigError as e:
        art.cleanup()
        print(f"CONFIG_INVALID: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        art.cleanup()
        print(f"IO_ERROR: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        art.cleanup()
        print(f"RUNTIME_FAILURE: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    if code != 0:
        print(message, file=sys.stderr)
        return code
    for path in art.written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
