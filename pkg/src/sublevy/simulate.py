"""Weak-control Monte Carlo for the controlled jump-diffusion.

Paths follow an Euler scheme for the continuous part plus compound-Poisson
jumps: the reference measure (finite mass only) drives jump times, marks
are drawn from its normalized law, and each jump applies the control's jump
map to the pre-jump state.  The continuous drift is the raw drift minus the
truncated-jump compensator, so path laws match the generator the PIDE
solver discretizes.  Estimates under the time-reversed argmax policy of a
solved field give a lower bound on the PIDE value up to scheme tolerance.

Reproducibility: paths are generated in fixed-size chunks, each from an
independent child stream of the seed, so estimates are bit-identical for a
given seed regardless of how chunks are scheduled.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import CoefficientField
from .pide import ValueField, _build_operators, _sup_generator

__all__ = [
    "CHUNK",
    "PolicySchedule",
    "SamplePath",
    "estimate_value",
    "mc_lower_bound",
    "policy_from_pide",
    "sample_path",
    "write_paths_csv",
]

CHUNK = 4096

_PROVENANCES = ("argmax-from-pide", "constant", "user")


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(chunk,)))


@dataclasses.dataclass(frozen=True)
class PolicySchedule:
    """Piecewise-constant-in-time feedback rule on a spatial cell grid.

    ``indices[m, c]`` is the control-grid index used from knot m on, for
    states nearest cell center c.  Knots start at 0 and increase strictly.
    """

    time_knots: np.ndarray
    indices: np.ndarray
    cell_centers: np.ndarray
    controls: tuple
    provenance: str

    def __post_init__(self):
        knots = np.asarray(self.time_knots, dtype=float)
        idx = np.asarray(self.indices, dtype=int)
        centers = np.asarray(self.cell_centers, dtype=float)
        object.__setattr__(self, "time_knots", knots)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "cell_centers", centers)
        if knots.ndim != 1 or knots.size == 0 or knots[0] != 0.0:
            raise ValueError("time knots must start at 0")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("time knots must increase strictly")
        if idx.shape != (knots.size, centers.size):
            raise ValueError("indices must be one row per knot over the cells")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.controls)):
            raise ValueError("control index out of range")
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"provenance must be one of {_PROVENANCES}")

    @classmethod
    def constant(cls, controls, index: int = 0) -> "PolicySchedule":
        return cls(
            time_knots=np.array([0.0]),
            indices=np.array([[index]]),
            cell_centers=np.array([0.0]),
            controls=tuple(controls),
            provenance="constant",
        )

    def control_indices(self, t: float, x) -> np.ndarray:
        """Control-grid indices for states x at elapsed time t."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = int(np.searchsorted(self.time_knots, t + 1e-12, side="right")) - 1
        m = max(m, 0)
        if self.cell_centers.size == 1:
            cells = np.zeros(x.shape, dtype=int)
        else:
            frac = np.interp(x, self.cell_centers, np.arange(self.cell_centers.size))
            cells = np.round(frac).astype(int)
        return self.indices[m, cells]


@dataclasses.dataclass(frozen=True)
class SamplePath:
    """One realized trajectory with its jump log (time, mark, applied size)."""

    times: np.ndarray
    states: np.ndarray
    jump_log: tuple


def _comp_of(field, f, probes, nodes, weights):
    """Truncated-jump compensator; scalar when the jump map is state-free."""
    h_of = field.truncation.evaluate
    ktab = np.asarray(field.jump_density_map(f, probes[:, None], nodes[None, :]), dtype=float)
    ktab = np.broadcast_to(ktab, (probes.size, nodes.size))
    if np.all(ktab == ktab[0]):
        return float(np.asarray(h_of(ktab[0]), dtype=float) @ weights)
    return None


def _simulate_chunk(
    field: CoefficientField,
    policy: PolicySchedule,
    x0: float,
    T: float,
    dt: float,
    rng: np.random.Generator,
    n: int,
    record: bool = False,
    collect_jumps: bool = False,
):
    """Advance n paths to T; returns (terminal states, extras)."""
    measure = field.reference
    mass = float(measure.total_mass)
    if math.isinf(mass):
        raise ValueError("only finite-mass jump measures can be simulated")
    if mass > 0 and measure.sampler is None:
        raise ValueError("jump measure has positive mass but no sampler")
    controls = field.control_grid.points
    quad = measure.quadrature
    n_steps = max(1, int(round(T / dt)))
    dt_eff = T / n_steps
    sq = math.sqrt(dt_eff)

    lo, hi = field.state_box
    probes = np.array([lo, 0.5 * (lo + hi), hi])
    comp_cache = [
        _comp_of(field, f, probes, quad.nodes, quad.weights) if mass > 0 else 0.0
        for f in controls
    ]
    h_of = field.truncation.evaluate

    # state-free drift/dispersion for every control allows table lookup per step
    btab = np.empty(len(controls))
    stab = np.empty(len(controls))
    tables_ok = all(c is not None for c in comp_cache)
    if tables_ok:
        for ci, f in enumerate(controls):
            bv = np.broadcast_to(np.asarray(field.drift(f, probes), dtype=float), probes.shape)
            sv = np.broadcast_to(np.asarray(field.dispersion(f, probes), dtype=float), probes.shape)
            if np.all(bv == bv[0]) and np.all(sv == sv[0]):
                btab[ci] = bv[0] - comp_cache[ci]
                stab[ci] = sv[0]
            else:
                tables_ok = False
                break

    x = np.full(n, float(x0))
    times = [0.0]
    states = [float(x[0])] if record else None
    jump_log: list = []
    jumps_applied: list = []

    for step in range(n_steps):
        t = step * dt_eff
        fidx = np.asarray(policy.control_indices(t, x), dtype=int)
        if tables_ok:
            beff = btab[fidx]
            sig = stab[fidx]
        else:
            beff = np.empty(n)
            sig = np.empty(n)
            for ci in np.unique(fidx):
                m = fidx == ci
                f = controls[ci]
                xm = x[m]
                b = np.broadcast_to(np.asarray(field.drift(f, xm), dtype=float), xm.shape)
                s = np.broadcast_to(np.asarray(field.dispersion(f, xm), dtype=float), xm.shape)
                comp = comp_cache[ci]
                if comp is None:
                    ktab = np.asarray(
                        field.jump_density_map(f, xm[:, None], quad.nodes[None, :]), dtype=float
                    )
                    ktab = np.broadcast_to(ktab, (xm.size, quad.nodes.size))
                    comp = (np.asarray(h_of(ktab), dtype=float) * quad.weights[None, :]).sum(axis=1)
                beff[m] = b - comp
                sig[m] = s
        dw = rng.standard_normal(n)
        counts = rng.poisson(mass * dt_eff, n) if mass > 0 else np.zeros(n, dtype=int)
        x = x + beff * dt_eff + sig * sq * dw
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state after diffusion step {step}")
        rounds = int(counts.max()) if counts.size else 0
        for r in range(rounds):
            act = np.flatnonzero(counts > r)
            z = measure.sampler(rng.random(act.size))
            applied = np.empty(act.size)
            fa = fidx[act]
            for ci in np.unique(fa):
                mm = fa == ci
                sel = act[mm]
                k = np.asarray(
                    field.jump_density_map(controls[ci], x[sel], z[mm]), dtype=float
                )
                applied[mm] = np.broadcast_to(k, sel.shape)
            x[act] = x[act] + applied
            if record:
                for zz, kk in zip(z, applied):
                    jump_log.append((t + dt_eff, float(zz), float(kk)))
            if collect_jumps:
                jumps_applied.append(applied)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state after jumps at step {step}")
        if record:
            times.append((step + 1) * dt_eff)
            states.append(float(x[0]))

    extras = {}
    if record:
        extras["times"] = np.asarray(times)
        extras["states"] = np.asarray(states)
        extras["jump_log"] = tuple(jump_log)
    if collect_jumps:
        extras["jumps"] = (
            np.concatenate(jumps_applied) if jumps_applied else np.empty(0)
        )
    return x, extras


def sample_path(
    field: CoefficientField,
    policy: PolicySchedule,
    x0: float,
    T: float,
    dt: float,
    seed: int,
) -> SamplePath:
    """One path, deterministic in the seed; jump marks and applied sizes logged."""
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    rng = _chunk_rng(seed, 0)
    _, extras = _simulate_chunk(field, policy, x0, T, dt, rng, 1, record=True)
    return SamplePath(times=extras["times"], states=extras["states"], jump_log=extras["jump_log"])


def _terminals(field, policy, x0, T, dt, n_paths, seed, collect_jumps=False):
    outs = []
    jumps = []
    chunk = 0
    done = 0
    while done < n_paths:
        n = min(CHUNK, n_paths - done)
        rng = _chunk_rng(seed, chunk)
        x, extras = _simulate_chunk(
            field, policy, x0, T, dt, rng, n, collect_jumps=collect_jumps
        )
        outs.append(x)
        if collect_jumps:
            jumps.append(extras["jumps"])
        done += n
        chunk += 1
    terms = np.concatenate(outs)
    if collect_jumps:
        return terms, np.concatenate(jumps) if jumps else np.empty(0)
    return terms


def estimate_value(
    field: CoefficientField,
    policy: PolicySchedule,
    psi,
    x0: float,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
):
    """Sample mean and standard error of psi at the terminal state."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    terms = _terminals(field, policy, x0, T, dt, n_paths, seed)
    vals = np.asarray(psi(terms), dtype=float)
    if vals.shape != terms.shape:
        vals = np.broadcast_to(vals, terms.shape)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_paths))
    return mean, stderr


def policy_from_pide(fieldU: ValueField, field: CoefficientField) -> PolicySchedule:
    """Time-reversed argmax policy read off a solved field.

    At elapsed time s the policy uses the stored row at remaining time
    T - s; ties pick the first control in grid order.
    """
    ops = _build_operators(field, fieldU.grid)
    mid = fieldU.grid.nx // 2
    nt = fieldU.times.size
    T = float(fieldU.times[-1])
    rows_idx = []
    for irow in range(nt - 1, -1, -1):
        u = fieldU.values[irow]
        w = u - u[mid]
        stack = np.stack([op.apply(w) for op in ops])
        rows_idx.append(np.argmax(stack, axis=0))
    knots = T - fieldU.times[::-1]
    knots[0] = 0.0
    return PolicySchedule(
        time_knots=knots,
        indices=np.asarray(rows_idx),
        cell_centers=fieldU.grid.xs(),
        controls=field.control_grid.points,
        provenance="argmax-from-pide",
    )


def mc_lower_bound(
    field: CoefficientField,
    fieldU: ValueField,
    psi,
    x0: float,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
):
    """(mean, stderr, pide_value) under the argmax policy of the solved field.

    The mean is a single-policy value, so up to scheme tolerance it sits at
    or below the PIDE value: mean <= pide_value + 3 stderr + tolerance.
    """
    if abs(float(fieldU.times[-1]) - T) > 1e-9:
        raise ValueError("fieldU horizon does not match T")
    policy = policy_from_pide(fieldU, field)
    mean, stderr = estimate_value(field, policy, psi, x0, T, dt, n_paths, seed)
    pide_value = float(fieldU.terminal_value(x0))
    return mean, stderr, pide_value


def write_paths_csv(paths, path) -> None:
    """Dump paths as CSV rows path_id,t,x,jump_flag."""
    with open(path, "w") as fh:
        fh.write("path_id,t,x,jump_flag\n")
        for pid, p in enumerate(paths):
            jump_times = {round(t, 12) for t, _, _ in p.jump_log}
            for t, xval in zip(p.times, p.states):
                flag = 1 if round(float(t), 12) in jump_times else 0
                fh.write(f"{pid},{float(t)!r},{float(xval)!r},{flag}\n")
