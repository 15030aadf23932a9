"""Batch experiments over random channel realizations.

Each experiment returns a :class:`RunResult` holding per-realization rows and
a summary averaged over realizations. Every row carries ``seed`` and
``realization`` so that a single point can be re-run with
:func:`draw_realization`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, kernels
from .config import ExperimentSpec, emit_config
from .errors import GammaRangeError, SingularChannelError, UnboundedCrbError
from .metrics import (
    NoiseModel,
    achievable_capacity,
    average_ber,
    ber_lower_bound,
    ber_only_lower_bound_k,
    capacity_upper_bound,
    compute_crb,
    dbm_to_linear,
    qfunc,
    sinr_per_symbol,
)
from .montecarlo import SimConfig, simulate_ber
from .otfs import DdChannel, OtfsGrid, PathParams, dd_channel, doppler_derivative_channel, random_path_set
from .qam import QamConstellation
from .solver import (
    EigenBasis,
    PrecoderSolution,
    SolverConfig,
    ber_only_precoder,
    channel_bases,
    construct_v,
    single_symbol_precoder,
    solve_algorithm1,
)

__all__ = ["Realization", "RunResult", "draw_realization", "run_experiment", "write_outputs", "EXPERIMENTS"]


@dataclass(frozen=True)
class Realization:
    index: int
    comm_paths: tuple
    sensing_path: PathParams
    h_c: DdChannel
    h_dot: DdChannel
    comm: EigenBasis
    sensing: EigenBasis


@dataclass
class RunResult:
    kind: str
    columns: list[str]
    rows: list[dict]
    summary_columns: list[str]
    summary: list[dict]
    extra: dict = field(default_factory=dict)


def channel_rng(seed: int, realization: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, realization)))


def mc_seed(seed: int, realization: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(1, realization)).generate_state(1, np.uint64)
    return int(state[0])


def draw_realization(spec: ExperimentSpec, r: int) -> Realization:
    grid = OtfsGrid(spec.M, spec.N, spec.delta_f)
    rng = channel_rng(spec.seed, r)
    comm = random_path_set(rng, spec.paths, spec.l_max, spec.k_max,
                           fractional_doppler=spec.fractional_doppler)
    gain = 10.0 ** (spec.sensing_gain_db / 20.0) * np.exp(2j * np.pi * rng.random())
    delay = int(rng.integers(0, spec.l_max + 1))
    if spec.fractional_doppler:
        doppler = float(rng.uniform(-spec.k_max, spec.k_max))
    else:
        doppler = float(rng.integers(-int(spec.k_max), int(spec.k_max) + 1))
    sensing_path = PathParams(gain, delay, doppler)
    h_c = dd_channel(comm, grid)
    h_dot = doppler_derivative_channel(sensing_path, grid)
    cb, sb = channel_bases(h_c, h_dot)
    return Realization(r, tuple(comm), sensing_path, h_c, h_dot, cb, sb)


def _noise(spec: ExperimentSpec) -> NoiseModel:
    return NoiseModel.from_dbm(spec.sigma_c_dbm, spec.sigma_s_dbm)


def _solver_config(spec: ExperimentSpec, P_T: float, gamma_c: float) -> SolverConfig:
    return SolverConfig(P_T=P_T, gamma_c=gamma_c, xi_0=spec.xi_0, max_iters=spec.max_iters,
                        rho_scale=spec.rho_scale)


def full_precoder(sol: PrecoderSolution, comm: EigenBasis) -> np.ndarray:
    """``U Sigma V``; builds ``V`` even when the convexity gate fails."""
    if sol.V is not None:
        return sol.W
    z_c = sol.U.conj().T @ comm.reconstruct() @ sol.U
    return (sol.U * sol.sigma) @ construct_v(sol.sigma, z_c)


def baseline_precoder(spec: ExperimentSpec, P_T: float) -> np.ndarray:
    size = spec.M * spec.N
    scale = 1.0 if spec.baseline_power == "identity" else math.sqrt(P_T / size)
    return scale * np.eye(size)


def _points(spec: ExperimentSpec):
    for p_dbm in spec.power_dbm:
        for gamma_c in spec.gamma_c:
            yield p_dbm, float(dbm_to_linear(p_dbm)), gamma_c


def _simulate(spec, r, h_c, W, equalizer, noise, constellation):
    if spec.mc_blocks == 0:
        return None, None
    sim = SimConfig(blocks=spec.mc_blocks, seed=mc_seed(spec.seed, r), equalizer=equalizer,
                    constellation=constellation, noise=noise,
                    target_error_events=spec.target_error_events)
    est = simulate_ber(h_c, W, sim)
    return est.ber, est.ci95_halfwidth


# --------------------------------------------------------------------------
# kinds
# --------------------------------------------------------------------------

def _convergence(spec: ExperimentSpec, log: Callable[[str], None]) -> RunResult:
    noise = _noise(spec)
    c = QamConstellation(spec.constellation)
    rows = []
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"P_T_dBm": p_dbm, "gamma_c": gamma_c, "seed": spec.seed, "realization": r}
            try:
                sol = solve_algorithm1(real.h_c, real.h_dot, _solver_config(spec, P_T, gamma_c), c, noise)
            except GammaRangeError:
                rows.append({**base, "iteration": 0, "status": "infeasible"})
                continue
            if not sol.history:
                rows.append({**base, "iteration": 0, "lambda": 0.0, "mu": sol.duals[1], "status": "inactive"})
                continue
            for k, (step, lagrangian, lam, mu, crit) in enumerate(sol.history):
                rows.append({**base, "iteration": k, "step": step, "lagrangian": lagrangian,
                             "lambda": lam, "mu": mu, "criterion": crit, "status": "ok"})
        log(f"realization {r}: done")
    cols = ["P_T_dBm", "gamma_c", "realization", "seed", "iteration", "step", "lagrangian", "lambda", "mu",
            "criterion", "status"]
    keys = ["P_T_dBm", "gamma_c", "iteration"]
    return RunResult("convergence", cols, rows, *_summarize(rows, keys, ["lagrangian", "lambda", "mu"]))


def _ber_vs_power(spec: ExperimentSpec, log) -> RunResult:
    noise = _noise(spec)
    c = QamConstellation(spec.constellation)
    rows = []
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"P_T_dBm": p_dbm, "gamma_c": gamma_c, "seed": spec.seed, "realization": r}

            def add(scheme, W, analytic, equalizer="zf", feasible=True):
                emp, ci = _simulate(spec, r, real.h_c, W, equalizer, noise, c)
                rows.append({**base, "scheme": scheme, "analytic_ber": analytic, "empirical_ber": emp,
                             "ci95": ci, "feasible": feasible, "status": "ok"})

            try:
                sol = solve_algorithm1(real.h_c, real.h_dot, _solver_config(spec, P_T, gamma_c), c, noise)
            except GammaRangeError:
                rows.append({**base, "scheme": "proposed", "status": "infeasible"})
            else:
                W = full_precoder(sol, real.comm)
                add("proposed", W, average_ber(sinr_per_symbol(W, real.h_c, noise), c), feasible=sol.feasible)
            W_lb = ber_only_precoder(real.comm, P_T).W
            add("lower-bound", W_lb, ber_lower_bound(W_lb, real.h_c, noise, c))
            W0 = baseline_precoder(spec, P_T)
            for eq in ("zf", "mmse"):
                try:
                    analytic = average_ber(sinr_per_symbol(W0, real.h_c, noise, eq), c)
                    add(eq, W0, analytic, equalizer=eq)
                except SingularChannelError:
                    rows.append({**base, "scheme": eq, "status": "singular"})
        log(f"realization {r}: done")
    cols = ["P_T_dBm", "gamma_c", "scheme", "realization", "seed", "analytic_ber", "empirical_ber", "ci95",
            "feasible", "status"]
    return RunResult("ber-vs-power", cols, rows,
                     *_summarize(rows, ["P_T_dBm", "gamma_c", "scheme"], ["analytic_ber", "empirical_ber"]))


def _diag_elements(spec: ExperimentSpec, log) -> RunResult:
    noise = _noise(spec)
    c = QamConstellation(spec.constellation)
    rows = []
    s2 = noise.sigma_c_sq
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        H = real.h_c.matrix
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"P_T_dBm": p_dbm, "gamma_c": gamma_c, "seed": spec.seed, "realization": r}
            schemes = []
            try:
                sol = solve_algorithm1(H, real.h_dot, _solver_config(spec, P_T, gamma_c), c, noise)
                schemes.append(("proposed", full_precoder(sol, real.comm), 0.0))
            except GammaRangeError:
                rows.append({**base, "scheme": "proposed", "status": "infeasible"})
            W0 = baseline_precoder(spec, P_T)
            schemes += [("zf", W0, 0.0), ("mmse", W0, 1.0)]
            for name, W, zeta in schemes:
                HW = H @ W
                G = np.linalg.inv(zeta * s2 * np.eye(W.shape[1]) + HW.conj().T @ HW)
                for i, v in enumerate(np.real(np.diag(G))):
                    rows.append({**base, "scheme": name, "index": i, "diag_value": float(v), "status": "ok"})
        log(f"realization {r}: done")
    cols = ["P_T_dBm", "gamma_c", "scheme", "realization", "seed", "index", "diag_value", "status"]
    return RunResult("diag-elements", cols, rows,
                     *_summarize(rows, ["P_T_dBm", "gamma_c", "scheme", "index"], ["diag_value"]))


def _ber_vs_crb(spec: ExperimentSpec, log) -> RunResult:
    noise = _noise(spec)
    c = QamConstellation(spec.constellation)
    rows = []
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"gamma_c": gamma_c, "P_T_dBm": p_dbm, "seed": spec.seed, "realization": r}
            try:
                sol = solve_algorithm1(real.h_c, real.h_dot, _solver_config(spec, P_T, gamma_c), c, noise)
            except GammaRangeError:
                rows.append({**base, "scheme": "proposed", "status": "infeasible"})
                continue
            W = full_precoder(sol, real.comm)
            emp, ci = _simulate(spec, r, real.h_c, W, "zf", noise, c)
            rows.append({**base, "scheme": "proposed", "ber": average_ber(sinr_per_symbol(W, real.h_c, noise), c),
                         "empirical_ber": emp, "ci95": ci, "crb": compute_crb(W, real.h_dot, noise),
                         "feasible": sol.feasible, "status": "ok"})
        log(f"realization {r}: done")
    cols = ["gamma_c", "P_T_dBm", "scheme", "realization", "seed", "ber", "empirical_ber", "ci95", "crb",
            "feasible", "status"]
    return RunResult("ber-vs-crb", cols, rows,
                     *_summarize(rows, ["gamma_c", "P_T_dBm", "scheme"], ["ber", "empirical_ber", "crb"]))


def _single_symbol_metrics(w, real, noise, c):
    hw = real.h_c.matrix @ w
    snr = float(np.real(np.vdot(hw, hw))) / noise.sigma_c_sq
    ber = float(c.alpha * qfunc(np.sqrt(c.beta * snr)))
    return ber, compute_crb(w, real.h_dot, noise), achievable_capacity(w[:, None], real.h_c, noise)


def _symbol_points(spec, log, with_bounds):
    noise = _noise(spec)
    c = QamConstellation(spec.constellation)
    size = spec.M * spec.N
    rows = []
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"P_T_dBm": p_dbm, "gamma_c": gamma_c, "seed": spec.seed, "realization": r}
            gamma_1 = noise.sigma_s_sq / gamma_c
            try:
                w = single_symbol_precoder(real.comm, real.sensing, gamma_1, P_T)
                ber, crb, cap = _single_symbol_metrics(w, real, noise, c)
                rows.append({**base, "scheme": "proposed", "K": 1, "ber_lb": ber, "crb": crb, "capacity": cap,
                             "status": "ok"})
            except GammaRangeError:
                rows.append({**base, "scheme": "proposed", "K": 1, "status": "infeasible"})
            try:
                sol = solve_algorithm1(real.h_c, real.h_dot, _solver_config(spec, P_T, gamma_c), c, noise)
                W = full_precoder(sol, real.comm)
                rows.append({**base, "scheme": "proposed", "K": size,
                             "ber_lb": ber_lower_bound(W, real.h_c, noise, c),
                             "crb": compute_crb(W, real.h_dot, noise),
                             "capacity": achievable_capacity(W, real.h_c, noise), "status": "ok"})
            except GammaRangeError:
                rows.append({**base, "scheme": "proposed", "K": size, "status": "infeasible"})
            if not with_bounds:
                continue
            for K in range(1, size + 1):
                rows.append({**base, "scheme": "ber-only", "K": K,
                             "ber_lb": ber_only_lower_bound_k(real.comm.values, K, P_T, noise, c), "status": "ok"})
            w_s = np.sqrt(P_T) * real.sensing.vectors[:, 0]
            try:
                ber, crb, cap = _single_symbol_metrics(w_s, real, noise, c)
                rows.append({**base, "scheme": "crb-only", "K": 1, "ber_lb": ber, "crb": crb, "capacity": cap,
                             "status": "ok"})
            except UnboundedCrbError:
                rows.append({**base, "scheme": "crb-only", "K": 1, "status": "unbounded"})
        log(f"realization {r}: done")
    return rows, real


def _symbol_sweep(spec: ExperimentSpec, log) -> RunResult:
    rows, _ = _symbol_points(spec, log, with_bounds=True)
    cols = ["P_T_dBm", "gamma_c", "scheme", "K", "realization", "seed", "ber_lb", "crb", "capacity", "status"]
    return RunResult("symbol-sweep", cols, rows,
                     *_summarize(rows, ["P_T_dBm", "gamma_c", "scheme", "K"], ["ber_lb", "crb", "capacity"]))


def _capacity_sweep(spec: ExperimentSpec, log) -> RunResult:
    noise = _noise(spec)
    sym_rows, _ = _symbol_points(spec, log, with_bounds=False)
    size = spec.M * spec.N
    rows = []
    for row in sym_rows:
        scheme = f"proposed-K{row['K']}"
        rows.append({k: row.get(k) for k in ("P_T_dBm", "gamma_c", "seed", "realization", "status")}
                    | {"scheme": scheme, "capacity": row.get("capacity")})
    for r in range(spec.channel_realizations):
        real = draw_realization(spec, r)
        for p_dbm, P_T, gamma_c in _points(spec):
            base = {"P_T_dBm": p_dbm, "gamma_c": gamma_c, "seed": spec.seed, "realization": r, "status": "ok"}
            W_lb = ber_only_precoder(real.comm, P_T).W
            rows.append({**base, "scheme": f"ber-only-K{size}",
                         "capacity": achievable_capacity(W_lb, real.h_c, noise)})
            rows.append({**base, "scheme": "upper-bound",
                         "capacity": capacity_upper_bound(real.comm.values, P_T, noise)})
    cols = ["P_T_dBm", "gamma_c", "scheme", "realization", "seed", "capacity", "status"]
    return RunResult("capacity-sweep", cols, rows,
                     *_summarize(rows, ["P_T_dBm", "gamma_c", "scheme"], ["capacity"]))


EXPERIMENTS = {
    "convergence": _convergence,
    "ber-vs-power": _ber_vs_power,
    "diag-elements": _diag_elements,
    "ber-vs-crb": _ber_vs_crb,
    "symbol-sweep": _symbol_sweep,
    "capacity-sweep": _capacity_sweep,
}


# --------------------------------------------------------------------------
# aggregation and output
# --------------------------------------------------------------------------

def _sort_key(row, keys):
    out = []
    for k in keys:
        v = row.get(k)
        out.append((0, v) if isinstance(v, (int, float)) else (1, str(v)))
    return tuple(out)


def _summarize(rows, keys, values):
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row.get(k) for k in keys), []).append(row)
    summary = []
    for key, members in groups.items():
        entry = dict(zip(keys, key))
        ok = [m for m in members if m.get("status") == "ok"]
        entry["n_valid"] = len(ok)
        entry["n_flagged"] = len(members) - len(ok)
        for v in values:
            xs = [m[v] for m in ok if m.get(v) is not None and np.isfinite(m[v])]
            entry[f"mean_{v}"] = float(np.mean(xs)) if xs else None
        summary.append(entry)
    summary.sort(key=lambda e: _sort_key(e, keys))
    return keys + ["n_valid", "n_flagged"] + [f"mean_{v}" for v in values], summary


def run_experiment(spec: ExperimentSpec, log: Callable[[str], None] | None = None) -> RunResult:
    log = log or (lambda msg: None)
    result = EXPERIMENTS[spec.kind](spec, log)
    order = [c for c in result.columns if c not in ("status", "lagrangian", "lambda", "mu", "criterion", "step",
                                                      "analytic_ber", "empirical_ber", "ci95", "feasible",
                                                      "diag_value", "ber", "crb", "ber_lb", "capacity")]
    result.rows.sort(key=lambda row: _sort_key(row, order))
    return result


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_outputs(result: RunResult, spec: ExperimentSpec, out_dir: str | Path, *,
                  wall_clock: float, started: float) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = result.kind.replace("-", "_")
    data = out / f"{stem}.csv"
    summary = out / f"{stem}_summary.csv"
    data.write_text(to_csv(result.columns, result.rows), encoding="utf-8")
    summary.write_text(to_csv(result.summary_columns, result.summary), encoding="utf-8")
    (out / "config.yaml").write_text(emit_config(spec), encoding="utf-8")
    manifest = {
        "schema": "ddisac-manifest/1",
        "library_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kind": spec.kind,
        "config": spec.to_dict(),
        "seed": spec.seed,
        "realizations": [
            {"realization": r, "channel_spawn_key": [0, r], "mc_seed": mc_seed(spec.seed, r)}
            for r in range(spec.channel_realizations)
        ],
        "files": {"data": data.name, "summary": summary.name, "config": "config.yaml"},
        "rows": len(result.rows),
        "flagged_rows": sum(1 for row in result.rows if row.get("status") not in ("ok", "inactive")),
        "started_unix": started,
        "wall_clock_s": wall_clock,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
