"""Scenario assembly, result files, sweeps and the invariant suite."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, kernels
from .analysis import SimulationResult, heisenberg_swap_check
from .config import ExperimentConfig, from_dict
from .dynamics import CollapseSet, SolverConfig, check_dimension, evolve_closed, evolve_lindblad, evolve_trajectories
from .hamiltonians import (
    TWO_PI,
    DerivedCouplings,
    DispersiveWarning,
    TimeDependentH,
    build_effective_H2,
    build_H0,
    build_H_prime,
    build_He,
    leak_estimate,
    validate_conditions,
)
from .hilbert import HilbertLayout
from .states import CatParams, WStateSpec, compose, dressed_plus, ideal_target, truncation_report, w_state

WORKERS_ENV = "CATTRANSFER_WORKERS"
PEAK_RANGE = (0.89, 0.95)
PEAK_WINDOW = (0.95, 1.05)
SWEEP_AXES = ("g_cr", "kappa", "alpha", "omega_fe", "dt")


def worker_count(n_tasks: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        return max(1, min(n, n_tasks))
    return max(1, min(os.cpu_count() or 1, n_tasks))


# ---------------------------------------------------------------------------
# simulation


def scenario_paths(cfg: ExperimentConfig) -> list[str]:
    if cfg.scenario == "ideal-closed":
        return ["ideal"]
    if cfg.path == "both":
        return ["effective", "full"]
    return [cfg.path]


def build_problem(cfg: ExperimentConfig, path: str):
    """(Hamiltonian, collapse set or None, initial state, target)."""
    layout = cfg.layout()
    check_dimension(layout.dim, cfg.method)
    p = cfg.params
    spec = WStateSpec(p.n_pairs, p.alpha)
    psi0 = compose(dressed_plus(), w_state(spec, layout), layout)
    target = ideal_target(spec, None, layout)
    if cfg.scenario == "ideal-closed":
        # H_e and H_0 commute, so this generates exp(-i H0 t) exp(-i He t)
        H = TimeDependentH.static(build_He(p, layout) + build_H0(p, layout))
        return H, None, psi0, target
    collapse = CollapseSet.from_params(p, layout)
    if cfg.scenario == "effective-open":
        return TimeDependentH.static(build_effective_H2(p, layout)), collapse, psi0, target
    return build_H_prime(p, layout, path), collapse, psi0, target


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig.spanning(
        cfg.method,
        cfg.t_final_over_T * cfg.T,
        cfg.n_steps,
        sample_stride=cfg.sample_stride,
        n_trajectories=cfg.n_trajectories,
        seed=cfg.seed,
    )


def simulate(cfg: ExperimentConfig, path: str, progress: Callable | None = None) -> SimulationResult:
    scfg = solver_config(cfg)
    T = cfg.T
    with warnings.catch_warnings():
        # regime flags are reported in the manifest instead
        warnings.simplefilter("ignore", DispersiveWarning)
        H, collapse, psi0, target = build_problem(cfg, path)
        if cfg.method == "closed-rk4":
            return evolve_closed(H, psi0, scfg, target=target, T=T)
        if cfg.method == "lindblad-rk4":
            return evolve_lindblad(H, collapse, psi0.to_density(), scfg, target=target, T=T, progress=progress)
        return evolve_trajectories(H, collapse, psi0, scfg, target=target, T=T)


# ---------------------------------------------------------------------------
# curve summaries


def fidelity_at(result: SimulationResult, t_over_T: float) -> float:
    k = int(np.argmin(np.abs(np.asarray(result.t_over_T) - t_over_T)))
    return result.fidelity[k]


def curve_shape(result: SimulationResult, tol: float = 1e-9) -> dict:
    """Peak location and whether the curve rises to it and falls after."""
    f = np.asarray(result.fidelity)
    k = int(np.argmax(f))
    rise = bool(np.all(np.diff(f[: k + 1]) >= -tol))
    fall = bool(np.all(np.diff(f[k:]) <= tol))
    return {
        "peak_fidelity": float(f[k]),
        "peak_t_over_T": float(result.t_over_T[k]),
        "monotone_rise": rise,
        "monotone_fall": fall,
    }


def in_peak_bracket(shape: dict) -> bool:
    lo, hi = PEAK_RANGE
    wlo, whi = PEAK_WINDOW
    return (
        lo <= shape["peak_fidelity"] <= hi
        and wlo <= shape["peak_t_over_T"] <= whi
        and shape["monotone_rise"]
        and shape["monotone_fall"]
    )


# ---------------------------------------------------------------------------
# output files


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def results_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.header())
    for row in result.rows():
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def describe(cfg: ExperimentConfig) -> dict:
    """Derived quantities recorded in every manifest."""
    p = cfg.params
    c = DerivedCouplings.from_params(p)
    tails = {}
    for m, d in enumerate(cfg.cutoffs, start=1):
        tails[f"mode{m}"] = {
            "cutoff": d,
            "even": truncation_report(CatParams(p.alpha, "even"), d),
            "odd": truncation_report(CatParams(p.alpha, "odd"), d),
        }
    return {
        "lambda_j_hz": [x / TWO_PI for x in c.lambda_j],
        "lambda_pair_hz": [x / TWO_PI for x in c.lambda_pair],
        "lambda_hz": c.lam / TWO_PI,
        "T_swap_s": c.T_swap,
        "phi0_rad": c.phi0,
        "g_cr_hz": p.g_cr / TWO_PI,
        "mode_freqs_hz": [w / TWO_PI for w in p.mode_freqs],
        "dt_s": cfg.dt,
        "hilbert_dim": math.prod(cfg.cutoffs) * 3,
        "truncation_tail": tails,
        "conditions": validate_conditions(p).as_dict(),
        "regime_flags": p.regime_flags(),
        "leak_estimate": leak_estimate(p),
    }


@dataclass
class RunOutcome:
    manifest_path: Path
    csv_paths: dict[str, Path]
    results: dict[str, SimulationResult]
    manifest: dict


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    progress: Callable[[str, int, int], None] | None = None,
) -> RunOutcome:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    paths = scenario_paths(cfg)
    results, csvs, runs = {}, {}, {}
    for path in paths:
        t0 = time.perf_counter()
        cb = (lambda s, n, _p=path: progress(_p, s, n)) if progress else None
        res = simulate(cfg, path, progress=cb)
        elapsed = time.perf_counter() - t0
        name = f"{cfg.prefix}.csv" if len(paths) == 1 else f"{cfg.prefix}_{path}.csv"
        atomic_write(out / name, results_csv(res))
        shape = curve_shape(res)
        entry = {
            "csv": name,
            **shape,
            "fidelity_at_T": fidelity_at(res, 1.0),
            "fidelity_at_t0": res.fidelity[0],
            "wall_seconds": elapsed,
            "diagnostics": res.diagnostics,
        }
        if cfg.scenario == "full-open":
            entry["in_peak_bracket"] = in_peak_bracket(shape)
        results[path], csvs[path], runs[path] = res, out / name, entry
    manifest = {
        "manifest_version": 1,
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": cfg.resolved(),
        "derived": describe(cfg),
        "runs": runs,
    }
    if cfg.scenario == "full-open":
        manifest["bracket_check"] = {
            "peak_range": list(PEAK_RANGE),
            "peak_window_t_over_T": list(PEAK_WINDOW),
            "paths_in_bracket": [p for p in paths if runs[p]["in_peak_bracket"]],
        }
    mpath = out / f"{cfg.prefix}.manifest.json"
    atomic_write(mpath, json.dumps(_jsonable(manifest), indent=2) + "\n")
    return RunOutcome(mpath, csvs, results, manifest)


# ---------------------------------------------------------------------------
# sweeps


def sweep_config(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "g_cr":
        return cfg.with_overrides(**{"system.g_cr_over_lambda": value})
    if axis == "kappa":
        return cfg.with_overrides(**{"system.kappa_inv_s": None if value == 0 else 1.0 / value})
    if axis == "alpha":
        return cfg.with_overrides(**{"encoding.alpha": value})
    if axis == "omega_fe":
        return cfg.with_overrides(**{"system.omega_fe_hz": value})
    if axis == "dt":
        spt = max(1, int(round(cfg.T / value)))
        return cfg.with_overrides(**{"solver.steps_per_T": spt, "solver.n_steps": None})
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def _sweep_point(args) -> list[dict]:
    raw, axis, value = args
    cfg = sweep_config(from_dict(raw), axis, value)
    rows = []
    for path in scenario_paths(cfg):
        res = simulate(cfg, path)
        peak, arg = res.peak()
        rows.append({
            "axis": axis,
            "value": value,
            "path": path,
            "max_fidelity": peak,
            "argmax_t_over_T": arg,
            "fidelity_at_T": fidelity_at(res, 1.0),
            "final_fidelity": res.fidelity[-1],
        })
    return rows


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float], workers: int | None = None) -> list[dict]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    for v in values:
        sweep_config(cfg, axis, v)  # validate every point before spending time
    tasks = [(cfg.raw, axis, float(v)) for v in values]
    n = workers or worker_count(len(tasks))
    if n == 1:
        chunks = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(_sweep_point, tasks))
    return [row for chunk in chunks for row in chunk]


def sweep_csv(rows: list[dict]) -> str:
    cols = ["axis", "value", "path", "max_fidelity", "argmax_t_over_T", "fidelity_at_T", "final_fidelity"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else repr(float(r[c])) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# invariant suite

INJECTIONS = ("lambda-mismatch", "swap-sign")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _pair_parity(j: int, layout: HilbertLayout):
    """(-1)^(n_{2j-1} + n_{2j}) as a sparse diagonal operator."""
    from .hilbert import SparseOperator

    d1, d2 = layout.subdim(2 * j - 1), layout.subdim(2 * j)
    idx = np.indices(layout.dims).reshape(len(layout.dims), -1)
    ax1, ax2 = layout.axis(2 * j - 1), layout.axis(2 * j)
    signs = 1.0 - 2.0 * ((idx[ax1] + idx[ax2]) % 2)
    import scipy.sparse as sp

    return SparseOperator(layout, sp.diags(signs.astype(complex), format="csr"))


def run_checks(fast: bool = False, inject: str | None = None, seed: int = 0) -> list[CheckResult]:
    """Structural invariants of the default device on small truncations.

    ``inject`` deliberately breaks one ingredient so the suite can be seen
    to catch it.
    """
    if inject is not None and inject not in INJECTIONS:
        raise ValueError(f"unknown injection {inject!r}; choose from {INJECTIONS}")
    from .hamiltonians import SystemParams, beam_splitter, build_crosstalk, build_full_H, build_leak
    from .hilbert import commutator, number_op
    from .states import cat_vector, default_cutoff

    out: list[CheckResult] = []

    def add(name, ok, detail):
        out.append(CheckResult(name, bool(ok), detail))

    params = SystemParams.default()
    if inject == "lambda-mismatch":
        g = list(params.g)
        g[1] *= 1.1
        params = params.with_(g=tuple(g))
    c = DerivedCouplings.from_params(params)

    report = validate_conditions(params)
    for chk in report.checks:
        add(f"condition:{chk.name}", chk.passed, f"residual {chk.residual:.3g} (scale {chk.scale:.3g})")

    signs = [-1.0, 1.0, 1.0]
    if inject == "swap-sign":
        signs[1] = -1.0
    sw = heisenberg_swap_check(c.lam, c.T_swap, cutoff=8, n_pairs=3, coupling_signs=signs)
    add("swap:heisenberg", sw.passed, f"max deviation {sw.max_deviation:.3g}")

    # Hermiticity of every builder at random times
    layout = HilbertLayout((2 if fast else 3,) * (2 * params.n_pairs), qutrit=True)
    times = np.random.default_rng(seed).uniform(0, c.T_swap, 20 if fast else 100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DispersiveWarning)
        builders = {
            "full": build_full_H(params, layout),
            "effective": TimeDependentH.static(build_effective_H2(params, layout)),
            "H0": TimeDependentH.static(build_H0(params, layout)),
            "crosstalk": build_crosstalk(params, layout),
            "leak": build_leak(params, layout),
            "H_prime_effective": build_H_prime(params, layout, "effective"),
            "H_prime_full": build_H_prime(params, layout, "full"),
        }
        He_built = build_He(params, layout) if report.passed else None
        if He_built is not None:
            builders["He"] = TimeDependentH.static(He_built)
    worst = max(H.hermiticity_error(times) for H in builders.values())
    add("hermitian:builders", worst < 1e-12, f"{len(builders)} builders, {len(times)} times, max |H - H^dag| {worst:.3g}")

    # beam-splitter structure
    pairs = [beam_splitter(2 * j - 1, 2 * j, layout) * c.lambda_pair[j - 1] for j in range(1, params.n_pairs + 1)]
    nnz = max(commutator(a, b).matrix.nnz for i, a in enumerate(pairs) for b in pairs[i + 1:])
    add("commute:pairwise_He", nnz == 0, f"largest commutator nnz {nnz}")
    He = pairs[0]
    for p in pairs[1:]:
        He = He + p
    n_bad = p_bad = 0
    for j in range(1, params.n_pairs + 1):
        npair = number_op(2 * j - 1, layout) + number_op(2 * j, layout)
        n_bad += commutator(He, npair).matrix.nnz
        p_bad += commutator(He, _pair_parity(j, layout)).matrix.nnz
    add("conserve:pair_photon_number", n_bad == 0, f"commutator nnz {n_bad}")
    add("conserve:pair_parity", p_bad == 0, f"commutator nnz {p_bad}")
    if He_built is not None:
        H0 = build_H0(params, layout)
        comm = commutator(He_built, H0).matrix
        scale = max(abs(He_built.matrix).max() * abs(H0.matrix).max(), 1e-300)
        rel = (abs(comm).max() if comm.nnz else 0.0) / scale
        add("commute:He_H0", rel < 1e-12, f"relative size {rel:.3g}")

    # cat parity orthogonality
    worst = 0.0
    for a in (0.3, 0.5, 1.0, 2.0):
        d = default_cutoff(a)
        ev = cat_vector(CatParams(a, "even"), d)
        od = cat_vector(CatParams(a, "odd"), d)
        worst = max(worst, abs(np.vdot(ev, od)))
    add("states:cat_orthogonality", worst < 1e-12, f"max |<even|odd>| {worst:.3g}")

    # ideal transfer
    if report.passed:
        raw = {"scenario": "ideal-closed", "encoding": {"cutoff": 3 if fast else 5},
               "solver": {"steps_per_T": 1000 if fast else 2000, "t_final_over_T": 1.0}}
        res = simulate(from_dict(raw), "ideal")
        fT = res.fidelity[-1]
        add("transfer:ideal_closed", fT >= 1 - 1e-6, f"F(T) = {fT:.9f}")
    else:
        add("transfer:ideal_closed", False, "skipped, resonance conditions fail")

    # Lindblad trace and Hermiticity preservation
    raw = {"scenario": "effective-open", "encoding": {"cutoff": 2},
           "solver": {"steps_per_T": 1000, "t_final_over_T": 0.02 if fast else 0.1}}
    res = simulate(from_dict(raw), "effective")
    drift = res.diagnostics["max_trace_drift"]
    herm = res.diagnostics["max_hermiticity_dev"]
    add("lindblad:trace", drift < 1e-5, f"max trace drift {drift:.3g}")
    add("lindblad:hermiticity", herm < 1e-8, f"max |rho - rho^dag| {herm:.3g}")

    # determinism under a fixed seed
    raw = {"scenario": "effective-open", "encoding": {"cutoff": 2},
           "solver": {"method": "trajectories", "steps_per_T": 1000, "t_final_over_T": 0.05,
                      "n_trajectories": 20, "seed": seed}}
    a, b = simulate(from_dict(raw), "effective"), simulate(from_dict(raw), "effective")
    same = a.fidelity == b.fidelity and a.pair_photon == b.pair_photon and np.array_equal(
        a.final_state.data, b.final_state.data)
    add("determinism:trajectories", same, "bit-identical repeat" if same else "repeat differs")
    return out
