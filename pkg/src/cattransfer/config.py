"""JSON experiment configuration.

Frequencies are ordinary frequencies in Hz (the values quoted as w/2pi) and
are multiplied by 2 pi exactly once, here.  Decay rates are 1/T in 1/s.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .hamiltonians import DerivedCouplings, SystemParams, TWO_PI
from .hilbert import HilbertLayout

SCENARIOS = ("ideal-closed", "effective-open", "full-open")
PATHS = ("effective", "full", "both")

DEFAULTS: dict[str, Any] = {
    "note": "frequencies in Hz (omega/2pi); lifetimes in seconds",
    "scenario": "full-open",
    "hamiltonian_path": None,
    "system": {
        "n_pairs": 3,
        "g_hz": 150e6,
        "delta_12_hz": 450e6,
        "delta_pair_hz": None,
        "omega_drive_hz": 250e6,
        "qutrit_eg_hz": 7.5e9,
        "qutrit_fe_hz": 5.0e9,
        "mode_freqs_hz": None,
        "g_cr_over_lambda": 0.02,
        "omega_fe_hz": 47e6,
        "delta_p_hz": -2.5e9,
        "kappa_inv_s": 20e-6,
        "t1_s": {"eg": 30e-6, "fe": 20e-6, "fg": 60e-6},
        "tphi_s": {"e": 40e-6, "f": 25e-6},
    },
    "encoding": {"alpha": 0.5, "cutoff": None},
    "solver": {
        "method": None,
        "steps_per_T": None,
        "n_steps": None,
        "t_final_over_T": 1.2,
        "samples_per_T": 100,
        "n_trajectories": 500,
        "seed": None,
    },
    "outputs": {"dir": "results", "prefix": "run"},
}

# per-scenario fallbacks for keys left as null
SCENARIO_DEFAULTS = {
    "ideal-closed": {"cutoff": 5, "method": "closed-rk4", "steps_per_T": 2000, "path": "effective"},
    "effective-open": {"cutoff": 3, "method": "lindblad-rk4", "steps_per_T": 500, "path": "effective"},
    "full-open": {"cutoff": 3, "method": "lindblad-rk4", "steps_per_T": 500, "path": "both"},
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        name = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[k], dict) and base[k] and k not in ("t1_s", "tphi_s"):
            if not isinstance(v, dict):
                raise ConfigError(name, "expected an object")
            out[k] = _merge(base[k], v, name + ".")
        elif k in ("t1_s", "tphi_s"):
            if not isinstance(v, dict) or set(v) - set(base[k]):
                raise ConfigError(name, f"expected an object with keys {sorted(base[k])}")
            out[k] = {**base[k], **v}
        else:
            out[k] = v
    return out


def _num(value, field: str, positive: bool = False, allow_zero: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(field, "must be finite")
    if positive and (v < 0 or (v == 0 and not allow_zero)):
        raise ConfigError(field, "must be positive")
    return v


def _per(value, n: int, field: str, **kw) -> tuple[float, ...]:
    if isinstance(value, list):
        if len(value) != n:
            raise ConfigError(field, f"expected {n} entries, got {len(value)}")
        return tuple(_num(v, f"{field}[{i}]", **kw) for i, v in enumerate(value))
    return (_num(value, field, **kw),) * n


def _rate(lifetime, field: str) -> float:
    """1/T, with null or 0 meaning the channel is off."""
    if lifetime is None or lifetime == 0:
        return 0.0
    t = _num(lifetime, field, positive=True, allow_zero=False)
    return 1.0 / t


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    scenario: str
    path: str
    params: SystemParams
    cutoffs: tuple[int, ...]
    method: str
    steps_per_T: int
    n_steps: int
    t_final_over_T: float
    sample_stride: int
    n_trajectories: int
    seed: int | None
    out_dir: str
    prefix: str

    @property
    def couplings(self) -> DerivedCouplings:
        return DerivedCouplings.from_params(self.params)

    @property
    def T(self) -> float:
        return self.couplings.T_swap

    @property
    def dt(self) -> float:
        return self.t_final_over_T * self.T / self.n_steps if self.n_steps else self.T

    def layout(self) -> HilbertLayout:
        return HilbertLayout(self.cutoffs, qutrit=True)

    def resolved(self) -> dict:
        """Fully explicit config dict (what the manifest stores)."""
        r = copy.deepcopy(self.raw)
        r["hamiltonian_path"] = self.path
        r["encoding"]["cutoff"] = list(self.cutoffs)
        s = r["solver"]
        s.update(method=self.method, steps_per_T=self.steps_per_T, n_steps=self.n_steps,
                 n_trajectories=self.n_trajectories, seed=self.seed)
        return r

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Rebuild from the raw dict with nested keys like 'solver.seed'."""
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            node = raw
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return from_dict(raw)


def from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if "config" in doc and "manifest_version" in doc:
        doc = doc["config"]
    raw = _merge(DEFAULTS, doc)
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {SCENARIOS}")
    sd = SCENARIO_DEFAULTS[scenario]
    path = raw["hamiltonian_path"] or sd["path"]
    if path not in PATHS:
        raise ConfigError("hamiltonian_path", f"must be one of {PATHS}")
    if scenario != "full-open" and path == "both":
        raise ConfigError("hamiltonian_path", "'both' is only meaningful for full-open")

    s = raw["system"]
    n = s["n_pairs"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError("system.n_pairs", "must be a positive integer")
    g = tuple(TWO_PI * x for x in _per(s["g_hz"], 2 * n, "system.g_hz", positive=True))
    if s["delta_pair_hz"] is not None:
        deltas = _per(s["delta_pair_hz"], n, "system.delta_pair_hz")
    else:
        d12 = _num(s["delta_12_hz"], "system.delta_12_hz")
        deltas = (d12,) + (-d12,) * (n - 1)
    if any(d == 0 for d in deltas):
        raise ConfigError("system.delta_pair_hz", "detunings must be nonzero")
    deltas = tuple(TWO_PI * d for d in deltas)
    w_eg = TWO_PI * _num(s["qutrit_eg_hz"], "system.qutrit_eg_hz", positive=True)
    w_fe = TWO_PI * _num(s["qutrit_fe_hz"], "system.qutrit_fe_hz", positive=True)
    mode_freqs = None
    if s["mode_freqs_hz"] is not None:
        mode_freqs = tuple(TWO_PI * x for x in _per(s["mode_freqs_hz"], 2 * n, "system.mode_freqs_hz"))
    kappa = tuple(
        _rate(v, "system.kappa_inv_s")
        for v in (s["kappa_inv_s"] if isinstance(s["kappa_inv_s"], list) else [s["kappa_inv_s"]] * (2 * n))
    )
    if len(kappa) != 2 * n:
        raise ConfigError("system.kappa_inv_s", f"expected {2 * n} entries")
    t1, tphi = s["t1_s"], s["tphi_s"]
    gammas = tuple(_rate(t1[k], f"system.t1_s.{k}") for k in ("eg", "fe", "fg"))
    deph = tuple(_rate(tphi[k], f"system.tphi_s.{k}") for k in ("e", "f"))
    alpha = _num(raw["encoding"]["alpha"], "encoding.alpha", positive=True)
    omega = TWO_PI * _num(s["omega_drive_hz"], "system.omega_drive_hz", positive=True)

    base = dict(
        n_pairs=n, g=g, delta_pair=deltas, omega_drive=omega,
        qutrit_freqs=(w_eg, w_fe, w_eg + w_fe), mode_freqs=mode_freqs,
        omega_fe=TWO_PI * _num(s["omega_fe_hz"], "system.omega_fe_hz", positive=True),
        delta_p=TWO_PI * _num(s["delta_p_hz"], "system.delta_p_hz"),
        kappa=kappa, gammas=gammas, dephasing=deph, alpha=alpha,
    )
    try:
        probe = SystemParams(**base)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None
    lam = DerivedCouplings.from_params(probe).lam
    if lam == 0:
        raise ConfigError("system.g_hz", "pair-1 coupling vanishes, swap time undefined")
    gcr = _num(s["g_cr_over_lambda"], "system.g_cr_over_lambda", positive=True)
    params = probe.with_(g_cr=gcr * lam)

    cut = raw["encoding"]["cutoff"]
    if cut is None:
        cut = sd["cutoff"]
    cutoffs = tuple(int(c) for c in (cut if isinstance(cut, list) else [cut] * (2 * n)))
    if len(cutoffs) != 2 * n or any(c < 2 for c in cutoffs):
        raise ConfigError("encoding.cutoff", f"need {2 * n} cutoffs, each >= 2")

    sv = raw["solver"]
    method = sv["method"] or sd["method"]
    if method not in ("closed-rk4", "lindblad-rk4", "trajectories"):
        raise ConfigError("solver.method", "must be closed-rk4, lindblad-rk4 or trajectories")
    if scenario == "ideal-closed" and method != "closed-rk4":
        raise ConfigError("solver.method", "ideal-closed runs use closed-rk4")
    if scenario != "ideal-closed" and method == "closed-rk4":
        raise ConfigError("solver.method", "open scenarios need lindblad-rk4 or trajectories")
    spt = sv["steps_per_T"] or sd["steps_per_T"]
    if not isinstance(spt, int) or spt < 1:
        raise ConfigError("solver.steps_per_T", "must be a positive integer")
    tf = _num(sv["t_final_over_T"], "solver.t_final_over_T", positive=True)
    n_steps = sv["n_steps"]
    if n_steps is None:
        n_steps = int(round(tf * spt))
    if not isinstance(n_steps, int) or n_steps < 0:
        raise ConfigError("solver.n_steps", "must be a non-negative integer")
    per_T = sv["samples_per_T"]
    if not isinstance(per_T, int) or per_T < 1:
        raise ConfigError("solver.samples_per_T", "must be a positive integer")
    stride = max(1, int(round(spt / per_T)))
    ntraj = sv["n_trajectories"]
    seed = sv["seed"]
    if method == "trajectories":
        if not isinstance(ntraj, int) or ntraj < 1:
            raise ConfigError("solver.n_trajectories", "must be a positive integer")
        if not isinstance(seed, int):
            raise ConfigError("solver.seed", "trajectory runs need an integer seed")

    out = raw["outputs"]
    return ExperimentConfig(
        raw=raw, scenario=scenario, path=path, params=params, cutoffs=cutoffs,
        method=method, steps_per_T=spt, n_steps=n_steps, t_final_over_T=tf,
        sample_stride=stride, n_trajectories=ntraj, seed=seed,
        out_dir=str(out["dir"]), prefix=str(out["prefix"]),
    )


def load(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return from_dict(doc)
