"""Time evolution: closed RK4, dense Lindblad RK4 and quantum-jump trajectories."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import kernels
from .analysis import SimulationResult, fidelity, observables, population_observables
from .hamiltonians import SystemParams, TimeDependentH
from .hilbert import HilbertLayout, LayoutError, QuantumState, SparseOperator, annihilation, qutrit_op

METHODS = ("closed-rk4", "lindblad-rk4", "trajectories")
MAX_DENSE_DIM = 4096
MAX_VECTOR_DIM = 2_000_000
NORM_DRIFT_TOL = 1e-6
TRACE_DRIFT_TOL = 1e-5
POSITIVITY_TOL = -1e-6
STABILITY_BOUND = 0.05


class StepSizeError(RuntimeError):
    pass


class ResourceError(RuntimeError):
    pass


def check_dimension(dim: int, method: str) -> None:
    """Refuse problem sizes that cannot fit, before any operator is built."""
    if method == "lindblad-rk4" and dim > MAX_DENSE_DIM:
        raise ResourceError(
            f"density matrix of dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}; "
            "use the trajectories method or lower the Fock cutoff"
        )
    if dim > MAX_VECTOR_DIM:
        raise ResourceError(f"Hilbert space dimension {dim} exceeds {MAX_VECTOR_DIM}; lower the Fock cutoff")


class PositivityWarning(UserWarning):
    pass


class StabilityWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# collapse operators


@dataclass(frozen=True)
class Channel:
    label: str
    op: SparseOperator
    rate: float


@dataclass(frozen=True)
class CollapseSet:
    """Dissipators rate * L[C], L[C]rho = C rho C^dag - {C^dag C, rho}/2."""

    layout: HilbertLayout
    channels: tuple[Channel, ...] = ()

    def __post_init__(self) -> None:
        for ch in self.channels:
            if ch.rate < 0:
                raise ValueError(f"negative rate on channel {ch.label}")
            if ch.op.layout != self.layout:
                raise LayoutError(f"channel {ch.label} lives on another layout")

    @classmethod
    def from_params(cls, params: SystemParams, layout: HilbertLayout) -> "CollapseSet":
        """Cavity loss per mode, the three qutrit decays and e/f dephasing."""
        chans = [
            Channel(f"kappa_{m}", annihilation(m, layout), params.kappa[m - 1])
            for m in range(1, layout.n_modes + 1)
        ]
        if layout.qutrit:
            g_eg, g_fe, g_fg = params.gammas
            p_e, p_f = params.dephasing
            chans += [
                Channel("gamma_eg", qutrit_op("g", "e", layout), g_eg),
                Channel("gamma_fe", qutrit_op("e", "f", layout), g_fe),
                Channel("gamma_fg", qutrit_op("g", "f", layout), g_fg),
                # sigma_ll is a projector, so L[sigma_ll] equals the
                # sigma rho sigma - (sigma rho + rho sigma)/2 form term by term
                Channel("dephase_e", qutrit_op("e", "e", layout), p_e),
                Channel("dephase_f", qutrit_op("f", "f", layout), p_f),
            ]
        return cls(layout, tuple(chans))

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def active(self) -> tuple[Channel, ...]:
        return tuple(ch for ch in self.channels if ch.rate > 0 and not ch.op.is_zero())

    @property
    def is_empty(self) -> bool:
        return not self.active

    def scaled_ops(self) -> list[sp.csr_matrix]:
        return [math.sqrt(ch.rate) * ch.op.matrix for ch in self.active]

    def decay_operator(self) -> SparseOperator:
        """sum_k rate_k C_k^dag C_k."""
        total = sp.csr_matrix((self.layout.dim, self.layout.dim), dtype=complex)
        for c in self.scaled_ops():
            total = total + c.conj().T @ c
        return SparseOperator(self.layout, total)

    def jump_arrays(self):
        """Flattened (offsets, rows, cols, vals) for the sandwich kernel.

        Every operator must have at most one nonzero per row.
        """
        offsets, rows, cols, vals = [0], [], [], []
        for c in self.scaled_ops():
            coo = c.tocoo()
            if len(np.unique(coo.row)) != coo.nnz:
                raise ValueError("collapse operator has more than one entry in a row")
            rows.append(coo.row)
            cols.append(coo.col)
            vals.append(coo.data)
            offsets.append(offsets[-1] + coo.nnz)
        cat = lambda xs, dt: np.ascontiguousarray(np.concatenate(xs) if xs else np.zeros(0), dtype=dt)  # noqa: E731
        return (
            np.asarray(offsets, dtype=np.int32),
            cat(rows, np.int32),
            cat(cols, np.int32),
            cat(vals, complex),
        )


# ---------------------------------------------------------------------------
# solver configuration


@dataclass(frozen=True)
class SolverConfig:
    method: str = "closed-rk4"
    dt: float = 1e-12
    n_steps: int = 0
    n_trajectories: int = 1
    seed: int | None = None
    sample_stride: int = 1
    eig_stride: int | None = None
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.method == "trajectories":
            if self.n_trajectories < 1:
                raise ValueError("trajectory runs need n_trajectories >= 1")
            if self.seed is None:
                raise ValueError("trajectory runs need an explicit seed")

    @classmethod
    def spanning(cls, method: str, t_final: float, n_steps: int, **kw) -> "SolverConfig":
        if n_steps == 0:
            return cls(method=method, dt=max(t_final, 1e-30), n_steps=0, **kw)
        return cls(method=method, dt=t_final / n_steps, n_steps=n_steps, **kw)

    @property
    def t_final(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def sample_steps(self) -> list[int]:
        steps = list(range(0, self.n_steps + 1, self.sample_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps

    def stability_number(self, H: TimeDependentH) -> float:
        return self.dt * H.scale_estimate()

    def check_stability(self, H: TimeDependentH) -> float:
        x = self.stability_number(H)
        if self.n_steps and x > STABILITY_BOUND:
            warnings.warn(
                f"dt * |H| = {x:.3g} exceeds {STABILITY_BOUND}; consider a smaller step",
                StabilityWarning,
                stacklevel=3,
            )
        return x


# ---------------------------------------------------------------------------
# sampling


@dataclass
class Sampler:
    """Collects observables at sample times."""

    layout: HilbertLayout
    target: QuantumState | None
    T: float
    n_pairs: int
    times: list = field(default_factory=list)
    fid: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    pops: list = field(default_factory=list)

    def record_vector(self, t: float, psi: np.ndarray) -> None:
        self._record(t, QuantumState(self.layout, psi), float(np.vdot(psi, psi).real))

    def record_density(self, t: float, rho: np.ndarray) -> None:
        self._record(t, QuantumState(self.layout, rho), float(np.trace(rho).real))

    def record_values(self, t, fid, trace, pairs, pops) -> None:
        self.times.append(t)
        self.fid.append(fid)
        self.trace.append(trace)
        self.pairs.append(pairs)
        self.pops.append(pops)

    def _record(self, t: float, state: QuantumState, tr: float) -> None:
        obs = observables(state)
        pops = obs.qutrit_pops if obs.qutrit_pops is not None else (math.nan,) * 3
        self.record_values(t, self.fidelity_of(state), tr, list(obs.pair_photon), list(pops))

    def fidelity_of(self, state: QuantumState) -> float:
        if self.target is None:
            return math.nan
        return cavity_fidelity(self.target, state)

    def result(self, diagnostics: dict, final: QuantumState | None) -> SimulationResult:
        n = len(self.times)
        pair = [[self.pairs[k][j] for k in range(n)] for j in range(self.n_pairs)]
        pops = [[self.pops[k][q] for k in range(n)] for q in range(3)]
        fid = [f if not math.isnan(f) else 0.0 for f in self.fid]
        if self.target is None:
            diagnostics = {**diagnostics, "fidelity": "no target supplied"}
        tT = [t / self.T if self.T else 0.0 for t in self.times]
        return SimulationResult(list(self.times), tT, fid, list(self.trace), pair, pops, diagnostics, final)


def cavity_fidelity(target: QuantumState, state: QuantumState) -> float:
    """Fidelity of the cavity part of ``state`` with a cavity-only target."""
    layout = state.layout
    if target.layout == layout:
        return fidelity(target, state)
    if not layout.qutrit or target.layout != layout.cavity():
        raise LayoutError("target layout matches neither the state nor its cavity part")
    psi = target.data
    if state.is_vector:
        m = state.data.reshape(3, -1)
        val = float(np.sum(np.abs(m @ psi.conj()) ** 2))
    else:
        dc = layout.dim // 3
        r = state.data.reshape(3, dc, 3, dc)
        val = sum(float(np.real(np.vdot(psi, r[q, :, q, :] @ psi))) for q in range(3))
    return math.sqrt(min(max(val, 0.0), 1.0))


# ---------------------------------------------------------------------------
# closed evolution


class _Applier:
    """y = -i H(t) x for vectors or column batches, term by term."""

    def __init__(self, H: TimeDependentH, extra: sp.csr_matrix | None = None):
        self.H = H
        mats, slots = [], []
        for k, term in enumerate(H.terms):
            mats.append(term.op.matrix)
            slots.append((k, False))
            if term.add_conjugate:
                mats.append(term.op.matrix.conj().T.tocsr())
                slots.append((k, True))
        self.static = None
        static_parts = [m for m, (k, c) in zip(mats, slots) if H.terms[k].coeff is None]
        if extra is not None:
            static_parts.append(extra)
        if static_parts:
            acc = static_parts[0]
            for m in static_parts[1:]:
                acc = acc + m
            self.static = acc.tocsr()
        self.dynamic = [(m, k, c) for m, (k, c) in zip(mats, slots) if H.terms[k].coeff is not None]

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        y = self.static @ x if self.static is not None else np.zeros_like(x)
        cache: dict[int, complex] = {}
        for m, k, conj in self.dynamic:
            if k not in cache:
                cache[k] = complex(self.H.terms[k].coeff(t))
            c = cache[k].conjugate() if conj else cache[k]
            y += c * (m @ x)
        y *= -1j
        return y


def _rk4_step(f: Callable, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + (dt / 2) * k1)
    k3 = f(t + dt / 2, y + (dt / 2) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _as_td(H) -> TimeDependentH:
    return TimeDependentH.static(H) if isinstance(H, SparseOperator) else H


def evolve_closed(
    H: TimeDependentH | SparseOperator,
    psi0: QuantumState,
    cfg: SolverConfig,
    target: QuantumState | None = None,
    T: float | None = None,
) -> SimulationResult:
    """Fixed-step RK4 for i dpsi/dt = H(t) psi."""
    H = _as_td(H)
    if not psi0.is_vector:
        raise ValueError("evolve_closed needs a state vector")
    if psi0.layout != H.layout:
        raise LayoutError("state and Hamiltonian layouts differ")
    if abs(psi0.norm() - 1) > NORM_DRIFT_TOL:
        raise ValueError("initial state is not normalized")
    stab = cfg.check_stability(H)
    f = _Applier(H)
    layout = psi0.layout
    sampler = Sampler(layout, target, T or cfg.t_final or 1.0, layout.n_modes // 2)
    samples = set(cfg.sample_steps())
    y = psi0.data.copy()
    worst = 0.0
    for step in range(cfg.n_steps + 1):
        t = cfg.t0 + step * cfg.dt
        if step in samples:
            sampler.record_vector(t, y)
            drift = abs(math.sqrt(sampler.trace[-1]) - 1.0)
            worst = max(worst, drift)
            if drift > NORM_DRIFT_TOL:
                raise StepSizeError(
                    f"norm drift {drift:.2e} at t = {t:.3e} s exceeds {NORM_DRIFT_TOL}; reduce dt"
                )
        if step < cfg.n_steps:
            y = _rk4_step(f, t, y, cfg.dt)
    diag = {"method": "closed-rk4", "max_norm_drift": worst, "stability_number": stab,
            "backend": kernels.BACKEND}
    return sampler.result(diag, QuantumState(layout, y))


# ---------------------------------------------------------------------------
# Lindblad


class LindbladRHS:
    """drho/dt = -i (H_nh rho - rho H_nh^dag) + sum_k C_k rho C_k^dag."""

    def __init__(self, H: TimeDependentH, collapse: CollapseSet):
        decay = collapse.decay_operator()
        if decay.is_zero():
            self.H = H
        else:
            self.H = H + TimeDependentH.static(decay * (-0.5j))
        pat = self.H.pattern
        self.indptr, self.indices = pat.indptr, pat.indices
        self.jumps = collapse.jump_arrays()
        self.has_jumps = self.jumps[1].size > 0
        n = H.layout.dim
        self._a = np.empty((n, n), dtype=complex)

    def __call__(self, t: float, rho: np.ndarray, out: np.ndarray) -> None:
        data = self.H.data_at(t)
        kernels.csr_matmat(self.indptr, self.indices, data, rho, self._a)
        # rho is Hermitian, so rho H_nh^dag = (H_nh rho)^dag
        kernels.anti_hermitian_part(self._a, out)
        if self.has_jumps:
            kernels.jump_sandwich(*self.jumps, rho, out)


def _min_eigenvalue(rho: np.ndarray) -> float:
    return float(la.eigvalsh(rho, subset_by_index=[0, 0], check_finite=False)[0])


def evolve_lindblad(
    H: TimeDependentH | SparseOperator,
    collapse: CollapseSet,
    rho0: QuantumState,
    cfg: SolverConfig,
    target: QuantumState | None = None,
    T: float | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> SimulationResult:
    """Dense RK4 integration of the master equation."""
    H = _as_td(H)
    layout = H.layout
    n = layout.dim
    check_dimension(n, "lindblad-rk4")
    if rho0.layout != layout or collapse.layout != layout:
        raise LayoutError("state, Hamiltonian and collapse set must share a layout")
    rho = np.ascontiguousarray(rho0.to_density().data, dtype=complex).copy()
    if abs(np.trace(rho).real - 1) > TRACE_DRIFT_TOL:
        raise ValueError("initial density matrix must have unit trace")
    stab = cfg.check_stability(H)
    rhs = LindbladRHS(H, collapse)
    sampler = Sampler(layout, target, T or cfg.t_final or 1.0, layout.n_modes // 2)
    samples = cfg.sample_steps()
    eig_stride = cfg.eig_stride or (1 if n <= 600 else 10)
    sample_set = {s: i for i, s in enumerate(samples)}

    acc = np.empty_like(rho)
    tmp = np.empty_like(rho)
    k = np.empty_like(rho)
    dt = cfg.dt
    worst_trace = worst_herm = 0.0
    min_eig = math.inf
    eig_log = []
    for step in range(cfg.n_steps + 1):
        t = cfg.t0 + step * dt
        if step in sample_set:
            sampler.record_density(t, rho)
            drift = abs(sampler.trace[-1] - 1.0)
            herm = float(np.abs(rho - rho.conj().T).max())
            worst_trace = max(worst_trace, drift)
            worst_herm = max(worst_herm, herm)
            if drift > TRACE_DRIFT_TOL:
                raise StepSizeError(
                    f"trace drift {drift:.2e} at t = {t:.3e} s exceeds {TRACE_DRIFT_TOL}; reduce dt"
                )
            idx = sample_set[step]
            if idx % eig_stride == 0 or step == cfg.n_steps:
                ev = _min_eigenvalue(rho)
                eig_log.append((t, ev))
                min_eig = min(min_eig, ev)
                if ev < POSITIVITY_TOL:
                    warnings.warn(f"density matrix eigenvalue {ev:.2e} at t = {t:.3e} s",
                                  PositivityWarning, stacklevel=2)
        if step == cfg.n_steps:
            break
        # classic RK4 with three work buffers
        rhs(t, rho, k)
        acc[...] = rho
        kernels.axpy_inplace(acc, dt / 6, k)
        kernels.axpy_into(tmp, rho, dt / 2, k)
        rhs(t + dt / 2, tmp, k)
        kernels.axpy_inplace(acc, dt / 3, k)
        kernels.axpy_into(tmp, rho, dt / 2, k)
        rhs(t + dt / 2, tmp, k)
        kernels.axpy_inplace(acc, dt / 3, k)
        kernels.axpy_into(tmp, rho, dt, k)
        rhs(t + dt, tmp, k)
        kernels.axpy_inplace(acc, dt / 6, k)
        rho, acc = acc, rho
        if progress is not None:
            progress(step + 1, cfg.n_steps)
    diag = {
        "method": "lindblad-rk4",
        "max_trace_drift": worst_trace,
        "max_hermiticity_dev": worst_herm,
        "min_eigenvalue": min_eig,
        "eigenvalue_samples": eig_log,
        "stability_number": stab,
        "backend": kernels.BACKEND,
    }
    return sampler.result(diag, QuantumState(layout, rho))


# ---------------------------------------------------------------------------
# trajectories


def evolve_trajectories(
    H: TimeDependentH | SparseOperator,
    collapse: CollapseSet,
    psi0: QuantumState,
    cfg: SolverConfig,
    target: QuantumState | None = None,
    T: float | None = None,
) -> SimulationResult:
    """Quantum-jump unravelling, all trajectories advanced together.

    Each trajectory draws a uniform threshold r and evolves under
    H - (i/2) sum C^dag C until its squared norm falls below r; it then
    jumps through channel k with probability ~ <C_k^dag C_k>, is
    renormalised and draws a new threshold.  Trajectory i uses the i-th
    child of ``SeedSequence(seed)``, so results do not depend on batching.
    """
    H = _as_td(H)
    if not psi0.is_vector:
        raise ValueError("trajectories need a state vector")
    layout = H.layout
    if psi0.layout != layout or collapse.layout != layout:
        raise LayoutError("state, Hamiltonian and collapse set must share a layout")
    if cfg.method != "trajectories":
        cfg = SolverConfig("trajectories", cfg.dt, cfg.n_steps, cfg.n_trajectories,
                           0 if cfg.seed is None else cfg.seed, cfg.sample_stride, cfg.eig_stride, cfg.t0)
    stab = cfg.check_stability(H)
    ntraj = cfg.n_trajectories
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(ntraj)]
    decay = collapse.decay_operator()
    f = _Applier(H, None if decay.is_zero() else (decay * (-0.5j)).matrix)
    cops = collapse.scaled_ops()

    psi = np.repeat(psi0.data[:, None], ntraj, axis=1).astype(complex)
    thresh = np.array([r.random() for r in rngs])
    sampler = Sampler(layout, target, T or cfg.t_final or 1.0, layout.n_modes // 2)
    samples = set(cfg.sample_steps())
    n_jumps = np.zeros(ntraj, dtype=np.int64)
    counts = np.zeros(len(cops), dtype=np.int64)
    for step in range(cfg.n_steps + 1):
        t = cfg.t0 + step * cfg.dt
        if step in samples:
            _record_ensemble(sampler, t, psi, layout)
        if step == cfg.n_steps:
            break
        psi = _rk4_step(f, t, psi, cfg.dt)
        norms = np.einsum("ij,ij->j", psi.conj(), psi).real
        for i in np.nonzero(norms <= thresh)[0]:
            col = psi[:, i]
            weights = np.array([np.vdot(c @ col, c @ col).real for c in cops])
            tot = weights.sum()
            if tot <= 0:
                psi[:, i] = col / math.sqrt(norms[i])
            else:
                ch = int(np.searchsorted(np.cumsum(weights) / tot, rngs[i].random(), side="right"))
                ch = min(ch, len(cops) - 1)
                new = cops[ch] @ col
                psi[:, i] = new / np.linalg.norm(new)
                counts[ch] += 1
                n_jumps[i] += 1
            thresh[i] = rngs[i].random()
    diag = {
        "method": "trajectories",
        "n_trajectories": ntraj,
        "seed": cfg.seed,
        "jumps_per_channel": dict(zip([ch.label for ch in collapse.active], counts.tolist())),
        "mean_jumps": float(n_jumps.mean()),
        "stability_number": stab,
        "backend": kernels.BACKEND,
    }
    final = psi / np.sqrt(np.einsum("ij,ij->j", psi.conj(), psi).real)
    rho = (final @ final.conj().T) / ntraj
    return sampler.result(diag, QuantumState(layout, rho))


def _record_ensemble(sampler: Sampler, t: float, psi: np.ndarray, layout: HilbertLayout) -> None:
    norms = np.einsum("ij,ij->j", psi.conj(), psi).real
    phi = psi / np.sqrt(norms)
    obs = population_observables((np.abs(phi) ** 2).mean(axis=1), layout)
    fid = math.nan
    if sampler.target is not None:
        tgt = sampler.target.data
        if sampler.target.layout == layout:
            fsq = np.abs(tgt.conj() @ phi) ** 2
        else:
            m = phi.reshape(3, -1, phi.shape[1])
            fsq = (np.abs(np.einsum("qcj,c->qj", m, tgt.conj())) ** 2).sum(axis=0)
        fid = math.sqrt(min(max(float(fsq.mean()), 0.0), 1.0))
    q = obs.qutrit_pops if obs.qutrit_pops is not None else (math.nan,) * 3
    sampler.record_values(t, fid, 1.0, list(obs.pair_photon), list(q))
