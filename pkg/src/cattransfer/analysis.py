"""Observables, fidelity and swap/phase verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .hilbert import HilbertLayout, LayoutError, QuantumState, destroy
from .states import WStateSpec, ideal_target

FIDELITY_SLACK = 1e-9
PHASE_TOL = 1e-8
GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class SimulationResult:
    """Sampled time series of one run (all lists share the sample length)."""

    times: list[float]
    t_over_T: list[float]
    fidelity: list[float]
    trace: list[float]
    pair_photon: list[list[float]]
    qutrit_pops: list[list[float]]
    diagnostics: dict = field(default_factory=dict)
    final_state: QuantumState | None = None

    def __post_init__(self) -> None:
        n = len(self.times)
        series = [self.t_over_T, self.fidelity, self.trace, *self.pair_photon, *self.qutrit_pops]
        if any(len(s) != n for s in series):
            raise ValueError("all sampled series must share the sample-time length")
        for f in self.fidelity:
            if not (-FIDELITY_SLACK <= f <= 1 + FIDELITY_SLACK):
                raise ValueError(f"fidelity {f} outside [0, 1]")

    @property
    def fidelity_squared(self) -> list[float]:
        return [f * f for f in self.fidelity]

    def peak(self) -> tuple[float, float]:
        """(max fidelity, t/T at the maximum)."""
        k = int(np.argmax(self.fidelity))
        return self.fidelity[k], self.t_over_T[k]

    def header(self) -> list[str]:
        n = len(self.pair_photon)
        return (
            ["t_seconds", "t_over_T", "fidelity", "fidelity_squared", "trace"]
            + [f"pair{j + 1}_n" for j in range(n)]
            + ["pop_g", "pop_e", "pop_f"]
        )

    def rows(self) -> list[list[float]]:
        fsq = self.fidelity_squared
        out = []
        for k, t in enumerate(self.times):
            row = [t, self.t_over_T[k], self.fidelity[k], fsq[k], self.trace[k]]
            row += [p[k] for p in self.pair_photon]
            row += [q[k] for q in self.qutrit_pops]
            out.append(row)
        return out


# ---------------------------------------------------------------------------
# reduced states and fidelity


def _canonical_keep(keep: Iterable[int], layout: HilbertLayout) -> list[int]:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise LayoutError("partial trace needs at least one subsystem to keep")
    for k in keep:
        layout.axis(k)
    return keep


def _reduce_array(data: np.ndarray, layout: HilbertLayout, keep: Sequence[int]) -> np.ndarray:
    dims = layout.dims
    axes = [layout.axis(k) for k in keep]
    rest = [a for a in range(len(dims)) if a not in axes]
    dk = int(np.prod([dims[a] for a in axes]))
    dr = int(np.prod([dims[a] for a in rest])) if rest else 1
    if data.ndim == 1:
        m = data.reshape(dims).transpose(axes + rest).reshape(dk, dr)
        return m @ m.conj().T
    nd = len(dims)
    t = data.reshape(dims + dims)
    perm = axes + rest + [nd + a for a in axes] + [nd + a for a in rest]
    t = t.transpose(perm).reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", t)


def partial_trace(state: QuantumState, keep: Iterable[int]) -> QuantumState:
    """Reduced density matrix on ``keep`` (0 = qutrit, 1..2N = modes)."""
    keep = _canonical_keep(keep, state.layout)
    return QuantumState(state.layout.reduced(keep), _reduce_array(state.data, state.layout, keep))


def qutrit_reduced(state: QuantumState) -> np.ndarray:
    """3x3 reduced density matrix of the qutrit."""
    if not state.layout.qutrit:
        raise LayoutError("layout has no qutrit")
    return _reduce_array(state.data, state.layout, [0])


def cavity_state(state: QuantumState) -> QuantumState:
    """Trace out the qutrit; identity for cavity-only layouts."""
    if not state.layout.qutrit:
        return state.to_density()
    return partial_trace(state, range(1, state.layout.n_modes + 1))


def fidelity(ideal: QuantumState, rho_cav: QuantumState) -> float:
    """sqrt(<psi|rho|psi>) for a pure ideal state."""
    if ideal.layout != rho_cav.layout:
        raise LayoutError("ideal state and density matrix live on different layouts")
    if not ideal.is_vector:
        raise ValueError("ideal state must be a vector")
    psi = ideal.data
    if rho_cav.is_vector:
        val = abs(np.vdot(psi, rho_cav.data)) ** 2
    else:
        val = float(np.real(np.vdot(psi, rho_cav.data @ psi)))
    return math.sqrt(min(max(val, 0.0), 1.0 + FIDELITY_SLACK))


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observables:
    pair_photon: tuple[float, ...]
    qutrit_pops: tuple[float, float, float] | None
    parity: tuple[float, ...]
    mode_photon: tuple[float, ...]


def _populations(state: QuantumState) -> np.ndarray:
    d = state.data
    return np.abs(d) ** 2 if d.ndim == 1 else np.real(np.diagonal(d))


def observables(state: QuantumState, layout: HilbertLayout | None = None) -> Observables:
    """Photon numbers, mode parities and qutrit populations.

    Every observable here is diagonal in the Fock/level basis, so the
    quadratic forms reduce to weighted sums over the populations.
    """
    layout = layout or state.layout
    if layout != state.layout:
        raise LayoutError("state does not live on the given layout")
    return population_observables(_populations(state), layout)


def population_observables(pops: np.ndarray, layout: HilbertLayout) -> Observables:
    pops = np.asarray(pops, dtype=float).reshape(layout.dims)
    nd = len(layout.dims)
    mode_n, parity = [], []
    for m in range(1, layout.n_modes + 1):
        ax = layout.axis(m)
        marg = pops.sum(axis=tuple(a for a in range(nd) if a != ax))
        levels = np.arange(layout.subdim(m))
        mode_n.append(float(marg @ levels))
        parity.append(float(marg @ (1.0 - 2.0 * (levels % 2))))
    pair = tuple(mode_n[2 * j] + mode_n[2 * j + 1] for j in range(layout.n_modes // 2))
    q = None
    if layout.qutrit:
        qm = pops.sum(axis=tuple(range(1, nd)))
        q = (float(qm[0]), float(qm[1]), float(qm[2]))
    return Observables(pair, q, tuple(parity), tuple(mode_n))


# ---------------------------------------------------------------------------
# Heisenberg-picture swap check


@dataclass(frozen=True)
class SwapCheck:
    pair: int
    coupling_sign: float
    coefficients: tuple[complex, complex]
    expected: tuple[complex, complex]
    deviation: float
    passed: bool


@dataclass(frozen=True)
class SwapReport:
    lam_t: float
    cutoff: int
    checks: tuple[SwapCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max(c.deviation for c in self.checks)


def _swap_single(lam: float, t: float, cutoff: int, sign: float, target_sign: float):
    a = destroy(cutoff)
    eye = np.eye(cutoff)
    a1d = np.kron(a, eye).conj().T
    a2d = np.kron(eye, a).conj().T
    bs = a1d @ a2d.conj().T + a1d.conj().T @ a2d
    u = la.expm(-1j * sign * lam * t * bs)
    evolved = u @ a1d @ u.conj().T
    # input states with n1 + n2 <= d - 2 stay clear of the cutoff
    n1, n2 = np.divmod(np.arange(cutoff * cutoff), cutoff)
    guard = (n1 + n2) <= cutoff - 2
    x = evolved[:, guard]
    b1, b2 = a1d[:, guard], a2d[:, guard]
    c1 = np.vdot(b1, x) / np.vdot(b1, b1)
    c2 = np.vdot(b2, x) / np.vdot(b2, b2)
    e1 = math.cos(lam * t)
    e2 = 1j * target_sign * math.sin(lam * t)
    ref = np.abs(b1).max()
    dev = float(np.abs(x - (e1 * b1 + e2 * b2)).max() / ref)
    return (complex(c1), complex(c2)), (complex(e1), complex(e2)), dev


def heisenberg_swap_check(
    lam: float,
    t: float,
    cutoff: int = 8,
    n_pairs: int = 2,
    coupling_signs: Sequence[float] | None = None,
    tol: float = 1e-10,
) -> SwapReport:
    """Compare U a_{2j-1}^dag U^dag, U = exp(-i H_ej t), with the swap formula.

    Pair 1 should give cos(lt) a1^dag + i sin(lt) a2^dag, pairs j >= 2 the
    conjugate sign.  ``coupling_signs`` gives the sign s_j of the actual
    coupling H_ej = s_j lam (a^dag b + a b^dag); the default is the matched
    choice (-1 for pair 1, +1 otherwise).  Deviations are elementwise on
    input states with at most d - 2 photons, relative to the largest a^dag
    element there.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    signs = list(coupling_signs) if coupling_signs is not None else [-1.0] + [1.0] * (n_pairs - 1)
    if len(signs) != n_pairs:
        raise ValueError("one coupling sign per pair")
    checks = []
    for j, s in enumerate(signs):
        target = 1.0 if j == 0 else -1.0
        coeffs, expected, dev = _swap_single(lam, t, cutoff, s, target)
        checks.append(SwapCheck(j + 1, s, coeffs, expected, dev, dev < tol))
    return SwapReport(lam * t, cutoff, tuple(checks))


# ---------------------------------------------------------------------------
# phase extraction


class TransferFailure(RuntimeError):
    def __init__(self, overlap: float):
        super().__init__(f"overlap with the transferred W state is {overlap:.3g} (< 0.5)")
        self.overlap = overlap


@dataclass(frozen=True)
class PhaseFit:
    phases: tuple[float, ...]
    overlap: float

    @property
    def residual_infidelity(self) -> float:
        return max(0.0, 1.0 - self.overlap)


def _overlap(state: QuantumState, spec: WStateSpec, phases: Sequence[float]) -> float:
    tgt = ideal_target(spec, phases, state.layout).data
    if state.is_vector:
        return float(abs(np.vdot(tgt, state.data)) ** 2)
    return float(np.real(np.vdot(tgt, state.data @ tgt)))


def _golden_max(f, a: float, b: float, tol: float) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def extract_phases(
    state: QuantumState,
    spec: WStateSpec,
    grid: int = 48,
    tol: float = PHASE_TOL,
    max_sweeps: int = 8,
) -> PhaseFit:
    """Fit the cat rotation angle on every receiving mode.

    Each angle is tuned in turn (coarse grid, then golden section) to
    maximise the overlap with the rotated transferred W state; sweeps repeat
    until the angles settle and a joint BFGS step polishes the result.  Shifting every angle by pi only flips the
    global sign, so the first angle is reported in [0, pi) and the rest in
    [0, 2 pi).
    """
    if state.layout.qutrit:
        state = cavity_state(state)
    n = spec.n_logical
    phases = [0.0] * n
    best = _overlap(state, spec, phases)
    if best < 0.5:
        # a rotated transfer can still start from a poor zero-phase guess
        for th in np.linspace(0, 2 * math.pi, grid, endpoint=False):
            trial = [float(th)] * n
            val = _overlap(state, spec, trial)
            if val > best:
                best, phases = val, trial
    for _ in range(max_sweeps):
        prev = list(phases)
        for j in range(n):

            def f(th, j=j):
                trial = list(phases)
                trial[j] = th
                return _overlap(state, spec, trial)

            thetas = np.linspace(0, 2 * math.pi, grid, endpoint=False)
            vals = [f(th) for th in thetas]
            k = int(np.argmax(vals))
            step = 2 * math.pi / grid
            phases[j] = _golden_max(f, thetas[k] - step, thetas[k] + step, tol)
        best = _overlap(state, spec, phases)
        moved = max(abs((p - q + math.pi) % (2 * math.pi) - math.pi) for p, q in zip(phases, prev))
        if moved < 10 * tol:
            break
    if n > 1 and best >= 0.5:
        # the angles are coupled through the shared normalisation, so finish
        # with a joint quasi-Newton polish along the ridge
        res = minimize(lambda x: -_overlap(state, spec, x), phases, method="BFGS",
                       options={"gtol": 1e-12, "xrtol": tol})
        if -res.fun > best:
            phases, best = [float(x) for x in res.x], float(-res.fun)
    if best < 0.5:
        raise TransferFailure(best)
    shift = math.pi if (phases[0] % (2 * math.pi)) >= math.pi else 0.0
    canon = tuple(float((p - shift) % (2 * math.pi)) for p in phases)
    return PhaseFit(canon, best)
