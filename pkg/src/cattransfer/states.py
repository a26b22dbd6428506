"""Cat states, cat-encoded W states and the qutrit dressed state."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hilbert import HilbertLayout, LayoutError, QuantumState, kron_dense

DEFAULT_TAIL_TOL = 1e-6
# cutoffs with a larger discarded mass than this are refused outright
MAX_TAIL = 0.05


class TruncationError(ValueError):
    def __init__(self, message: str, tail: float):
        super().__init__(message)
        self.tail = tail


class DegenerateStateError(ValueError):
    """Odd cat requested at alpha = 0."""


@dataclass(frozen=True)
class CatParams:
    alpha: complex
    parity: str = "even"
    theta: float = 0.0

    def __post_init__(self) -> None:
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if self.parity == "odd" and abs(self.alpha) == 0:
            raise DegenerateStateError("odd cat state is undefined at alpha = 0")

    @property
    def first_level(self) -> int:
        return 0 if self.parity == "even" else 1


@dataclass(frozen=True)
class WStateSpec:
    n_logical: int
    alpha: complex
    target_modes: str = "odd"

    def __post_init__(self) -> None:
        if self.n_logical < 1:
            raise ValueError("n_logical must be >= 1")
        if self.target_modes not in ("odd", "even"):
            raise ValueError("target_modes must be 'odd' or 'even'")


def _log_weights(alpha: complex, parity: str, upto: int) -> np.ndarray:
    """log |alpha^n / sqrt(n!)|^2 for levels n < upto of the given parity (else -inf)."""
    out = np.full(upto, -np.inf)
    r = abs(alpha)
    start = 0 if parity == "even" else 1
    for n in range(start, upto, 2):
        if r == 0:
            out[n] = 0.0 if n == 0 else -np.inf
        else:
            out[n] = 2 * n * math.log(r) - math.lgamma(n + 1)
    return out


def _log_norm(alpha: complex, parity: str) -> float:
    """log of sum over the parity sector of |alpha|^(2n)/n!  (cosh / sinh)."""
    x = abs(alpha) ** 2
    if parity == "even":
        return x + math.log1p(math.exp(-2 * x)) - math.log(2) if x else 0.0
    return x + math.log(-math.expm1(-2 * x)) - math.log(2)


def truncation_report(params: CatParams, cutoff: int) -> float:
    """Probability mass of the untruncated cat on levels >= cutoff."""
    if abs(params.alpha) == 0:
        return 0.0
    lognorm = _log_norm(params.alpha, params.parity)
    x = abs(params.alpha) ** 2
    n = cutoff + ((cutoff - params.first_level) % 2)
    tail = 0.0
    while True:
        term = math.exp(n * math.log(x) - math.lgamma(n + 1) - lognorm)
        tail += term
        # terms fall off faster than geometrically once n > |alpha|^2
        if n > x and term < 1e-18 * max(tail, 1e-300):
            break
        if term == 0.0 and n > x:
            break
        n += 2
    return min(tail, 1.0)


def default_cutoff(alpha: complex, tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest cutoff whose discarded mass is below ``tol`` for both parities."""
    d = 2
    parities = ("even", "odd") if abs(alpha) > 0 else ("even",)
    while any(truncation_report(CatParams(alpha, p), d) >= tol for p in parities):
        d += 1
    return d


def cat_vector(params: CatParams, cutoff: int, max_tail: float = MAX_TAIL) -> np.ndarray:
    """Renormalized Fock amplitudes of a (rotated) cat state on ``cutoff`` levels."""
    tail = truncation_report(params, cutoff)
    if tail > max_tail:
        raise TruncationError(
            f"cutoff {cutoff} discards {tail:.3e} of the {params.parity} cat "
            f"(alpha={params.alpha}); raise the cutoff",
            tail,
        )
    alpha = complex(params.alpha)
    vec = np.zeros(cutoff, dtype=complex)
    logw = _log_weights(alpha, params.parity, cutoff)
    phase = alpha / abs(alpha) if abs(alpha) else 1.0
    for n in range(params.first_level, cutoff, 2):
        if np.isfinite(logw[n]):
            vec[n] = math.exp(0.5 * logw[n]) * phase**n * np.exp(1j * n * params.theta)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise TruncationError(f"cutoff {cutoff} keeps none of the cat support", 1.0)
    return vec / norm


def cat_state(params: CatParams, cutoff: int, max_tail: float = MAX_TAIL) -> QuantumState:
    return QuantumState(HilbertLayout((cutoff,), qutrit=False), cat_vector(params, cutoff, max_tail))


def _vacuum(d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[0] = 1.0
    return v


def _w_vector(
    n: int,
    alpha: complex,
    cutoffs: Sequence[int],
    carriers: str,
    phases: Sequence[float] | None,
) -> np.ndarray:
    if len(cutoffs) != 2 * n:
        raise LayoutError(f"W state on {n} logical qubits needs {2 * n} modes, got {len(cutoffs)}")
    phases = [0.0] * n if phases is None else list(phases)
    if len(phases) != n:
        raise ValueError(f"expected {n} phases, got {len(phases)}")
    offset = 0 if carriers == "odd" else 1
    total = np.zeros(int(np.prod(cutoffs)), dtype=complex)
    for k in range(n):
        factors = []
        for j in range(n):
            parity = "odd" if j == k else "even"
            carrier = cat_vector(CatParams(alpha, parity, phases[j]), cutoffs[2 * j + offset])
            idle = _vacuum(cutoffs[2 * j + 1 - offset])
            factors += [carrier, idle] if offset == 0 else [idle, carrier]
        total += kron_dense(factors)
    return total / np.linalg.norm(total)


def w_state(spec: WStateSpec, layout: HilbertLayout, phases: Sequence[float] | None = None) -> QuantumState:
    """Cat-encoded W state on the cavity modes of ``layout`` (qutrit excluded).

    One odd cat is shared symmetrically among the carrier modes of the
    ``N`` pairs, all other carriers hold even cats and the partner modes
    sit in vacuum.  ``phases`` rotates the cat on each pair's carrier.
    """
    cav = layout.cavity() if layout.qutrit else layout
    if cav.n_modes != 2 * spec.n_logical:
        raise LayoutError(
            f"spec has {spec.n_logical} logical qubits but layout has {cav.n_modes} modes"
        )
    vec = _w_vector(spec.n_logical, spec.alpha, cav.mode_cutoffs, spec.target_modes, phases)
    return QuantumState(cav, vec)


def ideal_target(spec: WStateSpec, phases: Sequence[float] | None, layout: HilbertLayout) -> QuantumState:
    """Transferred W state: cats on the even-indexed modes, vacuum on the odd ones."""
    receiving = WStateSpec(spec.n_logical, spec.alpha, "even")
    return w_state(receiving, layout, phases)


def dressed_plus() -> np.ndarray:
    """(|g> + |e>)/sqrt(2) as a qutrit amplitude vector."""
    return np.array([1.0, 1.0, 0.0], dtype=complex) / math.sqrt(2)


def dressed_minus() -> np.ndarray:
    return np.array([1.0, -1.0, 0.0], dtype=complex) / math.sqrt(2)


def compose(qutrit: np.ndarray, cavity: QuantumState, layout: HilbertLayout) -> QuantumState:
    """Product state qutrit (x) cavity on the device layout."""
    if not layout.qutrit or cavity.layout != layout.cavity():
        raise LayoutError("cavity state does not match the device layout")
    q = np.asarray(qutrit, dtype=complex)
    if q.shape != (3,):
        raise LayoutError("qutrit factor must have 3 amplitudes")
    return QuantumState(layout, np.kron(q, cavity.data))
