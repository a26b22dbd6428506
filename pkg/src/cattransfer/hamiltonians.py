"""Hamiltonian builders for the qutrit-mediated cavity array.

All frequencies and rates are angular (rad/s) and hbar = 1.  Time-dependent
Hamiltonians are kept as fixed operators with scalar coefficient callbacks
and are assembled on one shared sparsity pattern per evaluation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    HilbertLayout,
    LayoutError,
    SparseOperator,
    annihilation,
    creation,
    number_op,
    op_sum,
    qutrit_op,
)

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
GHZ = TWO_PI * 1e9

# reference qutrit transition frequencies used to place the cavity modes
DEFAULT_OMEGA_EG = 7.5 * GHZ
DEFAULT_OMEGA_FE = 5.0 * GHZ


class ParameterError(ValueError):
    pass


class ConditionError(ValueError):
    def __init__(self, report: "ConditionReport"):
        names = ", ".join(c.name for c in report.failures())
        super().__init__(f"coupling conditions violated: {names}")
        self.report = report


class DispersiveWarning(UserWarning):
    pass


def _tuple(values, n: int, name: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in values)
    if len(vals) != n:
        raise ParameterError(f"{name} needs {n} entries, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the device, angular units throughout."""

    n_pairs: int
    g: tuple[float, ...]
    delta_pair: tuple[float, ...]
    omega_drive: float
    qutrit_freqs: tuple[float, float, float] = (
        DEFAULT_OMEGA_EG,
        DEFAULT_OMEGA_FE,
        DEFAULT_OMEGA_EG + DEFAULT_OMEGA_FE,
    )
    mode_freqs: tuple[float, ...] | None = None
    g_cr: float = 0.0
    omega_fe: float = 0.0
    delta_p: float = 0.0
    kappa: tuple[float, ...] | None = None
    gammas: tuple[float, float, float] = (0.0, 0.0, 0.0)
    dephasing: tuple[float, float] = (0.0, 0.0)
    alpha: complex = 0.5

    def __post_init__(self) -> None:
        n = self.n_pairs
        if n < 1:
            raise ParameterError("n_pairs must be >= 1")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("g", _tuple(self.g, 2 * n, "g"))
        set_("delta_pair", _tuple(self.delta_pair, n, "delta_pair"))
        set_("qutrit_freqs", _tuple(self.qutrit_freqs, 3, "qutrit_freqs"))
        if self.mode_freqs is None:
            set_("mode_freqs", self._resonant_mode_freqs())
        else:
            set_("mode_freqs", _tuple(self.mode_freqs, 2 * n, "mode_freqs"))
        set_("kappa", (0.0,) * (2 * n) if self.kappa is None else _tuple(self.kappa, 2 * n, "kappa"))
        set_("gammas", _tuple(self.gammas, 3, "gammas"))
        set_("dephasing", _tuple(self.dephasing, 2, "dephasing"))
        if any(d == 0 for d in self.delta_pair):
            raise ParameterError("pair detunings must be nonzero")
        rates = {"kappa": self.kappa, "gammas": self.gammas, "dephasing": self.dephasing}
        for name, vals in rates.items():
            if any(v < 0 for v in vals):
                raise ParameterError(f"{name} must be non-negative")
        if self.g_cr < 0 or self.omega_fe < 0:
            raise ParameterError("g_cr and omega_fe must be non-negative")

    def _resonant_mode_freqs(self) -> tuple[float, ...]:
        # phase e^{i Delta t} on a sigma_fg / sigma_fe term fixes
        # omega_{2j-1} = omega_fg - Delta_j and omega_{2j} = omega_fe - Delta_j
        _, w_fe, w_fg = self.qutrit_freqs
        out = []
        for d in self.delta_pair:
            out += [w_fg - d, w_fe - d]
        return tuple(out)

    @classmethod
    def default(cls, n_pairs: int = 3, **overrides) -> "SystemParams":
        """Desk-scale operating point with every noise channel switched on."""
        g = 150 * MHZ
        delta = 450 * MHZ
        lam = g * g / (2 * delta)
        base = dict(
            n_pairs=n_pairs,
            g=(g,) * (2 * n_pairs),
            delta_pair=(delta,) + (-delta,) * (n_pairs - 1),
            omega_drive=250 * MHZ,
            g_cr=0.02 * lam,
            omega_fe=47 * MHZ,
            delta_p=-2.5 * GHZ,
            kappa=(1 / 20e-6,) * (2 * n_pairs),
            gammas=(1 / 30e-6, 1 / 20e-6, 1 / 60e-6),
            dephasing=(1 / 40e-6, 1 / 25e-6),
            alpha=0.5,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def ideal(cls, n_pairs: int = 3, **overrides) -> "SystemParams":
        """Default couplings with crosstalk, leakage and dissipation removed."""
        zero = dict(
            g_cr=0.0,
            omega_fe=0.0,
            kappa=(0.0,) * (2 * n_pairs),
            gammas=(0.0, 0.0, 0.0),
            dephasing=(0.0, 0.0),
        )
        zero.update(overrides)
        return cls.default(n_pairs, **zero)

    def with_(self, **changes) -> "SystemParams":
        if "delta_pair" in changes and "mode_freqs" not in changes:
            changes["mode_freqs"] = None
        return replace(self, **changes)

    def pair_modes(self, j: int) -> tuple[int, int]:
        """1-based mode labels of pair j (1-based)."""
        return 2 * j - 1, 2 * j

    def regime_flags(self) -> dict[str, bool]:
        c = DerivedCouplings.from_params(self)
        dispersive = all(
            abs(self.delta_pair[j]) >= 10 * max(self.g[2 * j], self.g[2 * j + 1])
            for j in range(self.n_pairs)
        )
        lam_max = max(max(abs(x) for x in c.lambda_j), max(abs(x) for x in c.lambda_pair))
        return {"dispersive": dispersive, "strong_drive": 2 * self.omega_drive >= 10 * lam_max}

    def warn_regimes(self) -> None:
        for name, ok in self.regime_flags().items():
            if not ok:
                warnings.warn(f"{name} regime condition not met", DispersiveWarning, stacklevel=3)


@dataclass(frozen=True)
class DerivedCouplings:
    lambda_j: tuple[float, ...]
    lambda_pair: tuple[float, ...]
    lam: float
    T_swap: float
    phi0: float

    @classmethod
    def from_params(cls, p: SystemParams) -> "DerivedCouplings":
        lj = tuple(p.g[m] ** 2 / (2 * p.delta_pair[m // 2]) for m in range(2 * p.n_pairs))
        lp = tuple(p.g[2 * j] * p.g[2 * j + 1] / (2 * p.delta_pair[j]) for j in range(p.n_pairs))
        lam = abs(lp[0])
        if lam == 0:
            return cls(lj, lp, 0.0, math.inf, math.inf)
        T = math.pi / (2 * lam)
        return cls(lj, lp, lam, T, p.omega_drive * T)


# ---------------------------------------------------------------------------
# time-dependent operators


@dataclass(frozen=True)
class Phase:
    """Picklable coefficient t -> amp * exp(i freq t)."""

    freq: float
    amp: complex = 1.0

    def __call__(self, t: float) -> complex:
        return self.amp * complex(math.cos(self.freq * t), math.sin(self.freq * t))


@dataclass(frozen=True)
class HTerm:
    op: SparseOperator
    coeff: Callable[[float], complex] | None = None
    add_conjugate: bool = False


@dataclass(frozen=True)
class TimeDependentH:
    """H(t) = sum_k c_k(t) O_k (+ h.c. where flagged); c_k = None means 1."""

    layout: HilbertLayout
    terms: tuple[HTerm, ...] = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @classmethod
    def static(cls, op: SparseOperator) -> "TimeDependentH":
        return cls(op.layout, (HTerm(op),))

    @classmethod
    def zero(cls, layout: HilbertLayout) -> "TimeDependentH":
        return cls(layout, ())

    def __add__(self, other: "TimeDependentH | SparseOperator") -> "TimeDependentH":
        if isinstance(other, SparseOperator):
            other = TimeDependentH.static(other)
        if other.layout != self.layout:
            raise LayoutError("cannot add Hamiltonians on different layouts")
        return TimeDependentH(self.layout, self.terms + other.terms)

    @property
    def is_static(self) -> bool:
        return all(t.coeff is None for t in self.terms)

    def _compiled(self):
        if "pattern" in self._cache:
            return self._cache["pattern"], self._cache["basis"], self._cache["slots"]
        dim = self.layout.dim
        mats: list[sp.csr_matrix] = []
        slots: list[tuple[int, bool]] = []  # (term index, conjugated)
        for k, term in enumerate(self.terms):
            mats.append(term.op.matrix)
            slots.append((k, False))
            if term.add_conjugate:
                mats.append(term.op.matrix.conj().T.tocsr())
                slots.append((k, True))
        if not mats:
            pattern = sp.csr_matrix((dim, dim), dtype=complex)
            basis = np.zeros((0, 0), dtype=complex)
        else:
            union = abs(mats[0])
            for m in mats[1:]:
                union = union + abs(m)
            pattern = sp.csr_matrix(union, dtype=complex)
            pattern.sort_indices()
            pattern.data[:] = 0
            # map each operator's entries onto slots of the union pattern
            lookup = sp.csr_matrix(
                (np.arange(1, pattern.nnz + 1, dtype=float), pattern.indices, pattern.indptr),
                shape=pattern.shape,
            )
            basis = np.zeros((len(mats), pattern.nnz), dtype=complex)
            for r, m in enumerate(mats):
                coo = m.tocoo()
                pos = np.asarray(lookup[coo.row, coo.col]).ravel().astype(np.int64) - 1
                np.add.at(basis[r], pos, coo.data)
        pattern.indptr = pattern.indptr.astype(np.int32)
        pattern.indices = pattern.indices.astype(np.int32)
        self._cache.update(pattern=pattern, basis=basis, slots=tuple(slots))
        return pattern, basis, tuple(slots)

    def coefficients(self, t: float) -> np.ndarray:
        _, _, slots = self._compiled()
        vals = [1.0 if tm.coeff is None else complex(tm.coeff(t)) for tm in self.terms]
        return np.array([np.conj(vals[k]) if conj else vals[k] for k, conj in slots], dtype=complex)

    def data_at(self, t: float) -> np.ndarray:
        """Values of H(t) on the shared pattern (see ``pattern``)."""
        _, basis, _ = self._compiled()
        if basis.shape[0] == 0:
            return np.zeros(0, dtype=complex)
        return self.coefficients(t) @ basis

    @property
    def pattern(self) -> sp.csr_matrix:
        return self._compiled()[0]

    def matrix_at(self, t: float) -> sp.csr_matrix:
        p = self.pattern
        return sp.csr_matrix((self.data_at(t), p.indices, p.indptr), shape=p.shape)

    def at(self, t: float) -> SparseOperator:
        return SparseOperator(self.layout, self.matrix_at(t))

    def hermiticity_error(self, times: Iterable[float]) -> float:
        worst = 0.0
        for t in times:
            m = self.matrix_at(t)
            diff = m - m.conj().T
            worst = max(worst, float(abs(diff).max()) if diff.nnz else 0.0)
        return worst

    def scale_estimate(self) -> float:
        """Upper bound on |H(t)| over all t (max absolute row sum)."""
        pattern, basis, slots = self._compiled()
        if basis.shape[0] == 0:
            return 0.0
        amps = []
        for k, _ in slots:
            c = self.terms[k].coeff
            if c is None:
                amps.append(1.0)
            elif isinstance(c, Phase):
                amps.append(abs(c.amp))
            else:
                amps.append(max(abs(c(x)) for x in np.linspace(0.0, 1e-8, 7)))
        absdata = np.asarray(amps) @ np.abs(basis)
        m = sp.csr_matrix((absdata, pattern.indices, pattern.indptr), shape=pattern.shape)
        return float(np.asarray(m.sum(axis=1)).max())


# ---------------------------------------------------------------------------
# builders


def _check_layout(params: SystemParams, layout: HilbertLayout, need_qutrit: bool = True) -> None:
    if layout.n_modes != 2 * params.n_pairs:
        raise LayoutError(
            f"parameters describe {params.n_pairs} pairs but layout has {layout.n_modes} modes"
        )
    if need_qutrit and not layout.qutrit:
        raise LayoutError("this Hamiltonian acts on the qutrit; layout has none")


def drive_term(params: SystemParams, layout: HilbertLayout) -> SparseOperator:
    """Omega (sigma+_eg + sigma-_eg)."""
    sx = qutrit_op("e", "g", layout) + qutrit_op("g", "e", layout)
    return sx * params.omega_drive


def build_full_H(params: SystemParams, layout: HilbertLayout) -> TimeDependentH:
    """Dispersive qutrit-cavity interaction before adiabatic elimination."""
    _check_layout(params, layout)
    sfg = qutrit_op("f", "g", layout)
    sfe = qutrit_op("f", "e", layout)
    terms = []
    for j in range(params.n_pairs):
        a_odd = annihilation(2 * j + 1, layout)
        a_even = annihilation(2 * j + 2, layout)
        op = (a_odd @ sfg) * params.g[2 * j] + (a_even @ sfe) * params.g[2 * j + 1]
        if not op.is_zero():
            terms.append(HTerm(op, Phase(params.delta_pair[j]), add_conjugate=True))
    drive = drive_term(params, layout)
    if not drive.is_zero():
        terms.append(HTerm(drive))
    return TimeDependentH(layout, tuple(terms))


def build_effective_H2(params: SystemParams, layout: HilbertLayout) -> SparseOperator:
    """Stark-shift plus qutrit-conditioned Raman form after eliminating |f>."""
    _check_layout(params, layout)
    params.warn_regimes()
    c = DerivedCouplings.from_params(params)
    sgg = qutrit_op("g", "g", layout)
    see = qutrit_op("e", "e", layout)
    seg = qutrit_op("e", "g", layout)
    parts = []
    for j in range(params.n_pairs):
        m1, m2 = 2 * j + 1, 2 * j + 2
        parts.append((number_op(m1, layout) @ sgg) * (-2 * c.lambda_j[m1 - 1]))
        parts.append((number_op(m2, layout) @ see) * (-2 * c.lambda_j[m2 - 1]))
        raman = annihilation(m1, layout) @ creation(m2, layout) @ seg
        parts.append((raman + raman.dag()) * (-2 * c.lambda_pair[j]))
    parts.append(drive_term(params, layout))
    return op_sum(parts, layout)


def beam_splitter(m1: int, m2: int, layout: HilbertLayout) -> SparseOperator:
    """a_m1^dag a_m2 + a_m1 a_m2^dag."""
    hop = creation(m1, layout) @ annihilation(m2, layout)
    return hop + hop.dag()


def build_He(params: SystemParams, layout: HilbertLayout, check: bool = True) -> SparseOperator:
    """Pairwise beam-splitter Hamiltonian on the modes (identity on the qutrit)."""
    _check_layout(params, layout, need_qutrit=False)
    if check:
        report = validate_conditions(params)
        required = [c for c in report.checks if c.name in ("pair_stark_balance", "stark_sign")]
        if not all(c.passed for c in required):
            raise ConditionError(ConditionReport(tuple(required)))
    c = DerivedCouplings.from_params(params)
    parts = [beam_splitter(2 * j + 1, 2 * j + 2, layout) * (-c.lambda_pair[j]) for j in range(params.n_pairs)]
    return op_sum(parts, layout)


def build_H0(params: SystemParams, layout: HilbertLayout) -> SparseOperator:
    """Frame generator: -sum_j lambda_j n_j + Omega sigma_z (dressed)."""
    _check_layout(params, layout, need_qutrit=False)
    c = DerivedCouplings.from_params(params)
    parts = [number_op(m, layout) * (-c.lambda_j[m - 1]) for m in range(1, layout.n_modes + 1)]
    if layout.qutrit:
        # dressed sigma_z = |+><+| - |-><-| = sigma_x in the bare basis
        parts.append(drive_term(params, layout))
    return op_sum(parts, layout)


def build_crosstalk(params: SystemParams, layout: HilbertLayout) -> TimeDependentH:
    """Direct exchange between every pair of cavities at rate g_cr."""
    _check_layout(params, layout, need_qutrit=False)
    terms = []
    if params.g_cr != 0:
        w = params.mode_freqs
        for j in range(1, layout.n_modes + 1):
            for l in range(j + 1, layout.n_modes + 1):
                op = (annihilation(j, layout) @ creation(l, layout)) * params.g_cr
                terms.append(HTerm(op, Phase(w[l - 1] - w[j - 1]), add_conjugate=True))
    return TimeDependentH(layout, tuple(terms))


def crosstalk_pair_count(n_modes: int) -> int:
    return n_modes * (n_modes - 1) // 2


def build_leak(params: SystemParams, layout: HilbertLayout) -> TimeDependentH:
    """Off-resonant drive of the e-f transition."""
    _check_layout(params, layout)
    if params.omega_fe == 0:
        return TimeDependentH.zero(layout)
    op = qutrit_op("f", "e", layout) * params.omega_fe
    return TimeDependentH(layout, (HTerm(op, Phase(params.delta_p), add_conjugate=True),))


def leak_estimate(params: SystemParams) -> float:
    """Time-averaged |f> admixture (Omega_fe / Delta_p)^2."""
    return (params.omega_fe / params.delta_p) ** 2 if params.delta_p else math.inf


def build_H_prime(params: SystemParams, layout: HilbertLayout, path: str = "full") -> TimeDependentH:
    """Ideal Hamiltonian plus crosstalk and e-f leakage.

    ``path`` selects the ideal part: ``"full"`` keeps the explicit qutrit
    couplings, ``"effective"`` uses the eliminated Stark/Raman form.
    """
    if path == "full":
        base = build_full_H(params, layout)
    elif path == "effective":
        base = TimeDependentH.static(build_effective_H2(params, layout))
    else:
        raise ValueError(f"unknown Hamiltonian path {path!r}")
    return base + build_crosstalk(params, layout) + build_leak(params, layout)


# ---------------------------------------------------------------------------
# coupling conditions


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    residual: float
    scale: float
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple[ConditionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            c.name: {"passed": c.passed, "residual": c.residual, "scale": c.scale, "detail": c.detail}
            for c in self.checks
        }


def _check(name: str, residual: float, scale: float, rtol: float, detail: str) -> ConditionCheck:
    ok = residual <= rtol * max(scale, 1e-300)
    return ConditionCheck(name, bool(ok), float(residual), float(scale), detail)


def validate_conditions(params: SystemParams, rtol: float = 1e-9) -> ConditionReport:
    """Report the matching conditions needed for a clean simultaneous swap.

    pair_stark_balance   lambda_{2j-1} = lambda_{2j} in every pair
    stark_sign           lambda_2 = lambda and lambda_{2j} = -lambda for j >= 2
    raman_ratio          g1 g2 / D12 = -g_{2j-1} g_{2j} / D_j for j >= 2
    frequency_matching   D_j = w_fg - w_{2j-1} = w_fe - w_{2j}
    """
    c = DerivedCouplings.from_params(params)
    lam = c.lam
    n = params.n_pairs
    lj = c.lambda_j

    bal = max(abs(lj[2 * j] - lj[2 * j + 1]) for j in range(n))
    scale_lam = max(lam, max(abs(x) for x in lj))
    checks = [_check("pair_stark_balance", bal, scale_lam, rtol, "max_j |lambda_{2j-1} - lambda_{2j}|")]

    sign = abs(lj[1] - lam)
    for j in range(1, n):
        sign = max(sign, abs(lj[2 * j + 1] + lam))
    checks.append(_check("stark_sign", sign, scale_lam, rtol, "lambda_2 - lambda, lambda_{2j} + lambda"))

    r1 = params.g[0] * params.g[1] / params.delta_pair[0]
    ratio = 0.0
    for j in range(1, n):
        ratio = max(ratio, abs(r1 + params.g[2 * j] * params.g[2 * j + 1] / params.delta_pair[j]))
    checks.append(_check("raman_ratio", ratio, abs(r1), rtol, "g1 g2/D12 + g_{2j-1} g_{2j}/D_j"))

    _, w_fe, w_fg = params.qutrit_freqs
    w = params.mode_freqs
    freq = 0.0
    for j in range(n):
        d = params.delta_pair[j]
        freq = max(freq, abs(d - (w_fg - w[2 * j])), abs(d - (w_fe - w[2 * j + 1])))
    dscale = max(abs(d) for d in params.delta_pair)
    checks.append(_check("frequency_matching", freq, dscale, rtol, "D_j vs qutrit-cavity detunings"))
    return ConditionReport(tuple(checks))
