"""Truncated Fock-space and qutrit operator algebra.

Subsystem order is fixed: qutrit first (label 0), then bosonic modes
labelled 1..2N.  Every operator is a :class:`SparseOperator` wrapping a CSR
matrix on the full tensor-product space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

QUTRIT_DIM = 3
DROP_TOL = 1e-14

LEVELS = {"g": 0, "e": 1, "f": 2}


class LayoutError(ValueError):
    """Operator or state does not fit the requested Hilbert layout."""


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered subsystem dimensions of a composite space.

    With ``qutrit=True`` the layout is the full device space: one qutrit
    followed by an even number (>= 2) of modes.  Layouts with
    ``qutrit=False`` describe cavity-only or single-mode spaces, e.g. the
    result of tracing out the qutrit.
    """

    mode_cutoffs: tuple[int, ...]
    qutrit: bool = True

    def __post_init__(self) -> None:
        cutoffs = tuple(int(d) for d in self.mode_cutoffs)
        object.__setattr__(self, "mode_cutoffs", cutoffs)
        if any(d < 2 for d in cutoffs):
            raise LayoutError(f"mode cutoffs must be >= 2, got {cutoffs}")
        if self.qutrit:
            if len(cutoffs) < 2 or len(cutoffs) % 2:
                raise LayoutError(
                    f"device layout needs an even number (>= 2) of modes, got {len(cutoffs)}"
                )
        elif not cutoffs:
            raise LayoutError("layout without qutrit needs at least one mode")

    @classmethod
    def uniform(cls, n_pairs: int, cutoff: int) -> "HilbertLayout":
        return cls((cutoff,) * (2 * n_pairs))

    @property
    def n_modes(self) -> int:
        return len(self.mode_cutoffs)

    @property
    def n_pairs(self) -> int:
        return self.n_modes // 2

    @property
    def dims(self) -> tuple[int, ...]:
        return ((QUTRIT_DIM,) if self.qutrit else ()) + self.mode_cutoffs

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def labels(self) -> tuple[int, ...]:
        """Subsystem labels in storage order (0 is the qutrit)."""
        start = 0 if self.qutrit else 1
        return tuple(range(start, self.n_modes + 1))

    def axis(self, subsystem: int) -> int:
        """Position of ``subsystem`` in :attr:`dims`."""
        if subsystem not in self.labels:
            raise LayoutError(f"subsystem {subsystem} not in layout {self.labels}")
        return subsystem if self.qutrit else subsystem - 1

    def subdim(self, subsystem: int) -> int:
        return self.dims[self.axis(subsystem)]

    def cavity(self) -> "HilbertLayout":
        """The same modes without the qutrit."""
        return HilbertLayout(self.mode_cutoffs, qutrit=False)

    def reduced(self, keep: Iterable[int]) -> "HilbertLayout":
        """Layout of the subsystems in ``keep`` (canonical order).

        Kept modes are relabelled 1..k in the result.
        """
        keep = sorted(set(keep))
        for s in keep:
            self.axis(s)
        has_q = 0 in keep
        cutoffs = tuple(self.subdim(s) for s in keep if s != 0)
        if has_q and (len(cutoffs) < 2 or len(cutoffs) % 2):
            raise LayoutError("reduced layouts keeping the qutrit need an even mode count")
        if not has_q and not cutoffs:
            raise LayoutError("cannot build a layout holding the qutrit alone")
        return HilbertLayout(cutoffs, qutrit=has_q)


def _clean(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=complex)
    if m.nnz:
        small = np.abs(m.data) < DROP_TOL
        if small.any():
            m.data[small] = 0.0
            m.eliminate_zeros()
    m.sum_duplicates()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Immutable complex sparse operator bound to a layout."""

    layout: HilbertLayout
    matrix: sp.csr_matrix
    _hermitian: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = _clean(self.matrix)
        n = self.layout.dim
        if m.shape != (n, n):
            raise LayoutError(f"operator shape {m.shape} does not match layout dim {n}")
        m.data.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, layout: HilbertLayout) -> "SparseOperator":
        return cls(layout, sp.csr_matrix((layout.dim, layout.dim), dtype=complex))

    @classmethod
    def identity(cls, layout: HilbertLayout) -> "SparseOperator":
        return cls(layout, sp.identity(layout.dim, dtype=complex, format="csr"))

    # views ------------------------------------------------------------------
    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def entries(self) -> list[tuple[int, int, complex]]:
        """Sorted coordinate list of stored entries."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]), int(coo.col[k]), complex(coo.data[k])) for k in order]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_zero(self) -> bool:
        return self.matrix.nnz == 0

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        if tol not in self._hermitian:
            self._hermitian[tol] = self.hermiticity_error() < tol
        return self._hermitian[tol]

    # arithmetic -------------------------------------------------------------
    def _check(self, other: "SparseOperator") -> None:
        if not isinstance(other, SparseOperator):
            raise TypeError(f"expected SparseOperator, got {type(other).__name__}")
        if other.layout != self.layout:
            raise LayoutError("operator layouts differ")

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.layout, self.matrix - other.matrix)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(self.layout, -self.matrix)

    def __mul__(self, scalar: complex) -> "SparseOperator":
        if isinstance(scalar, SparseOperator):
            raise TypeError("use @ for operator products")
        return SparseOperator(self.layout, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self.layout, self.matrix @ other.matrix)

    def dag(self) -> "SparseOperator":
        return SparseOperator(self.layout, self.matrix.conj().T)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


def add(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a + b


def scale(a: SparseOperator, c: complex) -> SparseOperator:
    return a * c


def multiply(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b


def adjoint(a: SparseOperator) -> SparseOperator:
    return a.dag()


def commutator(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b - b @ a


def op_sum(ops: Iterable[SparseOperator], layout: HilbertLayout) -> SparseOperator:
    total = sp.csr_matrix((layout.dim, layout.dim), dtype=complex)
    for op in ops:
        if op.layout != layout:
            raise LayoutError("operator layouts differ")
        total = total + op.matrix
    return SparseOperator(layout, total)


# local operators ------------------------------------------------------------
def destroy(cutoff: int) -> np.ndarray:
    """Truncated annihilation matrix: sqrt(n) at (n-1, n)."""
    return np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)


def number(cutoff: int) -> np.ndarray:
    return np.diag(np.arange(cutoff)).astype(complex)


def qutrit_matrix(bra: str, ket: str) -> np.ndarray:
    """|bra><ket| on the three qutrit levels ``g``, ``e``, ``f``."""
    try:
        i, j = LEVELS[bra], LEVELS[ket]
    except KeyError as exc:
        raise LayoutError(f"unknown qutrit level {exc.args[0]!r}") from None
    m = np.zeros((QUTRIT_DIM, QUTRIT_DIM), dtype=complex)
    m[i, j] = 1.0
    return m


def embed(local_op, subsystem: int, layout: HilbertLayout) -> SparseOperator:
    """Kronecker-embed ``local_op`` on one subsystem with identities elsewhere."""
    axis = layout.axis(subsystem)
    dims = layout.dims
    local = sp.csr_matrix(local_op, dtype=complex)
    if local.shape != (dims[axis], dims[axis]):
        raise LayoutError(
            f"local operator shape {local.shape} does not match subsystem dim {dims[axis]}"
        )
    left = int(np.prod(dims[:axis]))
    right = int(np.prod(dims[axis + 1:]))
    mats = []
    if left > 1:
        mats.append(sp.identity(left, dtype=complex, format="csr"))
    mats.append(local)
    if right > 1:
        mats.append(sp.identity(right, dtype=complex, format="csr"))
    full = reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)
    return SparseOperator(layout, full)


def annihilation(mode_index: int, layout: HilbertLayout) -> SparseOperator:
    if not 1 <= mode_index <= layout.n_modes:
        raise LayoutError(f"mode index {mode_index} outside 1..{layout.n_modes}")
    return embed(destroy(layout.subdim(mode_index)), mode_index, layout)


def creation(mode_index: int, layout: HilbertLayout) -> SparseOperator:
    return annihilation(mode_index, layout).dag()


def number_op(mode_index: int, layout: HilbertLayout) -> SparseOperator:
    if not 1 <= mode_index <= layout.n_modes:
        raise LayoutError(f"mode index {mode_index} outside 1..{layout.n_modes}")
    return embed(number(layout.subdim(mode_index)), mode_index, layout)


def qutrit_op(bra: str, ket: str, layout: HilbertLayout) -> SparseOperator:
    if not layout.qutrit:
        raise LayoutError("layout has no qutrit")
    return embed(qutrit_matrix(bra, ket), 0, layout)


def kron_dense(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Dense Kronecker product in the given order (used by oracles)."""
    return reduce(np.kron, mats)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """State vector or density matrix on a layout."""

    layout: HilbertLayout
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=complex)
        n = self.layout.dim
        if data.shape not in ((n,), (n, n)):
            raise LayoutError(f"state shape {data.shape} does not match layout dim {n}")
        object.__setattr__(self, "data", data)

    @property
    def kind(self) -> str:
        return "vector" if self.data.ndim == 1 else "density"

    @property
    def is_vector(self) -> bool:
        return self.data.ndim == 1

    def norm(self) -> float:
        if self.is_vector:
            return float(np.linalg.norm(self.data))
        return float(np.real(np.trace(self.data)))

    def normalized(self) -> "QuantumState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize a zero state")
        return QuantumState(self.layout, self.data / n)

    def to_density(self) -> "QuantumState":
        if not self.is_vector:
            return self
        return QuantumState(self.layout, np.outer(self.data, self.data.conj()))

    def hermiticity_error(self) -> float:
        if self.is_vector:
            return 0.0
        return float(np.abs(self.data - self.data.conj().T).max())

    def tensor(self, other: "QuantumState") -> np.ndarray:
        """Raw Kronecker product of two vector states (caller picks the layout)."""
        return np.kron(self.data, other.data)
