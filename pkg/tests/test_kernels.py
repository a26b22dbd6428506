import os
import subprocess
import sys
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from cattransfer import _fallback, kernels
from cattransfer.dynamics import CollapseSet, SolverConfig, evolve_lindblad
from cattransfer.hamiltonians import DispersiveWarning, SystemParams, build_effective_H2
from cattransfer.hilbert import HilbertLayout, QuantumState

try:
    from cattransfer import _kernels
except ImportError:  # extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def rand_c(rng, *shape):
    return np.ascontiguousarray(rng.normal(size=shape) + 1j * rng.normal(size=shape))


def herm(rng, n):
    a = rand_c(rng, n, n)
    return np.ascontiguousarray(a + a.conj().T)


@needs_ext
@pytest.mark.parametrize("n", [1, 7, 70, 130])
def test_csr_matmat_agrees(n):
    rng = np.random.default_rng(n)
    a = sp.random(n, n, density=0.2, random_state=rng, format="csr") * (1 + 2j)
    a = a.tocsr()
    a.sort_indices()
    indptr, indices = a.indptr.astype(np.int32), a.indices.astype(np.int32)
    data = np.ascontiguousarray(a.data, dtype=complex)
    x = rand_c(rng, n, n)
    o1, o2 = np.empty_like(x), np.empty_like(x)
    _kernels.csr_matmat(indptr, indices, data, x, o1)
    _fallback.csr_matmat(indptr, indices, data, x, o2)
    assert np.abs(o1 - o2).max() <= 1e-14 * max(1.0, np.abs(o2).max())
    assert np.allclose(o2, a @ x)


@needs_ext
@pytest.mark.parametrize("n", [1, 31, 33, 100])
def test_anti_hermitian_part_agrees(n):
    rng = np.random.default_rng(n)
    a = rand_c(rng, n, n)
    o1, o2 = np.empty_like(a), np.empty_like(a)
    _kernels.anti_hermitian_part(a, o1)
    _fallback.anti_hermitian_part(a, o2)
    assert np.abs(o1 - o2).max() <= 1e-14 * np.abs(o2).max()
    assert np.allclose(o2, -1j * (a - a.conj().T))


@needs_ext
def test_jump_sandwich_agrees_on_device_channels():
    rng = np.random.default_rng(3)
    lay = HilbertLayout((3, 2))
    cs = CollapseSet.from_params(SystemParams.default(n_pairs=1), lay)
    arrays = cs.jump_arrays()
    rho = herm(rng, lay.dim)
    o1 = rand_c(rng, lay.dim, lay.dim)
    o2 = o1.copy()
    _kernels.jump_sandwich(*arrays, rho, o1)
    _fallback.jump_sandwich(*arrays, rho, o2)
    assert np.abs(o1 - o2).max() <= 1e-14 * np.abs(o2).max()
    acc = np.zeros_like(rho)
    _fallback.jump_sandwich(*arrays, rho, acc)
    direct = sum(c @ rho @ c.conj().T for c in cs.scaled_ops())
    assert np.allclose(acc, direct)


@needs_ext
def test_axpy_kernels_agree():
    rng = np.random.default_rng(4)
    x, y = rand_c(rng, 40, 40), rand_c(rng, 40, 40)
    alpha = 0.3 - 0.7j
    o1, o2 = np.empty_like(x), np.empty_like(x)
    _kernels.axpy_into(o1, x, alpha, y)
    _fallback.axpy_into(o2, x, alpha, y)
    assert np.abs(o1 - o2).max() <= 1e-14
    x1, x2 = x.copy(), x.copy()
    _kernels.axpy_inplace(x1, alpha, y)
    _fallback.axpy_inplace(x2, alpha, y)
    assert np.abs(x1 - x2).max() <= 1e-14


@needs_ext
def test_lindblad_run_identical_across_backends(monkeypatch):
    p = SystemParams.default(n_pairs=1)
    lay = HilbertLayout((3, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DispersiveWarning)
        H = build_effective_H2(p, lay)
    psi = np.zeros(lay.dim, complex)
    psi[0] = psi[lay.dim // 3 + 2] = 2**-0.5  # (|g,0,0> + |e,1,0>)/sqrt2
    rho0 = QuantumState(lay, psi)
    cs = CollapseSet.from_params(p, lay)
    cfg = SolverConfig.spanning("lindblad-rk4", 2e-9, 200)
    a = evolve_lindblad(H, cs, rho0, cfg)
    for name in ("csr_matmat", "anti_hermitian_part", "jump_sandwich", "axpy_into", "axpy_inplace"):
        monkeypatch.setattr(kernels, name, getattr(_fallback, name))
    b = evolve_lindblad(H, cs, rho0, cfg)
    assert np.abs(a.final_state.data - b.final_state.data).max() < 1e-13


def _backend_in_subprocess(env_extra):
    env = {**os.environ, **env_extra}
    out = subprocess.run([sys.executable, "-c", "import cattransfer; print(cattransfer.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_pure_python_switch_selects_fallback():
    assert _backend_in_subprocess({"CATTRANSFER_PURE_PYTHON": "1"}) == "python"


@needs_ext
def test_compiled_backend_selected_by_default():
    env = {k: v for k, v in os.environ.items() if k != "CATTRANSFER_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", "import cattransfer; print(cattransfer.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "cython"
    assert kernels.BACKEND in ("cython", "python")
