import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cattransfer.analysis import (
    SimulationResult,
    TransferFailure,
    cavity_state,
    extract_phases,
    fidelity,
    heisenberg_swap_check,
    observables,
    partial_trace,
    qutrit_reduced,
)
from cattransfer.hilbert import HilbertLayout, LayoutError, QuantumState
from cattransfer.states import CatParams, WStateSpec, cat_vector, compose, dressed_plus, ideal_target, w_state


def random_density(rng, n, rank=3):
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_vector(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


# partial trace ---------------------------------------------------------------


def test_partial_trace_of_product():
    rng = np.random.default_rng(0)
    lay = HilbertLayout((2, 3), qutrit=False)
    ra, rb = random_density(rng, 2, 2), random_density(rng, 3, 2)
    full = QuantumState(lay, np.kron(ra, rb))
    assert np.allclose(partial_trace(full, [1]).data, ra, atol=1e-14)
    assert np.allclose(partial_trace(full, [2]).data, rb, atol=1e-14)


def test_tracing_out_dressed_qutrit():
    lay = HilbertLayout((3, 3))
    cav = w_state(WStateSpec(1, 0.5), lay)
    full = compose(dressed_plus(), cav, lay).to_density()
    red = cavity_state(full)
    assert np.allclose(red.data, np.outer(cav.data, cav.data.conj()), atol=1e-14)
    q = qutrit_reduced(full)
    assert np.allclose(q, np.outer(dressed_plus(), dressed_plus().conj()), atol=1e-14)


def test_partial_trace_bell_like():
    lay = HilbertLayout((2, 2), qutrit=False)
    v = np.zeros(4, complex)
    v[1] = v[2] = 1 / math.sqrt(2)  # (|0,1> + |1,0>)/sqrt2
    red = partial_trace(QuantumState(lay, v), [1])
    assert np.allclose(red.data, np.diag([0.5, 0.5]), atol=1e-15)


def test_partial_trace_needs_keep():
    with pytest.raises(LayoutError):
        partial_trace(QuantumState(HilbertLayout((2, 2), qutrit=False), np.eye(4) / 4), [])


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    keep=st.lists(st.integers(1, 4), min_size=1, max_size=3, unique=True),
)
def test_partial_trace_preserves_trace_and_composes(seed, keep):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((2, 3, 2, 2), qutrit=False)
    rho = QuantumState(lay, random_density(rng, lay.dim, 4))
    red = partial_trace(rho, keep)
    assert abs(np.trace(red.data) - np.trace(rho.data)) < 1e-12
    # trace down to a superset first, then to the target set
    superset = sorted(set(keep) | {1})
    stage = partial_trace(rho, superset)
    relabel = {old: new for new, old in enumerate(superset, start=1)}
    twice = partial_trace(stage, [relabel[k] for k in keep])
    assert np.allclose(twice.data, red.data, atol=1e-12)


def test_partial_trace_vector_matches_density():
    rng = np.random.default_rng(4)
    lay = HilbertLayout((2, 3))
    v = QuantumState(lay, random_vector(rng, lay.dim))
    assert np.allclose(qutrit_reduced(v), qutrit_reduced(v.to_density()), atol=1e-14)
    for keep in ([1], [2], [1, 2], [0, 1, 2]):
        a = partial_trace(v, keep).data
        b = partial_trace(v.to_density(), keep).data
        assert np.allclose(a, b, atol=1e-14)


# fidelity --------------------------------------------------------------------


def test_fidelity_basic_values():
    rng = np.random.default_rng(5)
    lay = HilbertLayout((3, 3), qutrit=False)
    psi = random_vector(rng, 9)
    perp = random_vector(rng, 9)
    perp -= np.vdot(psi, perp) * psi
    perp /= np.linalg.norm(perp)
    ideal = QuantumState(lay, psi)
    assert fidelity(ideal, QuantumState(lay, np.outer(psi, psi.conj()))) == pytest.approx(1, abs=1e-12)
    assert fidelity(ideal, QuantumState(lay, np.outer(perp, perp.conj()))) == pytest.approx(0, abs=1e-7)
    mix = 0.5 * np.outer(psi, psi.conj()) + 0.5 * np.outer(perp, perp.conj())
    assert fidelity(ideal, QuantumState(lay, mix)) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert fidelity(ideal, QuantumState(lay, mix)) == pytest.approx(0.70711, abs=1e-5)


def test_fidelity_layout_mismatch():
    a = QuantumState(HilbertLayout((2, 2), qutrit=False), np.eye(4)[0])
    b = QuantumState(HilbertLayout((4,), qutrit=False), np.eye(4) / 4)
    with pytest.raises(LayoutError):
        fidelity(a, b)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), p=st.floats(0, 1))
def test_fidelity_squared_is_linear_in_mixing(seed, p):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((3, 2), qutrit=False)
    ideal = QuantumState(lay, random_vector(rng, 6))
    r1, r2 = random_density(rng, 6), random_density(rng, 6)
    lhs = fidelity(ideal, QuantumState(lay, p * r1 + (1 - p) * r2)) ** 2
    rhs = p * fidelity(ideal, QuantumState(lay, r1)) ** 2 + (1 - p) * fidelity(ideal, QuantumState(lay, r2)) ** 2
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_target_self_fidelity():
    lay = HilbertLayout((4,) * 6)
    tgt = ideal_target(WStateSpec(3, 0.5), None, lay)
    assert fidelity(tgt, tgt.to_density()) == pytest.approx(1, abs=1e-12)


def test_initial_state_has_zero_fidelity_with_target():
    lay = HilbertLayout((4,) * 6, qutrit=False)
    spec = WStateSpec(3, 0.5)
    assert fidelity(ideal_target(spec, None, lay), w_state(spec, lay)) < 1e-15


# observables -----------------------------------------------------------------


def test_observables_vacuum_and_cat():
    lay = HilbertLayout((5, 5))
    vac = np.zeros(lay.dim, complex)
    vac[0] = 1
    obs = observables(QuantumState(lay, vac))
    assert obs.pair_photon == (0.0,) and obs.qutrit_pops == (1.0, 0.0, 0.0)
    cav = np.kron(cat_vector(CatParams(0.5, "even"), 5), np.eye(5)[0])
    st_ = compose(dressed_plus(), QuantumState(lay.cavity(), cav), lay)
    obs = observables(st_)
    assert obs.parity[0] == pytest.approx(1.0, abs=1e-15)
    assert obs.qutrit_pops == pytest.approx((0.5, 0.5, 0.0), abs=1e-15)
    assert obs.pair_photon[0] == pytest.approx(obs.mode_photon[0])


def test_observables_density_matches_vector():
    rng = np.random.default_rng(6)
    lay = HilbertLayout((3, 3))
    v = QuantumState(lay, random_vector(rng, lay.dim))
    a, b = observables(v), observables(v.to_density())
    assert np.allclose(a.pair_photon, b.pair_photon) and np.allclose(a.qutrit_pops, b.qutrit_pops)


def test_odd_cat_parity_minus_one():
    lay = HilbertLayout((6,), qutrit=False)
    obs = observables(QuantumState(lay, cat_vector(CatParams(0.5, "odd"), 6)))
    assert obs.parity[0] == pytest.approx(-1.0, abs=1e-15)


# swap check ------------------------------------------------------------------


def test_swap_identity_at_zero_time():
    rep = heisenberg_swap_check(1.0, 0.0, cutoff=6, n_pairs=2)
    assert rep.max_deviation == 0.0 or rep.max_deviation < 1e-15
    for c in rep.checks:
        assert np.allclose(c.coefficients, (1, 0))


def test_swap_quarter_angle_coefficients():
    rep = heisenberg_swap_check(1.0, math.pi / 4, cutoff=8, n_pairs=2)
    assert rep.passed
    c1, c2 = rep.checks
    s = math.sqrt(2) / 2
    assert np.allclose(c1.coefficients, (s, 1j * s), atol=1e-10)
    assert np.allclose(c2.coefficients, (s, -1j * s), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(lt=st.floats(0, 2 * math.pi))
def test_swap_formula_holds_for_all_angles(lt):
    rep = heisenberg_swap_check(2.0, lt / 2.0, cutoff=6, n_pairs=2)
    assert rep.max_deviation < 1e-10


def test_swap_detects_sign_flip():
    rep = heisenberg_swap_check(1.0, math.pi / 2, cutoff=8, n_pairs=3, coupling_signs=[-1, -1, 1])
    assert not rep.passed
    assert rep.checks[1].deviation == pytest.approx(2.0, abs=1e-9)
    assert rep.checks[0].passed and rep.checks[2].passed


# phase extraction ------------------------------------------------------------


def test_extract_phase_self_fit():
    spec = WStateSpec(1, 0.5)
    lay = HilbertLayout((6, 6), qutrit=False)
    st_ = ideal_target(spec, [0.3], lay)
    fit = extract_phases(st_, spec)
    assert fit.phases[0] == pytest.approx(0.3, abs=1e-6)
    assert fit.residual_infidelity < 1e-9


def test_extract_phases_three_pairs():
    spec = WStateSpec(3, 0.5)
    lay = HilbertLayout((4,) * 6, qutrit=False)
    true = [0.4, 1.1, 5.0]
    fit = extract_phases(ideal_target(spec, true, lay), spec)
    assert np.allclose(fit.phases, true, atol=1e-6)
    assert fit.residual_infidelity < 1e-9


def test_extract_phases_vacuum_fails():
    spec = WStateSpec(1, 0.5)
    lay = HilbertLayout((4, 4), qutrit=False)
    vac = np.zeros(16, complex)
    vac[0] = 1
    with pytest.raises(TransferFailure):
        extract_phases(QuantumState(lay, vac), spec)


# result container ------------------------------------------------------------


def test_simulation_result_validation_and_rows():
    r = SimulationResult([0.0, 1.0], [0.0, 0.1], [0.0, 0.5], [1.0, 1.0], [[0.1, 0.2]], [[1, 0.5], [0, 0.5], [0, 0]])
    assert r.header() == ["t_seconds", "t_over_T", "fidelity", "fidelity_squared", "trace", "pair1_n",
                          "pop_g", "pop_e", "pop_f"]
    assert r.rows()[1][:4] == [1.0, 0.1, 0.5, 0.25]
    assert r.peak() == (0.5, 0.1)
    with pytest.raises(ValueError):
        SimulationResult([0.0], [0.0, 1.0], [0.0], [1.0], [], [])
    with pytest.raises(ValueError):
        SimulationResult([0.0], [0.0], [1.1], [1.0], [], [])
