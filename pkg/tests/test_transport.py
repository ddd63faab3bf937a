import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment

import oracles
from qdent.liouville import build_liouvillian, spectrum
from qdent.model import ContactSpec, eigenbasis, reference_params, ueV_to_kT
from qdent.transport import (CutoffTooSmall, fermi, jump_operators, lamb_shift, pv_integral,
                             total_hamiltonian, transition_table)

GAMMA = ueV_to_kT(1.0, 10.0)

# frozen from the oracle (1/(1+e^x) in double precision, quadrature for p)
F_30 = 9.357622968839299e-14
F_45 = 2.8625185805493937e-20
P_AT_MU = -18.671946663176524      # T=1, W=1e4, delta=mu
P_INSIDE = -9.464973275407457      # delta=3, mu=1, T=0.5, W=200
P_OUTSIDE = 1.007599850853577      # delta=-250, mu=1, T=0.5, W=200


# --- fermi ---------------------------------------------------------------

def test_fermi_values():
    assert fermi(2.0, 2.0, 0.7) == 0.5
    assert fermi(30.0, 0.0, 1.0) == pytest.approx(F_30, rel=1e-12)
    assert fermi(-45.0, 0.0, 1.0) == pytest.approx(1 - F_45, rel=1e-15)
    with pytest.raises(ValueError):
        fermi(0.0, 0.0, 0.0)


@given(e=st.floats(-200, 200), mu=st.floats(-50, 50), kt=st.floats(0.05, 10))
def test_fermi_particle_hole(e, mu, kt):
    assert fermi(mu + e, mu, kt) + fermi(mu - e, mu, kt) == pytest.approx(1.0, abs=1e-15)
    assert fermi(mu + e + 1.0, mu, kt) <= fermi(mu + e, mu, kt)


# --- transitions ---------------------------------------------------------

def test_transitions_from_empty_polarized(ref_params, ref_basis):
    tab = transition_table(ref_basis, ref_params)
    b = ref_basis
    i01 = b.index("01")
    # in the L contact basis (theta = 0) the channels are the dot channels
    amps = {(b.labels[t.to_index], t.spin_channel): t.amplitude
            for t in tab if t.contact == "L" and t.from_index == i01}
    assert amps.keys() == {("b1", "down"), ("c2", "up"), ("c3", "down")}
    assert amps[("b1", "down")] == pytest.approx(-math.sqrt(2 / 3))
    assert amps[("c2", "up")] == pytest.approx(1.0)
    assert amps[("c3", "down")] == pytest.approx(math.sqrt(1 / 3))


def test_transition_energies_and_dark_count(ref_params, ref_basis):
    tab = transition_table(ref_basis, ref_params)
    for t in tab:
        assert ref_basis.n_electrons[t.to_index] == ref_basis.n_electrons[t.from_index] + 1
        assert not t.dark
    to_b = [t.delta_e for t in tab if ref_basis.labels[t.to_index].startswith("b")]
    assert to_b and np.allclose(to_b, -15.0, atol=1e-12)
    full = transition_table(ref_basis, ref_params, include_dark=True)
    # 2 contacts x 2 channels x (4 empty x 8 singly occupied) pairs
    assert len(full) == 128
    assert sum(t.dark for t in full) == 128 - len(tab)
    assert jump_operators(ref_params, ref_basis).n_dark == 128 - len(tab)


def test_brute_force_amplitudes(ref_params, ref_basis):
    d_up = np.zeros((12, 12))
    d_dn = np.zeros((12, 12))
    for a in range(4):
        d_up[a, 4 + a] = 1.0
        d_dn[a, 8 + a] = 1.0
    vec = {lab: oracles.table_vector(lab, 3) for lab in ref_basis.labels}
    for t in transition_table(ref_basis, ref_params):
        op = d_up if t.spin_channel == "up" else d_dn
        brute = vec[ref_basis.labels[t.to_index]] @ op.T @ vec[ref_basis.labels[t.from_index]]
        assert t.amplitude == pytest.approx(brute, abs=1e-12)


# --- jump operators ------------------------------------------------------

def test_weights_and_structure(ref_params, ref_basis):
    jumps = jump_operators(ref_params, ref_basis)
    groups = {g.name: set(g.indices) for g in ref_basis.blocks.groups}
    energy = {g.name: g.energy for g in ref_basis.blocks.groups}
    for op in jumps:
        assert op.rate_weight >= 0
        rows, cols = np.nonzero(np.abs(op.matrix) > 1e-12)
        assert set(rows) <= groups[op.target] and set(cols) <= groups[op.source]
        if op.direction == "in":
            assert op.delta_e == pytest.approx(energy[op.target] - energy[op.source])
        if op.contact == "R" and op.spin_channel == "down":
            assert op.rate_weight == 0
    # in and out weights of one channel sum to gamma
    ins = [op for op in jumps if op.direction == "in"]
    outs = [op for op in jumps if op.direction == "out"]
    for a, b in zip(ins, outs):
        assert a.rate_weight + b.rate_weight == pytest.approx(a.gamma)


def test_window_weights(ref_params, ref_basis):
    jumps = jump_operators(ref_params, ref_basis)
    op = next(o for o in jumps if o.contact == "R" and o.spin_channel == "up"
              and o.direction == "in" and o.target == "b")
    assert op.rate_weight == pytest.approx(GAMMA * (1 - F_45), rel=1e-15)

    p0 = reference_params(mu_right=0.0)
    b0 = eigenbasis(p0)
    op = next(o for o in jump_operators(p0, b0) if o.contact == "L" and o.direction == "in"
              and o.target == "a")
    assert op.delta_e == pytest.approx(45.0, abs=1e-12)
    assert op.rate_weight == pytest.approx(GAMMA * F_45, rel=1e-12)


def test_infinite_u_has_no_double_manifold(ref_params, ref_basis, finite_u_params):
    assert all("2" not in (o.source, o.target) for o in jump_operators(ref_params, ref_basis))
    fb = eigenbasis(finite_u_params)
    assert any(o.target == "2" for o in jump_operators(finite_u_params, fb))


# --- principal value -----------------------------------------------------

def test_pv_frozen_values():
    assert pv_integral(0.0, 0.0, 1.0, 1e4) == pytest.approx(P_AT_MU, rel=1e-10)
    assert pv_integral(3.0, 1.0, 0.5, 200.0) == pytest.approx(P_INSIDE, rel=1e-10)
    assert pv_integral(-250.0, 1.0, 0.5, 200.0) == pytest.approx(P_OUTSIDE, rel=1e-10)


def test_pv_guards():
    with pytest.raises(CutoffTooSmall):
        pv_integral(0.0, 0.0, 1.0, 5.0)
    with pytest.raises(CutoffTooSmall):
        pv_integral(100.0, 0.0, 1.0, 100.0)


@given(x=st.floats(-500, 500), mu=st.floats(-50, 50), kt=st.floats(0.1, 5),
       logw=st.floats(2.5, 5))
def test_pv_even_about_mu(x, mu, kt, logw):
    w = 10 ** logw
    if abs(abs(x) - w) < 1e-6 * w:
        return
    assert pv_integral(mu + x, mu, kt, w) == pytest.approx(pv_integral(mu - x, mu, kt, w),
                                                           rel=1e-12, abs=1e-12)


@given(x=st.floats(-0.95, 0.95), kt=st.floats(0.2, 4), logw=st.floats(2.0, 4.0))
def test_pv_matches_quadrature(x, kt, logw):
    w = 10 ** logw
    ref = oracles.pv_quadrature(x * w, 0.0, kt, w)
    assert pv_integral(x * w, 0.0, kt, w) == pytest.approx(ref, rel=1e-6)


def test_pv_step_limit():
    # kt << |x|: tanh -> sign, p -> ln(x^2 / |W^2 - x^2|) - (pi kt / x)^2 / 3
    for x in (-300.0, 40.0, 700.0):
        step = math.log(x * x / abs(1e3 ** 2 - x * x))
        assert pv_integral(x, 0.0, 0.01, 1e3) == pytest.approx(step, abs=1e-6)
        corr = -(math.pi * 0.01 / x) ** 2 / 3
        assert pv_integral(x, 0.0, 0.01, 1e3) - step == pytest.approx(corr, rel=1e-3)


# --- Lamb shift ----------------------------------------------------------

def _unpolarized(v):
    base = reference_params(mu_right=v)
    cl = ContactSpec.from_polarization("L", GAMMA, 0.0, mu=0.0, temperature=10.0)
    cr = ContactSpec.from_polarization("R", GAMMA, 0.0, mu=v, temperature=10.0)
    return replace(base, contacts=(cl, cr))


def _blocks(h, basis):
    return {g.name: h[np.ix_(g.indices, g.indices)] for g in basis.blocks.groups}


def test_lamb_shift_hermitian_block_diagonal(ref_params, ref_basis):
    jumps = jump_operators(ref_params, ref_basis)
    h = lamb_shift(ref_params, ref_basis, jumps)
    assert np.allclose(h, h.conj().T)
    assert np.abs(h[~ref_basis.blocks.block_mask()]).max() == 0


def test_lamb_shift_linear_in_gamma(ref_params, ref_basis):
    h1 = lamb_shift(ref_params, ref_basis, jump_operators(ref_params, ref_basis))
    doubled = replace(ref_params, contacts=tuple(
        replace(c, gamma_up=2 * c.gamma_up, gamma_down=2 * c.gamma_down) for c in ref_params.contacts))
    h2 = lamb_shift(doubled, ref_basis, jump_operators(doubled, ref_basis))
    assert np.allclose(h2, 2 * h1, rtol=1e-12, atol=0)


def test_lamb_shift_unpolarized():
    p = _unpolarized(5.0)
    b = eigenbasis(p)
    blocks = _blocks(lamb_shift(p, b, jump_operators(p, b)), b)
    for name in ("a", "b", "c"):
        m = blocks[name]
        assert np.allclose(m, m[0, 0] * np.eye(len(m)), atol=1e-14 * GAMMA)
    # the empty manifold splits into ancilla singlet and triplet
    m = blocks["0"]
    w = np.linalg.eigvalsh(m)
    assert np.ptp(w) > 1e-3 * GAMMA


def test_lamb_shift_b_manifold_polarized_contacts():
    p = reference_params(mu_right=1.0)
    b = eigenbasis(p)
    m = _blocks(lamb_shift(p, b, jump_operators(p, b)), b)["b"]
    assert abs(m[0, 0] - m[1, 1]) > 1e-3 * GAMMA


def test_rotation_covariance():
    base = reference_params(mu_right=20.0)
    spectra = []
    for delta in (0.0, 0.7):
        p = base.with_contact("L", theta=delta, phi=0.3 * delta)
        p = p.with_contact("R", theta=delta, phi=0.3 * delta)
        b = eigenbasis(p)
        j = jump_operators(p, b)
        liou = build_liouvillian(total_hamiltonian(p, b, j), j, b)
        spectra.append(spectrum(liou).eigenvalues)
    a, c = spectra
    rows, cols = linear_sum_assignment(np.abs(a[:, None] - c[None, :]))
    assert np.abs(a[rows] - c[cols]).max() < 1e-9 * np.abs(a).max()
