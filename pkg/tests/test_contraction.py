"""Closed-form contraction vs oracles, identities and invariances."""

import numpy as np
import pytest

from loopnet import (
    contract,
    contract_network,
    dissipative_hamiltonian,
    effective_L_operators,
    ideal_circulator,
    routing_matrices,
    truncated_series_oracle,
    two_qubit_network,
    verify_inversion_identities,
)
from loopnet.errors import NonConvergentLoop, SingularMatrix
from loopnet.network import (
    Connection,
    Network,
    Port,
    ScatteringBlock,
    assemble_H_sys,
    assemble_L,
    assemble_S,
    assemble_W,
    dag,
)

from conftest import (
    fabry_perot,
    fabry_perot_transmission_oracle,
    permute_network,
    random_sw_pair,
    random_unitary,
)


def random_L(rng, n, d):
    return [
        rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        for _ in range(n)
    ]


def test_inversion_identities_random(rng):
    for _ in range(40):
        n = int(rng.integers(2, 9))
        s, w = random_sw_pair(rng, n)
        res = verify_inversion_identities(s, w)
        assert res["projector_identity"] < 1e-10
        assert res["half_sum_identity"] < 1e-10


def test_series_matches_inverse(rng):
    for _ in range(20):
        n = int(rng.integers(3, 8))
        s, w = random_sw_pair(rng, n, rho_max=0.9)
        rho = np.abs(np.linalg.eigvals(s @ w)).max()
        ell = random_L(rng, n, 2)
        model = contract(s, w, ell, np.zeros((2, 2)))
        n_terms = 100
        s_approx, coeffs = truncated_series_oracle(s, w, None, n_terms)
        # theoretical truncation bound with a machine-precision floor
        bound = max(2.0 * rho ** (n_terms + 1) / (1.0 - rho), 1e-13)
        sub = s_approx[np.ix_(model.external_outputs, model.external_inputs)]
        assert np.abs(sub - model.s_eff).max() <= bound
        assert np.abs(
            coeffs[model.external_outputs, :] - model.l_eff_coeffs
        ).max() <= bound


def test_fabry_perot_against_geometric_series():
    for r in (0.1, 0.5, 0.9):
        for phase in np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False):
            model = contract_network(fabry_perot(r, phase))
            # external ports are 0 and 3; transmission is 0 -> 3
            trans = model.s_eff[1, 0]
            oracle = fabry_perot_transmission_oracle(r, phase)
            assert abs(trans - oracle) < 1e-12


def test_zero_W_returns_bare_network(rng):
    n, d = 4, 2
    s = random_unitary(rng, n)
    w = np.zeros((n, n), dtype=complex)
    ell = random_L(rng, n, d)
    h = rng.standard_normal((d, d))
    h = h + h.T
    model = contract(s, w, ell, h)
    assert np.abs(model.s_eff - s).max() < 1e-14
    assert np.abs(model.l_eff_coeffs - np.eye(n)).max() < 1e-14
    assert np.abs(model.h_eff - h).max() < 1e-14


def test_h_eff_is_hermitian(rng):
    for seed in range(10):
        n = int(rng.integers(3, 8))
        s, w = random_sw_pair(rng, n)
        model = contract(s, w, random_L(rng, n, 3), np.zeros((3, 3)))
        assert np.abs(model.h_eff - dag(model.h_eff)).max() < 1e-10


def test_s_eff_isometry(rng):
    for _ in range(10):
        n = int(rng.integers(3, 8))
        s, w = random_sw_pair(rng, n)
        model = contract(s, w, random_L(rng, n, 2), np.zeros((2, 2)))
        prod = dag(model.s_eff) @ model.s_eff
        assert np.abs(prod - np.eye(prod.shape[0])).max() < 1e-10


def test_relabel_invariance(rng):
    net = two_qubit_network(ideal_circulator(), ideal_circulator(),
                            kappa_a=1.3, kappa_b=0.8, phi_a=0.5,
                            interconnect_phase=0.9, h_az=0.2, h_bz=-0.7)
    model = contract_network(net)
    perm = list(rng.permutation(net.n_ports))
    permuted = permute_network(net, perm)
    model_p = contract_network(permuted)

    # effective Hamiltonian is label independent
    assert np.abs(model.h_eff - model_p.h_eff).max() < 1e-10

    # S_eff agrees up to the induced permutation of external ports
    ext_in_order = np.argsort([perm[p] for p in model.external_inputs])
    ext_out_order = np.argsort([perm[p] for p in model.external_outputs])
    assert np.abs(
        model.s_eff[np.ix_(ext_out_order, ext_in_order)] - model_p.s_eff
    ).max() < 1e-10

    # each materialized effective Lindblad operator is unchanged
    ops = effective_L_operators(model)
    ops_p = effective_L_operators(model_p)
    for j, op in enumerate(ops):
        assert np.abs(op - ops_p[ext_out_order[j]]).max() < 1e-10


def test_non_convergent_loop_raises():
    # two swap blocks in a closed unitary loop: rho(SW) = 1
    ports = [Port(0, "a"), Port(1, "a"), Port(2, "b"), Port(3, "b")]
    swap = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    blocks = [ScatteringBlock("a", swap), ScatteringBlock("b", swap)]
    conns = [Connection(1, 2, phase=0.0), Connection(3, 0, phase=0.0)]
    net = Network(ports, blocks, connections=conns)
    with pytest.raises(NonConvergentLoop):
        contract_network(net)


def test_singular_rejection(rng):
    s, w = random_sw_pair(rng, 4)
    with pytest.raises(SingularMatrix):
        contract(s, w, random_L(rng, 4, 2), np.zeros((2, 2)), cond_max=1.0)


def test_routing_diagnostics(rng):
    s, w = random_sw_pair(rng, 5)
    routing = routing_matrices(s, w)
    sw = s @ w
    assert np.isclose(routing.spectral_radius_SW,
                      np.abs(np.linalg.eigvals(sw)).max())
    assert np.isclose(routing.sigma_max_SW,
                      np.linalg.svd(sw, compute_uv=False).max())
    assert np.abs(routing.T - (routing.G - np.eye(5))).max() < 1e-12


def test_dissipative_hamiltonian_identity():
    net = two_qubit_network(ideal_circulator(), ideal_circulator(),
                            kappa_a=1.2, kappa_b=0.6)
    model = contract_network(net)
    h = dissipative_hamiltonian(model)
    assert np.abs(h - model.h_loss).max() < 1e-12


def test_contract_network_matches_manual_assembly():
    net = fabry_perot(0.4, 0.8)
    model = contract_network(net)
    manual = contract(assemble_S(net), assemble_W(net), assemble_L(net),
                      np.zeros((1, 1)))
    assert np.abs(model.s_eff - manual.s_eff).max() == 0.0
    assert assemble_H_sys(net).shape == (1, 1)
