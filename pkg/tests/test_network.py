"""Network construction, validation, assembly and file round-trips."""

import json

import numpy as np
import pytest

from loopnet import (
    Connection,
    Coupling,
    Geometry,
    LocalSystem,
    Network,
    Port,
    ScatteringBlock,
    assemble_H_sys,
    assemble_L,
    assemble_S,
    assemble_W,
    ideal_circulator,
    internal_projectors,
    load_network,
    nearest_unitary,
    network_from_dict,
    network_to_dict,
    save_network,
    two_qubit_network,
    unitarity_deviation,
    unitary_with_magnitudes,
)
from loopnet.errors import (
    DimensionMismatch,
    DuplicateConnection,
    NonUnitaryBlock,
    PhaseAndDistanceBothGiven,
    PortCoverageGap,
    SchemaError,
    SelfLoopConnection,
)
from loopnet.network import SIGMA_MINUS, embed_operator

from conftest import fabry_perot, random_unitary


def two_port(element="a", ids=(0, 1)):
    return [Port(ids[0], element), Port(ids[1], element)]


def test_port_ids_must_be_contiguous():
    with pytest.raises(SchemaError):
        Network([Port(0, "a"), Port(2, "a")],
                [ScatteringBlock("a", np.eye(2))])


def test_blocks_must_cover_all_ports():
    with pytest.raises(PortCoverageGap):
        Network(two_port(), [])
    with pytest.raises(PortCoverageGap):
        Network(two_port(), [ScatteringBlock("a", np.eye(3))])
    with pytest.raises(PortCoverageGap):
        Network(two_port(), [ScatteringBlock("a", np.eye(2)),
                             ScatteringBlock("a", np.eye(2))])


def test_duplicate_connection_rejected():
    ports = two_port("a") + two_port("b", (2, 3))
    blocks = [ScatteringBlock("a", np.eye(2)), ScatteringBlock("b", np.eye(2))]
    with pytest.raises(DuplicateConnection):
        Network(ports, blocks, connections=[
            Connection(1, 2, phase=0.0), Connection(1, 3, phase=0.0)])


def test_phase_and_distance_exclusive():
    ports = two_port("a") + two_port("b", (2, 3))
    blocks = [ScatteringBlock("a", np.eye(2)), ScatteringBlock("b", np.eye(2))]
    with pytest.raises(PhaseAndDistanceBothGiven):
        Network(ports, blocks,
                connections=[Connection(1, 2, phase=0.1, distance=1.0)])


def test_self_loop_needs_flag():
    ports = two_port("a")
    blocks = [ScatteringBlock("a", np.eye(2))]
    conns = [Connection(1, 0, phase=0.0)]
    with pytest.raises(SelfLoopConnection):
        Network(ports, blocks, connections=conns)
    net = Network(ports, blocks, connections=conns, allow_self_loops=True)
    assert net.connections


def test_non_hermitian_hamiltonian_rejected():
    ports = [Port(0, "q")]
    blocks = [ScatteringBlock("q", np.eye(1))]
    with pytest.raises(DimensionMismatch):
        Network(ports, blocks, systems=[
            LocalSystem("q", 2, np.array([[0.0, 1.0], [0.0, 0.0]]))])


def test_coupling_validation():
    ports = [Port(0, "q"), Port(1, "other")]
    blocks = [ScatteringBlock("q", np.eye(1)), ScatteringBlock("other", np.eye(1))]
    with pytest.raises(DimensionMismatch):
        Network(ports, blocks, systems=[
            LocalSystem("q", 2, np.zeros((2, 2)),
                        {1: Coupling(SIGMA_MINUS, 1.0)})])
    with pytest.raises(DimensionMismatch):
        Network(ports, blocks, systems=[
            LocalSystem("q", 2, np.zeros((2, 2)),
                        {0: Coupling(SIGMA_MINUS, -1.0)})])


def test_assemble_S_unitary_and_block_placement(rng):
    net = two_qubit_network(ideal_circulator(), ideal_circulator())
    s = assemble_S(net)
    assert unitarity_deviation(s) < 1e-12
    # circulator block sits at ports 1..3
    assert np.allclose(s[1:4, 1:4], ideal_circulator())
    assert s[0, 1] == 0


def test_assemble_S_rejects_non_unitary_block():
    ports = two_port()
    blocks = [ScatteringBlock("a", np.array([[1.0, 0.1], [0.0, 1.0]]))]
    net = Network(ports, blocks)
    with pytest.raises(NonUnitaryBlock):
        assemble_S(net)


def test_connection_matrix_invariants():
    net = two_qubit_network(ideal_circulator(), ideal_circulator())
    w = assemble_W(net)
    i_i, x_i, i_o, x_o = internal_projectors(w)
    assert np.abs(w.conj().T @ w - i_o).max() < 1e-14
    assert np.abs(w @ w.conj().T - i_i).max() < 1e-14
    assert np.abs(w - i_i @ w @ i_o).max() == 0.0
    # projector algebra is exact
    n = net.n_ports
    assert np.abs(x_i + i_i - np.eye(n)).max() == 0.0
    assert np.abs(x_i @ i_i).max() == 0.0
    assert np.abs(x_o + i_o - np.eye(n)).max() == 0.0
    assert np.abs(x_o @ i_o).max() == 0.0


def test_connection_phase_from_distance():
    geometry = Geometry(k0=2.0, v_p=1.0)
    net = fabry_perot(0.5, 0.0)
    conn = Connection(1, 2, distance=0.7)
    net = Network(net.ports, net.blocks, connections=[conn],
                  geometry=geometry)
    w = assemble_W(net)
    assert np.isclose(w[2, 1], np.exp(1j * 2.0 * 0.7))


def test_embed_operator_and_joint_assembly():
    net = two_qubit_network(ideal_circulator(), ideal_circulator(),
                            kappa_a=2.0, phi_a=0.3, h_az=0.8)
    ell = assemble_L(net)
    # port 0 carries sqrt(2) e^{0.3i} sigma_minus (x) identity
    expect = np.sqrt(2.0) * np.exp(0.3j) * np.kron(SIGMA_MINUS, np.eye(2))
    assert np.abs(ell[0] - expect).max() < 1e-14
    assert np.abs(ell[1]).max() == 0.0
    h = assemble_H_sys(net)
    sz = np.diag([1.0, -1.0])
    assert np.abs(h - 0.5 * 0.8 * np.kron(sz, np.eye(2))).max() < 1e-14


def test_nearest_unitary(rng):
    u0 = random_unitary(rng, 4)
    assert np.abs(nearest_unitary(u0) - u0).max() < 1e-12
    m = u0 + 0.05 * rng.standard_normal((4, 4))
    u = nearest_unitary(m)
    assert unitarity_deviation(u) < 1e-12


def test_unitary_with_magnitudes_consistent_target():
    m = np.array([[0.6, 0.8], [0.8, 0.6]])
    u = unitary_with_magnitudes(m)
    assert unitarity_deviation(u) < 1e-12
    assert np.abs(np.abs(u) - m).max() < 1e-8


def test_json_round_trip(tmp_path):
    net = two_qubit_network(ideal_circulator(), ideal_circulator(),
                            kappa_a=1.5, phi_b=0.2, h_bz=-0.4)
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded = load_network(path)
    assert network_to_dict(loaded) == network_to_dict(net)
    assert np.abs(assemble_S(loaded) - assemble_S(net)).max() == 0.0
    assert np.abs(assemble_W(loaded) - assemble_W(net)).max() == 0.0
    for a, b in zip(assemble_L(loaded), assemble_L(net)):
        assert np.abs(a - b).max() == 0.0


def test_named_operator_in_file(tmp_path):
    data = network_to_dict(two_qubit_network(ideal_circulator(),
                                             ideal_circulator()))
    data["systems"][0]["couplings"][0]["op"] = "sigma_minus"
    net = network_from_dict(data)
    assert np.abs(net.systems[0].couplings[0].operator - SIGMA_MINUS).max() == 0


def test_malformed_file_raises_schema_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_network(path)
    path.write_text(json.dumps({"ports": [{"id": 0}]}))
    with pytest.raises(SchemaError):
        load_network(path)


def test_embed_operator_unknown_element():
    net = two_qubit_network(ideal_circulator(), ideal_circulator())
    with pytest.raises(DimensionMismatch):
        embed_operator(net, "nope", SIGMA_MINUS)
