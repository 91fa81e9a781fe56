"""Shared fixtures and small network factories for the test suite."""

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
)
from loopnet.network import SIGMA_MINUS


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_sw_pair(rng: np.random.Generator, n: int, rho_max: float = 0.999):
    """Seeded random (unitary S, partial-permutation W) with rho(SW) < rho_max."""
    while True:
        s = random_unitary(rng, n)
        k = int(rng.integers(1, n))
        outs = rng.permutation(n)[:k]
        ins = rng.permutation(n)[:k]
        w = np.zeros((n, n), dtype=complex)
        w[ins, outs] = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, k))
        if np.abs(np.linalg.eigvals(s @ w)).max() < rho_max:
            return s, w


def mirror_block(r: float) -> np.ndarray:
    t = np.sqrt(1.0 - r * r)
    return np.array([[r, t], [t, -r]], dtype=complex)


def fabry_perot(r: float, phase: float) -> Network:
    """Two partially reflecting mirrors facing each other.

    Ports 0/3 are external; 1 and 2 face each other across the cavity.
    """
    ports = [
        Port(0, "mirror_a", 0.0),
        Port(1, "mirror_a", 0.0),
        Port(2, "mirror_b", 1.0),
        Port(3, "mirror_b", 1.0),
    ]
    blocks = [
        ScatteringBlock("mirror_a", mirror_block(r)),
        ScatteringBlock("mirror_b", mirror_block(r)),
    ]
    connections = [
        Connection(1, 2, phase=phase),
        Connection(2, 1, phase=phase),
    ]
    return Network(ports, blocks, connections=connections,
                   geometry=Geometry(v_p=1.0))


def fabry_perot_transmission_oracle(r: float, phase: float,
                                    n_terms: int = 400) -> complex:
    """Brute-force geometric series for the cavity transmission."""
    t = np.sqrt(1.0 - r * r)
    round_trip = -(r * r) * np.exp(2j * phase)
    total = sum(round_trip**n for n in range(n_terms))
    return t * t * np.exp(1j * phase) * total


def single_qubit_network(kappa: float = 1.0) -> Network:
    """One qubit radiating into a single unconnected port (W = 0)."""
    ports = [Port(0, "qubit", 0.0)]
    blocks = [ScatteringBlock("qubit", np.array([[1.0 + 0.0j]]))]
    systems = [
        LocalSystem("qubit", 2, np.zeros((2, 2), dtype=complex),
                    {0: Coupling(SIGMA_MINUS, kappa)})
    ]
    return Network(ports, blocks, systems=systems)


def permute_network(net: Network, perm: list) -> Network:
    """Relabel port ids by perm (new_id = perm[old_id]), permuting blocks
    so that the physical network is unchanged."""
    new_ports = [
        Port(perm[p.id], p.element_id, p.position_z) for p in net.ports
    ]
    blocks = []
    for block in net.blocks:
        old_ids = sorted(p.id for p in net.ports if p.element_id == block.element_id)
        new_ids = [perm[i] for i in old_ids]
        order = np.argsort(new_ids)  # local positions sorted by new id
        m = np.asarray(block.matrix, dtype=complex)
        blocks.append(ScatteringBlock(block.element_id, m[np.ix_(order, order)]))
    systems = [
        LocalSystem(
            s.element_id, s.hilbert_dim, s.hamiltonian,
            {perm[p]: c for p, c in s.couplings.items()},
        )
        for s in net.systems
    ]
    connections = [
        Connection(perm[c.from_port], perm[c.to_port],
                   phase=c.phase, distance=c.distance)
        for c in net.connections
    ]
    return Network(new_ports, blocks, systems, connections, net.geometry,
                   allow_self_loops=net.allow_self_loops)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
