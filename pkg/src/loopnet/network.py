"""Network elements, connection topology and global matrix assembly.

A network is a set of scattering elements (unitary blocks over their own
ports), optional local quantum systems coupled to specific ports, and a list
of directed connections that feed a subset of output ports back into input
ports with a unit-modulus propagation phase.

Conventions fixed here and relied on everywhere else:

* global port ids are 0..N-1 and index all assembled N x N matrices;
* an element's block acts on its ports in increasing port-id order;
* the joint Hilbert space is the tensor product of the local systems in
  declaration order, with operators embedded by identity padding;
* hbar = 1, rates in rad/s, positions in meters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import polar

from .errors import (
    DimensionMismatch,
    DuplicateConnection,
    NonUnitaryBlock,
    PhaseAndDistanceBothGiven,
    PortCoverageGap,
    SchemaError,
    SelfLoopConnection,
)

TOL_UNITARY = 1e-10
TOL_HERM = 1e-10

# Qubit basis ordering: index 0 = excited |up>, index 1 = ground |down>.
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

NAMED_OPERATORS = {
    "sigma_minus": SIGMA_MINUS,
    "sigma_plus": SIGMA_PLUS,
    "sigma_x": SIGMA_X,
    "sigma_y": SIGMA_Y,
    "sigma_z": SIGMA_Z,
}


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def unitarity_deviation(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    return float(np.abs(dag(matrix) @ matrix - np.eye(n)).max())


def hermiticity_deviation(matrix: np.ndarray) -> float:
    return float(np.abs(matrix - dag(matrix)).max())


def nearest_unitary(matrix: np.ndarray) -> np.ndarray:
    """Closest unitary in Frobenius norm, via the polar decomposition."""
    u, _ = polar(np.asarray(matrix, dtype=complex))
    return u


def unitary_with_magnitudes(
    magnitudes: np.ndarray,
    seed: int = 0,
    n_restarts: int = 20,
    n_sweeps: int = 500,
) -> np.ndarray:
    """Search for a unitary whose entry magnitudes approximate a target.

    Alternating projections between the unitary group and the set of
    matrices with the prescribed entry magnitudes, restarted from several
    random phase patterns.  Only magnitude patterns with unit row and
    column norms can be matched closely; other patterns return the best
    unitary found.  Deterministic for a fixed seed.
    """
    target = np.asarray(magnitudes, dtype=float)
    rng = np.random.default_rng(seed)
    best_err = np.inf
    best = None
    for _ in range(n_restarts):
        u = target * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, target.shape))
        for _ in range(n_sweeps):
            u = nearest_unitary(u)
            u = target * np.exp(1j * np.angle(u))
        u = nearest_unitary(u)
        err = float(np.abs(np.abs(u) - target).max())
        if err < best_err:
            best_err = err
            best = u
    return best


@dataclass(frozen=True)
class Port:
    id: int
    element_id: str
    position_z: float | None = None
    direction_label: str = ""


@dataclass(frozen=True)
class Coupling:
    operator: np.ndarray
    kappa: float
    phi: float = 0.0


@dataclass(frozen=True)
class ScatteringBlock:
    element_id: str
    matrix: np.ndarray


@dataclass(frozen=True)
class LocalSystem:
    element_id: str
    hilbert_dim: int
    hamiltonian: np.ndarray
    couplings: dict[int, Coupling] = field(default_factory=dict)


@dataclass(frozen=True)
class Connection:
    from_port: int
    to_port: int
    phase: float | None = None
    distance: float | None = None


@dataclass(frozen=True)
class Geometry:
    k0: float = 0.0
    v_p: float = 1.0
    kappa0: float = 1.0


@dataclass
class Network:
    ports: list[Port]
    blocks: list[ScatteringBlock]
    systems: list[LocalSystem] = field(default_factory=list)
    connections: list[Connection] = field(default_factory=list)
    geometry: Geometry = field(default_factory=Geometry)
    allow_self_loops: bool = False

    def __post_init__(self):
        ids = sorted(p.id for p in self.ports)
        if ids != list(range(len(self.ports))):
            raise SchemaError("port ids must be 0..N-1, contiguous and unique")
        self._validate_blocks()
        self._validate_connections()
        self._validate_systems()

    # -- validation ------------------------------------------------------

    def _validate_blocks(self):
        covered: list[int] = []
        by_element = {}
        for p in self.ports:
            by_element.setdefault(p.element_id, []).append(p.id)
        seen = set()
        for block in self.blocks:
            if block.element_id in seen:
                raise PortCoverageGap(
                    f"element {block.element_id!r} has more than one block"
                )
            seen.add(block.element_id)
            port_ids = sorted(by_element.get(block.element_id, []))
            if not port_ids:
                raise PortCoverageGap(
                    f"block for unknown element {block.element_id!r}"
                )
            m = np.asarray(block.matrix, dtype=complex)
            if m.shape != (len(port_ids), len(port_ids)):
                raise PortCoverageGap(
                    f"block for element {block.element_id!r} has shape "
                    f"{m.shape}, expected {(len(port_ids), len(port_ids))}"
                )
            covered.extend(port_ids)
        if sorted(covered) != list(range(self.n_ports)):
            raise PortCoverageGap("scattering blocks do not cover every port")

    def _validate_connections(self):
        seen_from, seen_to = set(), set()
        for c in self.connections:
            if c.phase is not None and c.distance is not None:
                raise PhaseAndDistanceBothGiven(
                    f"connection {c.from_port}->{c.to_port} gives both "
                    "phase and distance"
                )
            if c.from_port in seen_from or c.to_port in seen_to:
                raise DuplicateConnection(
                    f"port reused in connection {c.from_port}->{c.to_port}"
                )
            seen_from.add(c.from_port)
            seen_to.add(c.to_port)
            if not self.allow_self_loops:
                ea = self.port(c.from_port).element_id
                eb = self.port(c.to_port).element_id
                if ea == eb:
                    raise SelfLoopConnection(
                        f"connection {c.from_port}->{c.to_port} loops "
                        f"element {ea!r} back to itself; set "
                        "allow_self_loops=True if intended"
                    )

    def _validate_systems(self):
        port_owner = {p.id: p.element_id for p in self.ports}
        for sys in self.systems:
            h = np.asarray(sys.hamiltonian, dtype=complex)
            if h.shape != (sys.hilbert_dim, sys.hilbert_dim):
                raise DimensionMismatch(
                    f"hamiltonian of {sys.element_id!r} has shape {h.shape}"
                )
            if hermiticity_deviation(h) > TOL_HERM:
                raise DimensionMismatch(
                    f"hamiltonian of {sys.element_id!r} is not Hermitian"
                )
            for port_id, coupling in sys.couplings.items():
                if port_owner.get(port_id) != sys.element_id:
                    raise DimensionMismatch(
                        f"coupling of {sys.element_id!r} references port "
                        f"{port_id} which it does not own"
                    )
                op = np.asarray(coupling.operator, dtype=complex)
                if op.shape != (sys.hilbert_dim, sys.hilbert_dim):
                    raise DimensionMismatch(
                        f"coupling operator on port {port_id} has shape "
                        f"{op.shape}, expected square dim {sys.hilbert_dim}"
                    )
                if coupling.kappa < 0:
                    raise DimensionMismatch(
                        f"negative decay rate on port {port_id}"
                    )

    # -- bookkeeping -----------------------------------------------------

    @property
    def n_ports(self) -> int:
        return len(self.ports)

    def port(self, port_id: int) -> Port:
        for p in self.ports:
            if p.id == port_id:
                return p
        raise SchemaError(f"unknown port id {port_id}")

    def element_ports(self, element_id: str) -> list[int]:
        return sorted(p.id for p in self.ports if p.element_id == element_id)

    def joint_dimension(self) -> int:
        d = 1
        for sys in self.systems:
            d *= sys.hilbert_dim
        return d

    def connection_phase(self, conn: Connection) -> float:
        if conn.phase is not None:
            return conn.phase
        if conn.distance is not None:
            return self.geometry.k0 * conn.distance
        return 0.0

    def connection_distance(self, conn: Connection) -> float | None:
        """Propagation distance for delays: explicit, or from port positions."""
        if conn.distance is not None:
            return conn.distance
        za = self.port(conn.from_port).position_z
        zb = self.port(conn.to_port).position_z
        if za is None or zb is None:
            return None
        return abs(zb - za)


# -- assembly ------------------------------------------------------------


def assemble_S(network: Network) -> np.ndarray:
    """Block-diagonal unitary scattering matrix in global port order."""
    n = network.n_ports
    s = np.zeros((n, n), dtype=complex)
    for block in network.blocks:
        m = np.asarray(block.matrix, dtype=complex)
        deviation = unitarity_deviation(m)
        if deviation > TOL_UNITARY:
            raise NonUnitaryBlock(block.element_id, deviation)
        idx = np.array(network.element_ports(block.element_id))
        s[np.ix_(idx, idx)] = m
    return s


def assemble_W(network: Network) -> np.ndarray:
    """Connection matrix: rows index inputs, columns index outputs."""
    n = network.n_ports
    w = np.zeros((n, n), dtype=complex)
    for conn in network.connections:
        w[conn.to_port, conn.from_port] = np.exp(1j * network.connection_phase(conn))
    return w


def internal_projectors(w: np.ndarray):
    """(I_i, X_i, I_o, X_o) as exact 0/1 diagonal matrices."""
    n = w.shape[0]
    in_internal = np.abs(w).sum(axis=1) > 0.5
    out_internal = np.abs(w).sum(axis=0) > 0.5
    i_i = np.diag(in_internal.astype(float)).astype(complex)
    i_o = np.diag(out_internal.astype(float)).astype(complex)
    return i_i, np.eye(n) - i_i, i_o, np.eye(n) - i_o


def partition_ports(network: Network):
    """(internal_inputs, internal_outputs, external_inputs, external_outputs)."""
    internal_inputs = sorted(c.to_port for c in network.connections)
    internal_outputs = sorted(c.from_port for c in network.connections)
    all_ports = set(range(network.n_ports))
    external_inputs = sorted(all_ports - set(internal_inputs))
    external_outputs = sorted(all_ports - set(internal_outputs))
    return internal_inputs, internal_outputs, external_inputs, external_outputs


def embed_operator(network: Network, element_id: str, op: np.ndarray) -> np.ndarray:
    """Embed a local operator into the joint space by identity padding."""
    result = np.array([[1.0 + 0.0j]])
    found = False
    for sys in network.systems:
        if sys.element_id == element_id:
            result = np.kron(result, np.asarray(op, dtype=complex))
            found = True
        else:
            result = np.kron(result, np.eye(sys.hilbert_dim, dtype=complex))
    if not found:
        raise DimensionMismatch(f"no local system for element {element_id!r}")
    return result


def assemble_L(network: Network) -> list[np.ndarray]:
    """Joint-space emission operators, indexed by output port.

    Entry i is sqrt(kappa) e^{i phi} times the coupling operator of the
    system owning port i, identity-padded to the joint space; ports without
    a coupling get the zero operator.
    """
    d = network.joint_dimension()
    ops = [np.zeros((d, d), dtype=complex) for _ in range(network.n_ports)]
    for sys in network.systems:
        for port_id, coupling in sys.couplings.items():
            scale = np.sqrt(coupling.kappa) * np.exp(1j * coupling.phi)
            ops[port_id] = scale * embed_operator(
                network, sys.element_id, coupling.operator
            )
    return ops


def assemble_H_sys(network: Network) -> np.ndarray:
    """Sum of local Hamiltonians embedded into the joint space."""
    d = network.joint_dimension()
    h = np.zeros((d, d), dtype=complex)
    for sys in network.systems:
        h += embed_operator(network, sys.element_id, sys.hamiltonian)
    return h


# -- JSON file format ----------------------------------------------------


def _complex_to_pair(z: complex):
    return [float(np.real(z)), float(np.imag(z))]


def _matrix_to_pairs(m: np.ndarray):
    return [[_complex_to_pair(z) for z in row] for row in np.asarray(m)]


def _pairs_to_matrix(rows) -> np.ndarray:
    try:
        return np.array(
            [[complex(re, im) for re, im in row] for row in rows], dtype=complex
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed complex matrix: {exc}") from exc


def _operator_from_spec(spec) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in NAMED_OPERATORS:
            raise SchemaError(f"unknown operator name {spec!r}")
        return NAMED_OPERATORS[spec]
    return _pairs_to_matrix(spec)


def network_to_dict(network: Network) -> dict:
    return {
        "ports": [
            {"id": p.id, "element": p.element_id, "z": p.position_z}
            for p in network.ports
        ],
        "blocks": [
            {"element": b.element_id, "matrix": _matrix_to_pairs(b.matrix)}
            for b in network.blocks
        ],
        "systems": [
            {
                "element": s.element_id,
                "dim": s.hilbert_dim,
                "hamiltonian": _matrix_to_pairs(s.hamiltonian),
                "couplings": [
                    {
                        "port": port_id,
                        "op": _matrix_to_pairs(c.operator),
                        "kappa": c.kappa,
                        "phi": c.phi,
                    }
                    for port_id, c in sorted(s.couplings.items())
                ],
            }
            for s in network.systems
        ],
        "connections": [
            {
                "from": c.from_port,
                "to": c.to_port,
                **({"phase": c.phase} if c.phase is not None else {}),
                **({"distance": c.distance} if c.distance is not None else {}),
            }
            for c in network.connections
        ],
        "geometry": {
            "k0": network.geometry.k0,
            "v_p": network.geometry.v_p,
            "kappa0": network.geometry.kappa0,
        },
        "allow_self_loops": network.allow_self_loops,
    }


def network_from_dict(data: dict) -> Network:
    try:
        ports = [
            Port(id=p["id"], element_id=p["element"], position_z=p.get("z"))
            for p in data["ports"]
        ]
        blocks = [
            ScatteringBlock(b["element"], _pairs_to_matrix(b["matrix"]))
            for b in data["blocks"]
        ]
        systems = []
        for s in data.get("systems", []):
            couplings = {
                c["port"]: Coupling(
                    operator=_operator_from_spec(c["op"]),
                    kappa=float(c["kappa"]),
                    phi=float(c.get("phi", 0.0)),
                )
                for c in s.get("couplings", [])
            }
            systems.append(
                LocalSystem(
                    element_id=s["element"],
                    hilbert_dim=int(s["dim"]),
                    hamiltonian=_pairs_to_matrix(s["hamiltonian"]),
                    couplings=couplings,
                )
            )
        connections = [
            Connection(
                from_port=c["from"],
                to_port=c["to"],
                phase=c.get("phase"),
                distance=c.get("distance"),
            )
            for c in data.get("connections", [])
        ]
        geo = data.get("geometry", {})
        geometry = Geometry(
            k0=float(geo.get("k0", 0.0)),
            v_p=float(geo.get("v_p", 1.0)),
            kappa0=float(geo.get("kappa0", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"missing or malformed field: {exc}") from exc
    return Network(
        ports=ports,
        blocks=blocks,
        systems=systems,
        connections=connections,
        geometry=geometry,
        allow_self_loops=bool(data.get("allow_self_loops", False)),
    )


def load_network(path) -> Network:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    return network_from_dict(data)


def save_network(network: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(network), fh, indent=2)
        fh.write("\n")
