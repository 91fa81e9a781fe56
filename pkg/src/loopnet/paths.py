"""Scattering-path enumeration, the truncated-series oracle and the
weak-loop validity criterion.

Every multi-traversal path through the network is an alternating product of
W hops (propagation, with delay) and S hops (instantaneous scattering).  A
path is recorded by the sequence of output ports it visits; its weight is
the product of the corresponding S W matrix elements and its delay the sum
of inter-port distances divided by the phase velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGeometry, PathExplosion
from .network import Network, assemble_S, assemble_W, internal_projectors

DEFAULT_RECORD_CAP = 1_000_000
DEFAULT_WEIGHT_THRESHOLD = 0.05


@dataclass(frozen=True)
class PathRecord:
    port_sequence: tuple
    n_traversals: int
    weight: complex
    delay: float
    from_source: bool = False


@dataclass
class ValidityReport:
    tau_min: float
    weight_threshold: float
    violating_paths: list = field(default_factory=list)
    max_violating_weight: float = 0.0
    sigma_max_SW: float = 0.0
    spectral_radius_SW: float = 0.0
    n_cut: int = 0

    @property
    def valid(self) -> bool:
        return not self.violating_paths


def _port_positions(network: Network) -> list:
    # Missing coordinates count as z = 0 for delay arithmetic; validity_check
    # insists on explicit geometry before trusting the numbers.
    return [p.position_z if p.position_z is not None else 0.0 for p in network.ports]


class _Enumerator:
    def __init__(self, sw, z, v_p, max_order, min_weight, cap):
        self.sw = sw
        self.z = z
        self.v_p = v_p
        self.max_order = max_order
        self.min_weight = min_weight
        self.cap = cap
        self.records: list = []
        n = sw.shape[0]
        self.hops = [
            [(j, sw[j, k]) for j in range(n) if abs(sw[j, k]) > 0.0]
            for k in range(n)
        ]

    def _emit(self, record: PathRecord):
        self.records.append(record)
        if len(self.records) > self.cap:
            raise PathExplosion(f"more than {self.cap} path records")

    def extend(self, seq, weight, delay, n, from_source):
        if n >= self.max_order:
            return
        k = seq[-1]
        for j, amp in self.hops[k]:
            w = weight * amp
            if abs(w) < self.min_weight:
                continue
            tau = delay + abs(self.z[j] - self.z[k]) / self.v_p
            new_seq = seq + (j,)
            self._emit(PathRecord(new_seq, n + 1, w, tau, from_source))
            self.extend(new_seq, w, tau, n + 1, from_source)


def enumerate_paths(
    network: Network,
    max_order: int,
    min_weight: float,
    sources: list | None = None,
    include_scattering: bool = True,
    record_cap: int = DEFAULT_RECORD_CAP,
) -> list:
    """All weighted paths up to max_order traversals of the network.

    Two families are walked with the same machinery: paths entering at an
    external input (first factor an S matrix element, zero traversals) and
    paths emitted by a source port (entry weight 1, hops are S W matrix
    elements).  Every prefix of a longer path is itself recorded, so
    consumers filter on the terminal port.  Depth-first with weight pruning;
    deterministic.
    """
    s = assemble_S(network)
    w = assemble_W(network)
    z = _port_positions(network)
    v_p = network.geometry.v_p
    _, x_i, _, _ = internal_projectors(w)
    n = network.n_ports

    enum = _Enumerator(s @ w, z, v_p, max_order, min_weight, record_cap)

    if sources is None:
        sources = sorted(
            {port for sys in network.systems for port in sys.couplings}
        )
    for p in sources:
        enum.extend((p,), 1.0 + 0.0j, 0.0, 0, from_source=True)

    if include_scattering:
        ext_inputs = [k for k in range(n) if x_i[k, k].real > 0.5]
        for k in ext_inputs:
            for j in range(n):
                amp = s[j, k]
                if abs(amp) < min_weight or abs(amp) == 0.0:
                    continue
                tau = abs(z[j] - z[k]) / v_p
                enum._emit(PathRecord((k, j), 0, amp, tau, False))
                enum.extend((k, j), amp, tau, 0, from_source=False)

    return enum.records


def truncated_series_oracle(S: np.ndarray, W: np.ndarray, L, n_terms: int):
    """Brute-force partial sums of the multi-traversal scattering series.

    Returns (X_o [sum_n (SW)^n] S X_i, X_o [sum_n (SW)^n] L).  If L is None
    the second element is the bare coefficient matrix X_o sum_n (SW)^n,
    whose rows give each effective source as a combination of the raw ones.
    Independent of the closed-form inversion by construction.
    """
    n = S.shape[0]
    sw = S @ W
    partial = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for _ in range(n_terms):
        term = sw @ term
        partial = partial + term
    _, x_i, _, x_o = internal_projectors(W)
    s_approx = x_o @ partial @ S @ x_i
    coeffs = x_o @ partial
    if L is None:
        return s_approx, coeffs
    l_arr = np.array(L)
    return s_approx, list(np.einsum("jk,kab->jab", coeffs, l_arr))


def validity_check(
    network: Network,
    tau_min: float | None = None,
    weight_threshold: float = DEFAULT_WEIGHT_THRESHOLD,
    max_order_cap: int = 200,
    record_cap: int = DEFAULT_RECORD_CAP,
) -> ValidityReport:
    """Flag every path whose delay is significant but whose weight is not.

    The zero-delay contraction is trustworthy only if each path with delay
    of order the system timescale carries negligible weight.  Thresholds
    are configuration; the report carries the raw numbers.
    """
    if network.connections:
        for conn in network.connections:
            if network.connection_distance(conn) is None:
                raise MissingGeometry(
                    f"connection {conn.from_port}->{conn.to_port} has no "
                    "distance and its ports lack z coordinates"
                )

    s = assemble_S(network)
    w = assemble_W(network)
    sw = s @ w
    sigma = float(np.linalg.svd(sw, compute_uv=False).max()) if sw.size else 0.0
    rho = float(np.abs(np.linalg.eigvals(sw)).max()) if sw.size else 0.0

    kappas = [
        c.kappa for sys in network.systems for c in sys.couplings.values()
    ]
    kappa_ref = max(kappas) if kappas else network.geometry.kappa0
    if tau_min is None:
        tau_min = 1.0 / kappa_ref if kappa_ref > 0 else math.inf

    if rho < 1.0 and rho > 0.0:
        order = math.ceil(math.log(weight_threshold) / math.log(rho))
        max_order = int(min(max(order, 1), max_order_cap))
    else:
        max_order = max_order_cap

    records = enumerate_paths(
        network,
        max_order=max_order,
        min_weight=weight_threshold,
        record_cap=record_cap,
    )

    violating = [
        r
        for r in records
        if r.delay >= tau_min and abs(r.weight) >= weight_threshold
    ]

    # traversal count at which the accumulated path length reaches the
    # coherence length v_p / kappa_ref
    distances = [
        d
        for d in (network.connection_distance(c) for c in network.connections)
        if d is not None and d > 0.0
    ]
    if distances and kappa_ref > 0:
        ell0 = network.geometry.v_p / kappa_ref
        n_cut = int(math.ceil(ell0 / max(distances)))
    else:
        n_cut = 0

    return ValidityReport(
        tau_min=tau_min,
        weight_threshold=weight_threshold,
        violating_paths=violating,
        max_violating_weight=max(
            (abs(r.weight) for r in violating), default=0.0
        ),
        sigma_max_SW=sigma,
        spectral_radius_SW=rho,
        n_cut=n_cut,
    )
