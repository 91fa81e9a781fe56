"""Vacuum-input Lindblad dynamics generated by a contracted model.

The master equation uses the effective Lindblad operators and effective
Hamiltonian; time dependence enters only through scalar prefactors
sqrt(kappa(t)) e^{i phi(t)} on the per-port coupling operators and through
scheduled Hermitian control terms added to the system Hamiltonian.  The
network routing (G, the l_eff coefficient rows) is time independent.

Superoperators use the column-major vectorization convention:
vec(A rho B) = (B.T kron A) vec(rho).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contraction import EffectiveModel
from .errors import ScheduleMissing, StepUnstable
from .network import Network, dag, embed_operator

TOL_TRACE = 1e-8
TOL_HERM_STEP = 1e-10


class Schedule:
    """Deterministic time function on [0, T]: constant, sampled or callable."""

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, t: float) -> float:
        return float(self._fn(t))

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(lambda t: value)

    @classmethod
    def sampled(cls, times: np.ndarray, values: np.ndarray) -> "Schedule":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be equal-length 1d arrays")
        return cls(lambda t: np.interp(t, times, values))


@dataclass
class PortControl:
    """Time-dependent coupling on one output port.

    bare_op is the joint-space coupling operator without any rate or phase
    prefactor; the full operator at time t is sqrt(kappa(t)) e^{i phi(t)}
    bare_op.
    """

    bare_op: np.ndarray
    kappa: Schedule
    phi: Schedule


@dataclass
class Controls:
    ports: dict = field(default_factory=dict)  # port id -> PortControl
    hamiltonian: list = field(default_factory=list)  # (Hermitian op, Schedule)


def controls_from_network(
    network: Network,
    kappa_schedules: dict | None = None,
    phi_schedules: dict | None = None,
    hamiltonian_terms: list | None = None,
) -> Controls:
    """Build Controls for a network's coupled ports.

    kappa_schedules / phi_schedules map port ids to Schedules; ports not
    mentioned keep their static values.  Each port appearing in either map
    must carry a coupling in the network.
    """
    kappa_schedules = kappa_schedules or {}
    phi_schedules = phi_schedules or {}
    coupled = {
        port: (sys.element_id, c)
        for sys in network.systems
        for port, c in sys.couplings.items()
    }
    ports = {}
    for port in set(kappa_schedules) | set(phi_schedules):
        if port not in coupled:
            raise ScheduleMissing(f"port {port} (no coupling to control)")
        element_id, coupling = coupled[port]
        bare = embed_operator(network, element_id, coupling.operator)
        ports[port] = PortControl(
            bare_op=bare,
            kappa=kappa_schedules.get(port, Schedule.constant(coupling.kappa)),
            phi=phi_schedules.get(port, Schedule.constant(coupling.phi)),
        )
    return Controls(ports=ports, hamiltonian=list(hamiltonian_terms or []))


def _coupling_ops_at(model: EffectiveModel, controls: Controls, t: float):
    ops = list(model.base_L)
    for port, ctl in controls.ports.items():
        kappa = ctl.kappa(t)
        if kappa < 0:
            raise StepUnstable(f"negative kappa schedule on port {port} at t={t}")
        ops[port] = np.sqrt(kappa) * np.exp(1j * ctl.phi(t)) * ctl.bare_op
    return np.array(ops)


def _h_sys_at(model: EffectiveModel, controls: Controls, t: float) -> np.ndarray:
    h = model.h_sys.copy()
    for op, schedule in controls.hamiltonian:
        h = h + schedule(t) * op
    return h


def effective_operators_at(model: EffectiveModel, controls: Controls, t: float):
    """(H_eff(t), list of effective Lindblad operators at time t)."""
    l_arr = _coupling_ops_at(model, controls, t)
    l_dag = l_arr.conj().transpose(0, 2, 1)
    g = model.routing.G
    k_mat = g - dag(g)
    h_eff = _h_sys_at(model, controls, t) + np.einsum(
        "jk,jab,kbc->ac", k_mat, l_dag, l_arr
    ) / 2j
    l_eff = np.einsum("jk,kab->jab", model.l_eff_coeffs, l_arr)
    return h_eff, list(l_eff)


def liouvillian(h_eff: np.ndarray, l_eff_ops) -> np.ndarray:
    """Vectorized Lindblad generator (column-major convention)."""
    d = h_eff.shape[0]
    eye = np.eye(d, dtype=complex)
    gen = -1j * (np.kron(eye, h_eff) - np.kron(h_eff.T, eye))
    for op in l_eff_ops:
        op_dag_op = dag(op) @ op
        gen += np.kron(op.conj(), op)
        gen -= 0.5 * np.kron(eye, op_dag_op)
        gen -= 0.5 * np.kron(op_dag_op.T, eye)
    return gen


def build_generator(
    model: EffectiveModel, controls: Controls, t: float
) -> np.ndarray:
    """The D^2 x D^2 master-equation generator at time t."""
    h_eff, l_eff = effective_operators_at(model, controls, t)
    return liouvillian(h_eff, l_eff)


class _GeneratorAssembler:
    """Fast exact generator assembly.

    The generator is bilinear in the per-port scalars
    c_k(t) = sqrt(kappa_k(t)) e^{i phi_k(t)}: writing L_k = c_k Ltilde_k,
    both the network Hamiltonian (1/2i) sum K_jk L_j^dag L_k and the
    dissipator sum [M^dag M]_jk (L_k rho L_j^dag - ...) decompose into
    fixed superoperators weighted by c_j^* c_k.  Precomputing those makes
    each time step a handful of scalar-times-matrix additions, numerically
    identical to build_generator.
    """

    def __init__(self, model: EffectiveModel, controls: Controls):
        self.model = model
        self.controls = controls
        d = model.h_sys.shape[0]
        eye = np.eye(d, dtype=complex)
        self._eye = eye
        self._d = d

        # bare ops and static scalars per coupled port
        self.ports = [
            k for k, op in enumerate(model.base_L) if np.any(op != 0)
        ]
        bare, static_c = {}, {}
        for k in self.ports:
            if k in controls.ports:
                bare[k] = controls.ports[k].bare_op
                static_c[k] = None  # scheduled
            else:
                bare[k] = model.base_L[k]
                static_c[k] = 1.0 + 0.0j
        for k, ctl in controls.ports.items():
            if k not in bare:  # controlled port whose base op is zero
                self.ports.append(k)
                bare[k] = ctl.bare_op
                static_c[k] = None
        self.bare = bare
        self.static_c = static_c

        g = model.routing.G
        k_mat = g - dag(g)
        mdm = dag(model.l_eff_coeffs) @ model.l_eff_coeffs

        def h_super(h):
            return -1j * (np.kron(eye, h) - np.kron(h.T, eye))

        self.pair_terms = {}
        for j in self.ports:
            for k in self.ports:
                lj, lk = bare[j], bare[k]
                anti = dag(lj) @ lk
                term = h_super(anti / 2j * k_mat[j, k]) if k_mat[j, k] else 0
                diss = mdm[j, k] * (
                    np.kron(lj.conj(), lk)
                    - 0.5 * np.kron(eye, anti)
                    - 0.5 * np.kron(anti.T, eye)
                )
                total = term + diss
                if np.any(total != 0):
                    self.pair_terms[(j, k)] = total

        self.h_sys_super = h_super(model.h_sys)
        self.h_ctl_supers = [
            (h_super(op), schedule) for op, schedule in controls.hamiltonian
        ]

    def _scalars(self, t: float) -> dict:
        c = {}
        for k in self.ports:
            if self.static_c[k] is not None:
                c[k] = self.static_c[k]
            else:
                ctl = self.controls.ports[k]
                kappa = ctl.kappa(t)
                if kappa < 0:
                    raise StepUnstable(
                        f"negative kappa schedule on port {k} at t={t}"
                    )
                c[k] = np.sqrt(kappa) * np.exp(1j * ctl.phi(t))
        return c

    def __call__(self, t: float) -> np.ndarray:
        c = self._scalars(t)
        gen = self.h_sys_super.copy()
        for super_op, schedule in self.h_ctl_supers:
            gen += schedule(t) * super_op
        for (j, k), term in self.pair_terms.items():
            gen += (np.conj(c[j]) * c[k]) * term
        return gen


@dataclass
class Trajectory:
    times: np.ndarray
    rhos: np.ndarray  # (n_samples, D, D)
    observables: dict
    max_trace_drift: float
    max_herm_drift: float

    def expectation(self, op: np.ndarray) -> np.ndarray:
        return np.einsum("tij,ji->t", self.rhos, op)


def integrate(
    model: EffectiveModel,
    controls: Controls,
    rho0: np.ndarray,
    t_final: float,
    dt: float,
    observables: dict | None = None,
    sample_stride: int = 1,
    tol_trace: float = TOL_TRACE,
) -> Trajectory:
    """Fixed-step RK4 propagation of the vectorized master equation.

    rho is re-Hermitized after every step (drift is monitored before the
    symmetrization and the run aborts if it exceeds 100x tolerance).  The
    step count is rounded so the grid lands exactly on t_final; trajectories
    are bit-for-bit reproducible.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(rho0, dtype=complex).copy()
    d = rho.shape[0]
    n_steps = max(1, int(round(t_final / dt)))
    h = t_final / n_steps

    time_dependent = bool(controls.ports) or bool(controls.hamiltonian)
    if time_dependent:
        generator = _GeneratorAssembler(model, controls)
    else:
        gen_static = build_generator(model, controls, 0.0)

        def generator(t):
            return gen_static

    observables = observables or {}
    times = [0.0]
    rhos = [rho.copy()]
    max_trace_drift = abs(np.trace(rho).real - 1.0)
    max_herm_drift = 0.0

    v = rho.reshape(-1, order="F")
    for step in range(n_steps):
        t = step * h
        g1 = generator(t)
        g2 = generator(t + 0.5 * h)
        g3 = g2 if time_dependent else g1
        g4 = generator(t + h)
        k1 = g1 @ v
        k2 = g2 @ (v + 0.5 * h * k1)
        k3 = g3 @ (v + 0.5 * h * k2)
        k4 = g4 @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        rho = v.reshape(d, d, order="F")
        herm_drift = float(np.abs(rho - dag(rho)).max())
        trace_drift = float(abs(np.trace(rho).real - 1.0))
        max_herm_drift = max(max_herm_drift, herm_drift)
        max_trace_drift = max(max_trace_drift, trace_drift)
        if herm_drift > 100 * TOL_HERM_STEP or trace_drift > 100 * tol_trace:
            raise StepUnstable(
                f"drift at step {step}: herm {herm_drift:.3e}, "
                f"trace {trace_drift:.3e}; reduce dt"
            )
        rho = 0.5 * (rho + dag(rho))
        v = rho.reshape(-1, order="F")

        if (step + 1) % sample_stride == 0 or step == n_steps - 1:
            times.append((step + 1) * h)
            rhos.append(rho.copy())

    rhos = np.array(rhos)
    obs = {
        name: np.einsum("tij,ji->t", rhos, np.asarray(op, dtype=complex))
        for name, op in observables.items()
    }
    return Trajectory(
        times=np.array(times),
        rhos=rhos,
        observables=obs,
        max_trace_drift=max_trace_drift,
        max_herm_drift=max_herm_drift,
    )


def basis_state(d: int, index: int) -> np.ndarray:
    rho = np.zeros((d, d), dtype=complex)
    rho[index, index] = 1.0
    return rho
