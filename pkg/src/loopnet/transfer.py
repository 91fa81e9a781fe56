"""Two-qubit excitation transfer through an imperfect network.

Covers the full pipeline: building the circulator-linked two-qubit network,
reading the cross-coupling coefficients off the contracted routing matrix,
the collective (bright/dark) decay analysis, the single-excitation
Bloch-vector equations, synthesis of the receiver control schedule that
tracks the subradiant state, and randomized-imperfection experiments.

Basis conventions: qubit index 0 = excited (up), 1 = ground (down); the
joint two-qubit space orders |uu>, |ud>, |du>, |dd>.  The single-excitation
Bloch sphere uses |0> = |ud> and |1> = |du>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .contraction import EffectiveModel, contract_network
from .errors import (
    BoundViolated,
    DegenerateBeta,
    InitialConditionMismatch,
    MismatchWithGenericGenerator,
    NotTwoQubitNetwork,
    StepUnstable,
    WrongDirectionality,
)
from .network import (
    SIGMA_MINUS,
    assemble_S,
    assemble_W,
    Connection,
    Coupling,
    Geometry,
    LocalSystem,
    Network,
    Port,
    ScatteringBlock,
    unitary_with_magnitudes,
)

# joint two-qubit basis indices
UP_UP, UP_DOWN, DOWN_UP, DOWN_DOWN = 0, 1, 2, 3


def ideal_circulator() -> np.ndarray:
    """Lossless 3-port circulator routing 1->2->3->1 with no reflections."""
    return np.array(
        [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=complex
    )


def perturbed_circulator(eps: float, hermitian: np.ndarray) -> np.ndarray:
    """exp(i eps H) times the ideal circulator; unitary for Hermitian H."""
    return expm(1j * eps * np.asarray(hermitian, dtype=complex)) @ ideal_circulator()


# Datasheet-style circulator magnitudes are not unitarity-consistent (no
# unitary has |t| = 0.98 on the circulating entries and 0.08 everywhere
# else), so this is the nearest magnitude pattern with unit row and column
# norms that keeps the main transmission at 0.98 and every weak-loop path
# weight (retro-reflection and cross-talk products) in the few-1e-3 range.
DATASHEET_MAGNITUDES = np.array(
    [
        [0.04, 0.15, 0.98788],
        [0.98, 0.19, 0.05916],
        [0.19494, 0.97026, 0.14353],
    ]
)


def datasheet_circulator() -> np.ndarray:
    """Exactly unitary circulator with datasheet-like entry magnitudes.

    Main transmission 0.98, weak residual entries; deterministic.  The
    direct qubit-to-qubit path through two of these carries weight 0.9604
    and the leading multi-traversal loop paths carry weights ~6e-3.
    """
    return unitary_with_magnitudes(DATASHEET_MAGNITUDES, seed=0)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random Hermitian matrix normalized to unit spectral norm."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (a + a.conj().T)
    return h / np.abs(np.linalg.eigvalsh(h)).max()


def two_qubit_network(
    circulator_a: np.ndarray,
    circulator_b: np.ndarray,
    kappa_a: float = 1.0,
    kappa_b: float = 1.0,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
    interconnect_phase: float | None = None,
    qubit_phase_a: float = 0.0,
    qubit_phase_b: float = 0.0,
    dz_a: float = 0.05,
    dz_b: float = 0.05,
    length: float = 1.0,
    geometry: Geometry | None = None,
    h_az: float = 0.0,
    h_bz: float = 0.0,
) -> Network:
    """Two qubits linked by a transmission line through two circulators.

    Ports: 0 = qubit a, 1..3 = circulator a, 4..6 = circulator b,
    7 = qubit b.  The qubits sit on circulator ports 1 and 5; ports 3 and 6
    are the external ins/outs.  If interconnect_phase is given it overrides
    the k0*length propagation phase on the line between the circulators.
    """
    geometry = geometry or Geometry(k0=0.0, v_p=1.0, kappa0=max(kappa_a, kappa_b))
    za, zb = dz_a, dz_a + length
    ports = [
        Port(0, "qubit_a", 0.0),
        Port(1, "circ_a", za),
        Port(2, "circ_a", za),
        Port(3, "circ_a", za),
        Port(4, "circ_b", zb),
        Port(5, "circ_b", zb),
        Port(6, "circ_b", zb),
        Port(7, "qubit_b", zb + dz_b),
    ]
    blocks = [
        ScatteringBlock("qubit_a", np.array([[np.exp(1j * qubit_phase_a)]])),
        ScatteringBlock("circ_a", np.asarray(circulator_a, dtype=complex)),
        ScatteringBlock("circ_b", np.asarray(circulator_b, dtype=complex)),
        ScatteringBlock("qubit_b", np.array([[np.exp(1j * qubit_phase_b)]])),
    ]
    line_phase = (
        interconnect_phase
        if interconnect_phase is not None
        else geometry.k0 * length
    )
    connections = [
        Connection(0, 1, phase=geometry.k0 * dz_a),
        Connection(1, 0, phase=geometry.k0 * dz_a),
        Connection(2, 4, phase=line_phase),
        Connection(4, 2, phase=line_phase),
        Connection(5, 7, phase=geometry.k0 * dz_b),
        Connection(7, 5, phase=geometry.k0 * dz_b),
    ]
    sz = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    systems = [
        LocalSystem(
            "qubit_a", 2, 0.5 * h_az * sz,
            {0: Coupling(SIGMA_MINUS, kappa_a, phi_a)},
        ),
        LocalSystem(
            "qubit_b", 2, 0.5 * h_bz * sz,
            {7: Coupling(SIGMA_MINUS, kappa_b, phi_b)},
        ),
    ]
    return Network(ports, blocks, systems, connections, geometry)


def random_imperfect_network(
    eps: float,
    interconnect_phase: float,
    seed: int,
    **kwargs,
) -> Network:
    """Two-qubit network with seeded random circulator imperfections."""
    rng = np.random.default_rng(seed)
    circ_a = perturbed_circulator(eps, random_hermitian(rng, 3))
    circ_b = perturbed_circulator(eps, random_hermitian(rng, 3))
    return two_qubit_network(
        circ_a, circ_b, interconnect_phase=interconnect_phase, **kwargs
    )


def circulator_reflectances(network: Network) -> np.ndarray:
    """|r_ii|^2 of both circulator blocks (6 values)."""
    refl = []
    for block in network.blocks:
        if block.element_id.startswith("circ"):
            refl.extend(np.abs(np.diag(block.matrix)) ** 2)
    return np.array(refl)


def find_network_in_class(
    r2_min: float,
    r2_max: float,
    seed: int,
    interconnect_phase: float | None = None,
    max_tries: int = 2000,
    **kwargs,
) -> Network:
    """Rejection-sample an imperfect network whose retro-reflections all
    fall inside [r2_min, r2_max].  Deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    # |r_ii| grows roughly linearly with eps; bracket generously
    eps_lo = 0.5 * np.sqrt(r2_min)
    eps_hi = 3.0 * np.sqrt(r2_max)
    for _ in range(max_tries):
        eps = rng.uniform(eps_lo, eps_hi)
        phase = (
            interconnect_phase
            if interconnect_phase is not None
            else rng.uniform(0.0, 2.0 * np.pi)
        )
        sub_seed = int(rng.integers(0, 2**63 - 1))
        net = random_imperfect_network(eps, phase, sub_seed, **kwargs)
        r2 = circulator_reflectances(net)
        if r2.min() >= r2_min and r2.max() <= r2_max:
            return net
    raise RuntimeError(
        f"no network with reflectances in [{r2_min}, {r2_max}] "
        f"after {max_tries} tries"
    )


# -- coefficients and collective rates -------------------------------------


@dataclass(frozen=True)
class TransferCoefficients:
    t_aa: complex
    t_ab: complex
    t_ba: complex
    t_bb: complex
    t_ext: dict  # external output port -> (t_ja, t_jb)
    eta_a: float
    eta_b: float
    beta_plus: float
    beta_minus: float
    delta_plus: float
    delta_minus: float


def extract_coefficients(
    model: EffectiveModel, qubit_ports: tuple
) -> TransferCoefficients:
    """Read the network contribution at the two qubit ports off T."""
    if len(qubit_ports) != 2:
        raise NotTwoQubitNetwork(f"expected 2 qubit ports, got {qubit_ports}")
    pa, pb = qubit_ports
    t = model.routing.T
    t_aa, t_ab = complex(t[pa, pa]), complex(t[pa, pb])
    t_ba, t_bb = complex(t[pb, pa]), complex(t[pb, pb])
    plus = np.conj(t_ab) + t_ba
    minus = np.conj(t_ab) - t_ba
    return TransferCoefficients(
        t_aa=t_aa,
        t_ab=t_ab,
        t_ba=t_ba,
        t_bb=t_bb,
        t_ext={
            j: (complex(t[j, pa]), complex(t[j, pb]))
            for j in model.external_outputs
        },
        eta_a=1.0 + 2.0 * t_aa.real,
        eta_b=1.0 + 2.0 * t_bb.real,
        beta_plus=abs(plus),
        beta_minus=abs(minus),
        delta_plus=float(np.angle(plus)),
        delta_minus=float(np.angle(minus)),
    )


def coupled_qubit_ports(network: Network) -> tuple:
    ports = sorted(
        port for sys in network.systems for port in sys.couplings
    )
    if len(ports) != 2:
        raise NotTwoQubitNetwork(
            f"expected exactly 2 coupled ports, found {ports}"
        )
    return tuple(ports)


def transfer_coefficients(network: Network) -> TransferCoefficients:
    """Contract a two-qubit network and extract its coefficients."""
    model = contract_network(network)
    return extract_coefficients(model, coupled_qubit_ports(network))


def swap_roles(coeffs: TransferCoefficients) -> TransferCoefficients:
    """Exchange sender and receiver.

    Flips the sign of cos(delta_+ - delta_-), so a network with the wrong
    directionality for a -> b transfer works in the other direction.
    """
    plus = np.conj(coeffs.t_ba) + coeffs.t_ab
    minus = np.conj(coeffs.t_ba) - coeffs.t_ab
    return TransferCoefficients(
        t_aa=coeffs.t_bb,
        t_ab=coeffs.t_ba,
        t_ba=coeffs.t_ab,
        t_bb=coeffs.t_aa,
        t_ext={j: (tb, ta) for j, (ta, tb) in coeffs.t_ext.items()},
        eta_a=coeffs.eta_b,
        eta_b=coeffs.eta_a,
        beta_plus=abs(plus),
        beta_minus=abs(minus),
        delta_plus=float(np.angle(plus)),
        delta_minus=float(np.angle(minus)),
    )


def dark_state_residual(coeffs: TransferCoefficients) -> float:
    """eta_a eta_b - beta_+^2; zero iff a perfectly dark state exists."""
    return coeffs.eta_a * coeffs.eta_b - coeffs.beta_plus**2


def collective_rates(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
):
    """(Gamma_bright, Gamma_dark, mixing angle, azimuthal phase)."""
    r0 = kappa_a * coeffs.eta_a + kappa_b * coeffs.eta_b
    rz = kappa_a * coeffs.eta_a - kappa_b * coeffs.eta_b
    rxy = 2.0 * np.sqrt(kappa_a * kappa_b) * coeffs.beta_plus
    disc = np.sqrt(rxy**2 + rz**2)
    gamma_bright = 0.5 * (r0 + disc)
    gamma_dark = 0.5 * (r0 - disc)
    theta = float(np.arctan2(rxy, rz))
    varphi = phi_a - phi_b + coeffs.delta_plus
    return gamma_bright, gamma_dark, theta, varphi


@dataclass(frozen=True)
class RJComponents:
    """Pauli components of the feeding operator R and spin-exchange J
    in the single-excitation subspace (rad/s)."""

    r0: float
    rx: float
    ry: float
    rz: float
    j0: float
    jx: float
    jy: float
    jz: float

    @property
    def rvec(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])

    @property
    def jvec(self) -> np.ndarray:
        return np.array([self.jx, self.jy, self.jz])


def rj_components(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
    h_az: float = 0.0,
    h_bz: float = 0.0,
) -> RJComponents:
    root = np.sqrt(kappa_a * kappa_b)
    chi_p = phi_a - phi_b + coeffs.delta_plus
    chi_m = phi_a - phi_b + coeffs.delta_minus
    return RJComponents(
        r0=kappa_a * coeffs.eta_a + kappa_b * coeffs.eta_b,
        rx=2.0 * root * coeffs.beta_plus * np.cos(chi_p),
        ry=2.0 * root * coeffs.beta_plus * np.sin(chi_p),
        rz=kappa_a * coeffs.eta_a - kappa_b * coeffs.eta_b,
        j0=kappa_a * coeffs.t_aa.imag + kappa_b * coeffs.t_bb.imag,
        jx=-root * coeffs.beta_minus * np.sin(chi_m),
        jy=root * coeffs.beta_minus * np.cos(chi_m),
        jz=kappa_a * coeffs.t_aa.imag
        - kappa_b * coeffs.t_bb.imag
        + h_az
        - h_bz,
    )


def bloch_rhs(b0: float, bvec: np.ndarray, rj: RJComponents):
    """Time derivatives of the single-excitation Bloch state."""
    rvec, jvec = rj.rvec, rj.jvec
    db0 = -0.5 * rj.r0 * b0 - 0.5 * float(rvec @ bvec)
    dbvec = np.cross(jvec, bvec) - 0.5 * rj.r0 * bvec - 0.5 * b0 * rvec
    return db0, dbvec


def b0_closed_form(
    times: np.ndarray,
    bvec_traj: np.ndarray,
    r0_traj: np.ndarray,
    rvec_traj: np.ndarray,
    b0_initial: float,
    tol: float = 1e-12,
) -> np.ndarray:
    """Quadrature solution b0(t) = b0(0) exp[-1/2 int (R0 + R.e_b)].

    Valid only on pure-state trajectories where ||b(0)|| = b0(0); uses
    trapezoidal quadrature on the sampled trajectory.
    """
    norms = np.linalg.norm(bvec_traj, axis=1)
    if abs(norms[0] - b0_initial) > tol:
        raise InitialConditionMismatch(
            f"||b(0)|| = {norms[0]!r} but b0(0) = {b0_initial!r}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        e_b = np.where(norms[:, None] > 0, bvec_traj / norms[:, None], 0.0)
    integrand = r0_traj + np.einsum("ti,ti->t", rvec_traj, e_b)
    dt = np.diff(times)
    cumulative = np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dt)]
    )
    return b0_initial * np.exp(-0.5 * cumulative)


# -- control synthesis ------------------------------------------------------


@dataclass
class ControlProtocol:
    times: np.ndarray
    kappa_b: np.ndarray
    h_bz: np.ndarray
    kappa_a: float
    phase_diff: float  # phi_a - phi_b, fixed to -delta_plus
    h_az: float
    ratio_db: float

    @property
    def T(self) -> float:
        return float(self.times[-1])


def _protocol_constants(coeffs: TransferCoefficients, kappa0: float, h_az: float):
    if coeffs.beta_plus <= 1e-15:
        raise DegenerateBeta("beta_+ = 0: the qubits are not cross-coupled")
    ddelta = coeffs.delta_plus - coeffs.delta_minus
    cos_d = float(np.cos(ddelta))
    if cos_d >= 0.0:
        raise WrongDirectionality(
            f"cos(delta_+ - delta_-) = {cos_d:.4f} >= 0; swap sender and receiver"
        )
    ratio = coeffs.beta_minus / coeffs.beta_plus
    slope = 0.5 * ratio * float(np.sin(ddelta))  # J/R constraint constant
    return cos_d, ratio, slope


def _kappa_b_dot(kb, coeffs: TransferCoefficients, kappa0, cos_d, ratio):
    rx = 2.0 * np.sqrt(kappa0 * kb) * coeffs.beta_plus
    rz = kappa0 * coeffs.eta_a - kb * coeffs.eta_b
    r0 = kappa0 * coeffs.eta_a + kb * coeffs.eta_b
    return cos_d * kb * ratio * (rx * rx + rz * rz) / r0


def _h_bz_of_kappa_b(kb, coeffs: TransferCoefficients, kappa0, slope, h_az):
    return (
        kb * (coeffs.eta_b * slope - coeffs.t_bb.imag)
        - kappa0 * (coeffs.eta_a * slope - coeffs.t_aa.imag)
        + h_az
    )


def synthesize_controls(
    coeffs: TransferCoefficients,
    kappa0: float,
    ratio_db: float = 25.0,
    T: float = 20.0,
    dt: float = 1e-3,
    h_az: float = 0.0,
) -> ControlProtocol:
    """Receiver schedule (kappa_b(t), h_bz(t)) tracking the subradiant state.

    Fixes the phase reference phi_a - phi_b = -delta_+ and integrates the
    decoupled kappa_b flow with RK4 from kappa_b(0) = kappa0 * 10^(dB/10).
    The schedule is sampled at half the requested step so that downstream
    RK4 integration of the Bloch equations finds exact midpoint values.
    """
    cos_d, ratio, slope = _protocol_constants(coeffs, kappa0, h_az)
    n_steps = 2 * max(1, int(round(T / dt)))
    h = T / n_steps
    kb = np.empty(n_steps + 1)
    kb[0] = kappa0 * 10.0 ** (ratio_db / 10.0)

    def f(x):
        return _kappa_b_dot(x, coeffs, kappa0, cos_d, ratio)

    for i in range(n_steps):
        x = kb[i]
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        kb[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    terminal_db = 10.0 * np.log10(kb[-1] / kappa0)
    if terminal_db > -15.0:
        warnings.warn(
            f"kappa_b(T)/kappa0 = {terminal_db:.1f} dB > -15 dB: "
            "the transfer pulse is incomplete; increase T",
            stacklevel=2,
        )

    times = np.linspace(0.0, T, n_steps + 1)
    h_bz = _h_bz_of_kappa_b(kb, coeffs, kappa0, slope, h_az)
    return ControlProtocol(
        times=times,
        kappa_b=kb,
        h_bz=h_bz,
        kappa_a=kappa0,
        phase_diff=-coeffs.delta_plus,
        h_az=h_az,
        ratio_db=ratio_db,
    )


@dataclass
class RescaledProtocol:
    """Control schedules remapped onto a time-dependent sender coupling."""

    times: np.ndarray
    kappa_a: np.ndarray
    kappa_b: np.ndarray
    h_bz: np.ndarray
    h_az: np.ndarray
    phase_diff: float


def rescale_protocol(
    protocol: ControlProtocol,
    kappa_a_of_t,
    t_final: float,
    n_samples: int | None = None,
) -> RescaledProtocol:
    """Remap a constant-kappa_a protocol onto a user-supplied kappa_a(t).

    The Bloch generator is homogeneous of degree one in the control rates
    (kappa_a, kappa_b, h_az, h_bz), so scaling all of them by
    lambda(t) = kappa_a(t) / kappa_a and compressing the clock to
    s(t) = int_0^t lambda dt' reproduces the original trajectory exactly at
    the remapped times -- a pure compression/expansion of the time axis.

    kappa_a_of_t is any callable of physical time (a Schedule works);
    schedules are sampled on a uniform grid of n_samples intervals over
    [0, t_final] (default: the protocol's own sample count).  Raises
    ValueError if the rescaled clock runs past the protocol's horizon,
    i.e. s(t_final) > protocol.T.
    """
    n_samples = n_samples if n_samples is not None else len(protocol.times) - 1
    times = np.linspace(0.0, t_final, n_samples + 1)
    lam = np.array([kappa_a_of_t(t) for t in times]) / protocol.kappa_a
    if np.any(lam < 0):
        raise ValueError("kappa_a(t) must be non-negative")
    dts = np.diff(times)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * dts)])
    if s[-1] > protocol.T * (1.0 + 1e-12):
        raise ValueError(
            f"rescaled clock reaches {s[-1]:.6g} but the protocol ends at "
            f"{protocol.T:.6g}; shorten t_final or slow kappa_a(t)"
        )
    kb = lam * np.interp(s, protocol.times, protocol.kappa_b)
    hbz = lam * np.interp(s, protocol.times, protocol.h_bz)
    return RescaledProtocol(
        times=times,
        kappa_a=lam * protocol.kappa_a,
        kappa_b=kb,
        h_bz=hbz,
        h_az=lam * protocol.h_az,
        phase_diff=protocol.phase_diff,
    )


# -- transfer simulation ----------------------------------------------------


@dataclass
class TransferResult:
    times: np.ndarray
    b0: np.ndarray
    bvec: np.ndarray  # (n, 3)
    success_traj: np.ndarray  # population of |du> over time
    dark_bound: np.ndarray  # exp(-int Gamma_d)
    success: float
    r0_traj: np.ndarray
    rvec_traj: np.ndarray


def _rj_arrays(coeffs, protocol, kb, hbz):
    """R and J components along the protocol (general phi_a - phi_b)."""
    kappa0 = protocol.kappa_a
    chi_p = protocol.phase_diff + coeffs.delta_plus
    chi_m = protocol.phase_diff + coeffs.delta_minus
    root = np.sqrt(kappa0 * kb)
    r0 = kappa0 * coeffs.eta_a + kb * coeffs.eta_b
    rx = 2.0 * root * coeffs.beta_plus * np.cos(chi_p)
    ry = 2.0 * root * coeffs.beta_plus * np.sin(chi_p)
    rz = kappa0 * coeffs.eta_a - kb * coeffs.eta_b
    jx = -root * coeffs.beta_minus * np.sin(chi_m)
    jy = root * coeffs.beta_minus * np.cos(chi_m)
    jz = (
        kappa0 * coeffs.t_aa.imag
        - kb * coeffs.t_bb.imag
        + protocol.h_az
        - hbz
    )
    return r0, rx, ry, rz, jx, jy, jz


def simulate_transfer(
    coeffs: TransferCoefficients,
    protocol: ControlProtocol,
    bound_slack: float = 1e-6,
) -> TransferResult:
    """Integrate the Bloch equations from |ud> under a synthesized protocol.

    RK4 steps over pairs of protocol samples (midpoints are exact protocol
    values, no interpolation).  Checks the subradiant bound
    b0(t) <= exp(-int Gamma_d) + slack at every sample.
    """
    times = protocol.times
    if (len(times) - 1) % 2 != 0:
        raise ValueError("protocol must have an even number of intervals")
    kb, hbz = protocol.kappa_b, protocol.h_bz
    r0_all, rx_all, ry_all, rz_all, jx_all, jy_all, jz_all = _rj_arrays(
        coeffs, protocol, kb, hbz
    )

    n_half = len(times) - 1
    n_steps = n_half // 2
    h = times[2] - times[0]

    state = np.array([1.0, 0.0, 0.0, 1.0])  # (b0, bx, by, bz) for |ud>
    out_idx = np.arange(0, n_half + 1, 2)

    def rhs(state4, k):
        b0, bx, by, bz = state4
        r0, rx, ry, rz = r0_all[k], rx_all[k], ry_all[k], rz_all[k]
        jx, jy, jz = jx_all[k], jy_all[k], jz_all[k]
        db0 = -0.5 * r0 * b0 - 0.5 * (rx * bx + ry * by + rz * bz)
        dbx = jy * bz - jz * by - 0.5 * r0 * bx - 0.5 * b0 * rx
        dby = jz * bx - jx * bz - 0.5 * r0 * by - 0.5 * b0 * ry
        dbz = jx * by - jy * bx - 0.5 * r0 * bz - 0.5 * b0 * rz
        return np.array([db0, dbx, dby, dbz])

    b0_traj = np.empty(n_steps + 1)
    bvec_traj = np.empty((n_steps + 1, 3))
    b0_traj[0], bvec_traj[0] = state[0], state[1:]
    for i in range(n_steps):
        k0i, k1i, k2i = 2 * i, 2 * i + 1, 2 * i + 2
        k1 = rhs(state, k0i)
        k2 = rhs(state + 0.5 * h * k1, k1i)
        k3 = rhs(state + 0.5 * h * k2, k1i)
        k4 = rhs(state + h * k3, k2i)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        b0_traj[i + 1], bvec_traj[i + 1] = state[0], state[1:]

    sample_times = times[out_idx]
    r0_s = r0_all[out_idx]
    rnorm_s = np.sqrt(
        rx_all[out_idx] ** 2 + ry_all[out_idx] ** 2 + rz_all[out_idx] ** 2
    )
    gamma_d = 0.5 * (r0_s - rnorm_s)
    dts = np.diff(sample_times)
    int_gd = np.concatenate(
        [[0.0], np.cumsum(0.5 * (gamma_d[1:] + gamma_d[:-1]) * dts)]
    )
    dark_bound = np.exp(-int_gd)

    excess = float((b0_traj - dark_bound).max())
    if excess > bound_slack:
        raise BoundViolated(
            f"b0 exceeds the subradiant bound by {excess:.3e}"
        )

    success_traj = 0.5 * (b0_traj - bvec_traj[:, 2])
    rvec_traj = np.stack(
        [rx_all[out_idx], ry_all[out_idx], rz_all[out_idx]], axis=1
    )
    return TransferResult(
        times=sample_times,
        b0=b0_traj,
        bvec=bvec_traj,
        success_traj=success_traj,
        dark_bound=dark_bound,
        success=float(success_traj[-1]),
        r0_traj=r0_s,
        rvec_traj=rvec_traj,
    )


# -- batched experiments ----------------------------------------------------


@dataclass
class SweepSummary:
    success: float
    max_bound_excess: float
    max_closed_form_mismatch: float
    kappa_b_final_db: float
    b0_final: float


def transfer_sweep(
    coeffs_list,
    kappa0: float,
    ratio_db: float = 25.0,
    T: float = 20.0,
    dt: float = 2e-4,
    h_az: float = 0.0,
) -> list:
    """Synthesize-and-simulate many networks in one vectorized pass.

    Integrates the coupled (kappa_b, Bloch) system for every coefficient
    set simultaneously with a shared RK4 grid; the subradiant-bound and
    closed-form quadratures ride along as extra ODE states, so those
    comparisons carry RK4 accuracy rather than trapezoid accuracy.
    Results match the scalar pipeline to integrator accuracy.
    """
    n_net = len(coeffs_list)
    eta_a = np.array([c.eta_a for c in coeffs_list])
    eta_b = np.array([c.eta_b for c in coeffs_list])
    beta_p = np.array([c.beta_plus for c in coeffs_list])
    beta_m = np.array([c.beta_minus for c in coeffs_list])
    ddelta = np.array(
        [c.delta_plus - c.delta_minus for c in coeffs_list]
    )
    for c in coeffs_list:
        _protocol_constants(c, kappa0, h_az)
    cos_d = np.cos(ddelta)
    sin_d = np.sin(ddelta)
    ratio = beta_m / beta_p

    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps

    kb = np.full(n_net, kappa0 * 10.0 ** (ratio_db / 10.0))
    b0 = np.ones(n_net)
    bx = np.zeros(n_net)
    by = np.zeros(n_net)
    bz = np.ones(n_net)
    # quadrature states: int Gamma_d dt and int (R0 + R.e_b) dt
    q_gd = np.zeros(n_net)
    q_f = np.zeros(n_net)

    def derivs(kb, b0, bx, by, bz, q_gd, q_f):
        root = np.sqrt(kappa0 * kb)
        r0 = kappa0 * eta_a + kb * eta_b
        rx = 2.0 * root * beta_p
        rz = kappa0 * eta_a - kb * eta_b
        dkb = cos_d * kb * ratio * (rx * rx + rz * rz) / r0
        jx = root * beta_m * sin_d
        jy = root * beta_m * cos_d
        # jz with the constraint-satisfying h_bz reduces to the J/R slope
        jz = 0.5 * ratio * sin_d * rz
        db0 = -0.5 * r0 * b0 - 0.5 * (rx * bx + rz * bz)
        dbx = jy * bz - jz * by - 0.5 * r0 * bx - 0.5 * b0 * rx
        dby = jz * bx - jx * bz - 0.5 * r0 * by
        dbz = jx * by - jy * bx - 0.5 * r0 * bz - 0.5 * b0 * rz
        rnorm = np.sqrt(rx * rx + rz * rz)
        dq_gd = 0.5 * (r0 - rnorm)
        bn = np.sqrt(bx * bx + by * by + bz * bz)
        safe = np.where(bn > 0, bn, 1.0)
        dq_f = r0 + (rx * bx + rz * bz) / safe
        return dkb, db0, dbx, dby, dbz, dq_gd, dq_f

    max_excess = np.full(n_net, -np.inf)
    max_mismatch = np.zeros(n_net)

    for _ in range(n_steps):
        s = (kb, b0, bx, by, bz, q_gd, q_f)
        k1 = derivs(*s)
        k2 = derivs(*(x + 0.5 * h * d for x, d in zip(s, k1)))
        k3 = derivs(*(x + 0.5 * h * d for x, d in zip(s, k2)))
        k4 = derivs(*(x + h * d for x, d in zip(s, k3)))
        kb, b0, bx, by, bz, q_gd, q_f = (
            x + (h / 6.0) * (d1 + 2 * d2 + 2 * d3 + d4)
            for x, d1, d2, d3, d4 in zip(s, k1, k2, k3, k4)
        )
        np.maximum(max_excess, b0 - np.exp(-q_gd), out=max_excess)
        np.maximum(
            max_mismatch, np.abs(b0 - np.exp(-0.5 * q_f)), out=max_mismatch
        )

    if not (np.all(np.isfinite(kb)) and np.all(np.isfinite(b0))):
        raise StepUnstable(
            "transfer sweep diverged; reduce dt (RK4 stability needs "
            "dt * kappa_b(0) * eta_b small)"
        )

    success = 0.5 * (b0 - bz)
    kb_db = 10.0 * np.log10(kb / kappa0)
    return [
        SweepSummary(
            success=float(success[i]),
            max_bound_excess=float(max_excess[i]),
            max_closed_form_mismatch=float(max_mismatch[i]),
            kappa_b_final_db=float(kb_db[i]),
            b0_final=float(b0[i]),
        )
        for i in range(n_net)
    ]


def predict_transfer(
    coeffs: TransferCoefficients,
    kappa0: float,
    ratio_db: float = 25.0,
    db_floor: float = -40.0,
    n_grid: int = 4000,
):
    """Closed-form estimate of (success upper bound, pulse duration).

    Along the synthesized protocol, kappa_b is monotone, so time and the
    accumulated dark decay are 1-d quadratures over kappa_b:
    dt = d(kappa_b)/kappadot_b and int Gamma_d dt = int Gamma_d/|kappadot_b|
    d(kappa_b).  Integrates on a log grid from kappa_b(0) down to the
    db_floor level plus the analytic tail (the integrand tends to a constant
    as kappa_b -> 0).  Returns (exp(-int Gamma_d), time to reach db_floor).
    """
    cos_d, ratio, _ = _protocol_constants(coeffs, kappa0, 0.0)
    kb = kappa0 * np.logspace(ratio_db / 10.0, db_floor / 10.0, n_grid)
    root = np.sqrt(kappa0 * kb)
    r0 = kappa0 * coeffs.eta_a + kb * coeffs.eta_b
    rx = 2.0 * root * coeffs.beta_plus
    rz = kappa0 * coeffs.eta_a - kb * coeffs.eta_b
    rnorm = np.sqrt(rx * rx + rz * rz)
    speed = -cos_d * ratio * kb * (rx * rx + rz * rz) / r0  # |dkappa_b/dt|
    gamma_d = 0.5 * (r0 - rnorm)
    dkb = -np.diff(kb)  # positive
    t_total = float(np.sum(0.5 * (1 / speed[1:] + 1 / speed[:-1]) * dkb))
    loss = float(
        np.sum(0.5 * (gamma_d[1:] / speed[1:] + gamma_d[:-1] / speed[:-1]) * dkb)
    )
    # tail below the floor: Gamma_d/speed tends to a constant, so the
    # remaining integral is ~ that constant times the remaining kappa_b
    loss += float(gamma_d[-1] / speed[-1] * kb[-1])
    return float(np.exp(-loss)), t_total


def phase_scan_coefficients(
    circulator_a: np.ndarray,
    circulator_b: np.ndarray,
    phases: np.ndarray,
    **kwargs,
) -> list:
    """TransferCoefficients of the two-circulator network for a whole grid
    of interconnect phases, via one batched linear solve.

    Only the two W entries of the circulator-to-circulator line depend on
    the phase, so (1 - SW)^{-1} SW is solved for all phases at once.
    Entries are None where the loop series does not converge.  Matches
    transfer_coefficients(two_qubit_network(...)) exactly.
    """
    base = two_qubit_network(
        circulator_a, circulator_b, interconnect_phase=0.0, **kwargs
    )
    s = assemble_S(base)
    w0 = assemble_W(base)
    w0[4, 2] = 0.0
    w0[2, 4] = 0.0
    phases = np.asarray(phases, dtype=float)
    w = np.broadcast_to(w0, (len(phases), 8, 8)).copy()
    e = np.exp(1j * phases)
    w[:, 4, 2] = e
    w[:, 2, 4] = e
    sw = s @ w
    eye = np.eye(8, dtype=complex)
    rho = np.abs(np.linalg.eigvals(sw)).max(axis=1)
    ok = rho < 1.0 - 1e-6
    t = np.full_like(sw, np.nan)
    if ok.any():
        t[ok] = np.linalg.solve(eye - sw[ok], sw[ok])
    out = []
    for i in range(len(phases)):
        if not ok[i]:
            out.append(None)
            continue
        ti = t[i]
        plus = np.conj(ti[0, 7]) + ti[7, 0]
        minus = np.conj(ti[0, 7]) - ti[7, 0]
        out.append(
            TransferCoefficients(
                t_aa=complex(ti[0, 0]),
                t_ab=complex(ti[0, 7]),
                t_ba=complex(ti[7, 0]),
                t_bb=complex(ti[7, 7]),
                t_ext={
                    j: (complex(ti[j, 0]), complex(ti[j, 7])) for j in (3, 6)
                },
                eta_a=1.0 + 2.0 * ti[0, 0].real,
                eta_b=1.0 + 2.0 * ti[7, 7].real,
                beta_plus=abs(plus),
                beta_minus=abs(minus),
                delta_plus=float(np.angle(plus)),
                delta_minus=float(np.angle(minus)),
            )
        )
    return out


def phase_tuned_network(
    seed: int,
    r2_min: float,
    r2_max: float,
    resid_max: float,
    n_phase: int = 256,
    max_tries: int = 200,
    **kwargs,
):
    """Imperfect network whose interconnect phase minimizes the dark residual.

    Draws seeded random circulators with all retro-reflectances inside
    [r2_min, r2_max], then scans the interconnect phase for the smallest
    |eta_a eta_b - beta_+^2| (sender/receiver swapped when the
    directionality is wrong).  Accepts when that minimum is below resid_max.
    Returns (coefficients, network, phase) or None.  Deterministic.
    """
    rng = np.random.default_rng(seed)
    eps_lo = 0.5 * np.sqrt(r2_min)
    eps_hi = 3.0 * np.sqrt(r2_max)
    phases = np.linspace(0.0, 2.0 * np.pi, n_phase, endpoint=False)
    for _ in range(max_tries):
        eps = rng.uniform(eps_lo, eps_hi)
        circ_a = perturbed_circulator(eps, random_hermitian(rng, 3))
        circ_b = perturbed_circulator(eps, random_hermitian(rng, 3))
        r2 = np.concatenate(
            [np.abs(np.diag(circ_a)) ** 2, np.abs(np.diag(circ_b)) ** 2]
        )
        if r2.min() < r2_min or r2.max() > r2_max:
            continue
        best = None
        for phase, c in zip(phases, phase_scan_coefficients(circ_a, circ_b, phases, **kwargs)):
            if c is None:
                continue
            if np.cos(c.delta_plus - c.delta_minus) >= 0:
                c = swap_roles(c)
            resid = abs(dark_state_residual(c))
            if best is None or resid < best[0]:
                best = (resid, c, float(phase))
        if best is not None and best[0] < resid_max:
            net = two_qubit_network(
                circ_a, circ_b, interconnect_phase=best[2], **kwargs
            )
            return best[1], net, best[2]
    return None


def phase_tuned_adverse_network(
    seed: int,
    r2_min: float = 0.42,
    r2_max: float = 0.84,
    cos_window: tuple = (-0.20, -0.10),
    success_window: tuple = (0.45, 0.65),
    kappa0: float = 1.0,
    ratio_db: float = 25.0,
    max_time: float = 18.0,
    eta_window: tuple = (0.05, 5.0),
    n_phase: int = 256,
    max_tries: int = 400,
    **kwargs,
):
    """Strongly reflective network tuned to a mid-range predicted success.

    Same seeded construction as phase_tuned_network, but the interconnect
    phase is chosen so that cos(delta_+ - delta_-) falls inside cos_window
    and the predicted success (predict_transfer) is closest to the center
    of success_window while staying inside it, with the pulse completing
    within max_time.  Returns (coefficients, network, phase) or None.
    """
    rng = np.random.default_rng(seed)
    phases = np.linspace(0.0, 2.0 * np.pi, n_phase, endpoint=False)
    target = 0.5 * (success_window[0] + success_window[1])

    def reflective_circulator():
        # strong reflections are rare for a random (eps, H) pair, so scan
        # eps per draw and keep the first admissible value
        eps_grid = np.linspace(0.8, 3.0, 23)
        for _ in range(200):
            h = random_hermitian(rng, 3)
            for eps in eps_grid:
                circ = perturbed_circulator(eps, h)
                r2 = np.abs(np.diag(circ)) ** 2
                if r2.min() >= r2_min and r2.max() <= r2_max:
                    return circ
        return None

    for _ in range(max_tries):
        circ_a = reflective_circulator()
        circ_b = reflective_circulator()
        if circ_a is None or circ_b is None:
            return None
        best = None
        for phase, c in zip(phases, phase_scan_coefficients(circ_a, circ_b, phases, **kwargs)):
            if c is None:
                continue
            cos_d = np.cos(c.delta_plus - c.delta_minus)
            if cos_d >= 0:
                c = swap_roles(c)
                cos_d = -cos_d
            if not (cos_window[0] <= cos_d <= cos_window[1]):
                continue
            if not (
                eta_window[0] <= c.eta_a <= eta_window[1]
                and eta_window[0] <= c.eta_b <= eta_window[1]
            ):
                continue
            if c.beta_plus < 1e-6:
                continue
            est, t_total = predict_transfer(c, kappa0, ratio_db)
            if t_total > max_time:
                continue
            if not (success_window[0] <= est <= success_window[1]):
                continue
            score = abs(est - target)
            if best is None or score < best[0]:
                best = (score, c, float(phase))
        if best is not None:
            net = two_qubit_network(
                circ_a, circ_b, interconnect_phase=best[2], **kwargs
            )
            return best[1], net, best[2]
    return None


# -- specialized two-qubit master equation ----------------------------------


def feeding_operator(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
) -> np.ndarray:
    """The 4x4 feeding operator R (nonzero in the single-excitation block)."""
    r = np.zeros((4, 4), dtype=complex)
    root = np.sqrt(kappa_a * kappa_b)
    cross = np.conj(coeffs.t_ab) + coeffs.t_ba
    r[UP_DOWN, UP_DOWN] = kappa_a * coeffs.eta_a
    r[DOWN_UP, DOWN_UP] = kappa_b * coeffs.eta_b
    r[DOWN_UP, UP_DOWN] = root * cross * np.exp(1j * (phi_a - phi_b))
    r[UP_DOWN, DOWN_UP] = root * np.conj(cross) * np.exp(-1j * (phi_a - phi_b))
    return r


def two_qubit_h_eff(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
    h_az: float = 0.0,
    h_bz: float = 0.0,
) -> np.ndarray:
    """Excitation-number-conserving effective Hamiltonian, explicit form."""
    im_a = kappa_a * coeffs.t_aa.imag
    im_b = kappa_b * coeffs.t_bb.imag
    h = np.zeros((4, 4), dtype=complex)
    h[UP_UP, UP_UP] = im_a + im_b + 0.5 * h_az + 0.5 * h_bz
    h[DOWN_DOWN, DOWN_DOWN] = -(0.5 * h_az + 0.5 * h_bz)
    h[UP_DOWN, UP_DOWN] = im_a + 0.5 * h_az - 0.5 * h_bz
    h[DOWN_UP, DOWN_UP] = im_b - 0.5 * h_az + 0.5 * h_bz
    root = np.sqrt(kappa_a * kappa_b)
    chi_m = phi_a - phi_b + coeffs.delta_minus
    cross = root * coeffs.beta_minus * np.exp(-1j * chi_m) / 2j
    h[UP_DOWN, DOWN_UP] = cross
    h[DOWN_UP, UP_DOWN] = np.conj(cross)
    return h


def _feeding_coefficient_matrix(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float,
    phi_b: float,
) -> np.ndarray:
    """Hermitian 2x2 coefficient matrix B of the collective dissipator
    sum_{ik} B_ik sigma_k rho sigma_i^dag (indices a=0, b=1)."""
    root = np.sqrt(kappa_a * kappa_b)
    b_ab = (
        root
        * (coeffs.t_ab + np.conj(coeffs.t_ba))
        * np.exp(-1j * (phi_a - phi_b))
    )
    return np.array(
        [
            [kappa_a * coeffs.eta_a, b_ab],
            [np.conj(b_ab), kappa_b * coeffs.eta_b],
        ]
    )


def specialized_master_equation(
    coeffs: TransferCoefficients,
    kappa_a: float,
    kappa_b: float,
    phi_a: float = 0.0,
    phi_b: float = 0.0,
    h_az: float = 0.0,
    h_bz: float = 0.0,
) -> np.ndarray:
    """16x16 generator built directly from the t-coefficients.

    Uses the explicit excitation-conserving effective Hamiltonian plus the
    collective dissipator sum_{ik} B_ik (sigma_k rho sigma_i^dag
    - 1/2 {sigma_i^dag sigma_k, rho}); the single-excitation restriction of
    sum B_ik sigma_i^dag sigma_k is the feeding operator R.  Independent of
    the generic contracted-Lindblad construction; the two must agree, which
    is this module's central cross-validation.  Note: the compact
    "Tr(rho P_uu) R + Tr(R rho) P_dd" form of the feeding terms holds only
    on states block-diagonal in total excitation number; the full dissipator
    here also carries the inter-sector coherence terms.
    """
    h = two_qubit_h_eff(coeffs, kappa_a, kappa_b, phi_a, phi_b, h_az, h_bz)
    b_mat = _feeding_coefficient_matrix(coeffs, kappa_a, kappa_b, phi_a, phi_b)
    eye2 = np.eye(2, dtype=complex)
    sig = [np.kron(SIGMA_MINUS, eye2), np.kron(eye2, SIGMA_MINUS)]  # a, b
    eye = np.eye(4, dtype=complex)

    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for i in range(2):
        for k in range(2):
            jump = np.kron(sig[i].conj(), sig[k])
            anti = sig[i].conj().T @ sig[k]
            gen += b_mat[i, k] * (
                jump
                - 0.5 * np.kron(eye, anti)
                - 0.5 * np.kron(anti.T, eye)
            )
    return gen


def verify_specialized_generator(
    network: Network,
    h_az: float = 0.0,
    h_bz: float = 0.0,
    tol: float = 1e-12,
) -> float:
    """Compare the specialized generator against the generic Lindblad one.

    The network's local Hamiltonians must be the matching sigma_z controls
    (as built by two_qubit_network).  Returns the max-abs residual; raises
    if it exceeds tol relative to the generator scale.
    """
    from .lindblad import Controls, build_generator

    model = contract_network(network)
    generic = build_generator(model, Controls(), 0.0)

    pa, pb = coupled_qubit_ports(network)
    coeffs = extract_coefficients(model, (pa, pb))
    couplings = {
        port: c
        for sys in network.systems
        for port, c in sys.couplings.items()
    }
    special = specialized_master_equation(
        coeffs,
        kappa_a=couplings[pa].kappa,
        kappa_b=couplings[pb].kappa,
        phi_a=couplings[pa].phi,
        phi_b=couplings[pb].phi,
        h_az=h_az,
        h_bz=h_bz,
    )
    residual = float(np.abs(generic - special).max())
    scale = max(1.0, float(np.abs(generic).max()))
    if residual > tol * scale:
        raise MismatchWithGenericGenerator(residual)
    return residual
