"""Closed-form elimination of internal feedback connections.

Contracting a network replaces (S, L, H_sys, W) by an effective loop-free
input-output model.  Everything is driven by the single inversion
G = (1 - S W)^{-1}: the routing of system emissions to external outputs is
M = X_o G, the pure network contribution is T = S W G, and the coherent
network-induced Hamiltonian comes from the anti-Hermitian part of G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdentityViolation, NonConvergentLoop, SingularMatrix
from .network import (
    Network,
    assemble_H_sys,
    assemble_L,
    assemble_S,
    assemble_W,
    dag,
    internal_projectors,
    partition_ports,
)

TOL_SOLVE = 1e-10
DELTA_CONV = 1e-6
COND_MAX = 1e12


@dataclass(frozen=True)
class RoutingMatrices:
    """Matrices derived from the loop inversion, in global port order."""

    G: np.ndarray  # (1 - SW)^{-1}
    M: np.ndarray  # X_o G, external-output routing of emissions
    T: np.ndarray  # SW G = G - 1, pure network contribution
    spectral_radius_SW: float
    sigma_max_SW: float


@dataclass(frozen=True)
class EffectiveModel:
    """Contracted input-output model restricted to the external ports."""

    s_eff: np.ndarray  # (n_ext_out, n_ext_in)
    l_eff_coeffs: np.ndarray  # (n_ext_out, N); row j gives sum_k M_jk L_k
    h_eff: np.ndarray  # (D, D), Hermitian
    h_loss: np.ndarray  # (D, D), non-Hermitian
    h_sys: np.ndarray
    base_L: list
    routing: RoutingMatrices
    external_inputs: list
    external_outputs: list


def routing_matrices(
    S: np.ndarray,
    W: np.ndarray,
    delta_conv: float = DELTA_CONV,
    cond_max: float = COND_MAX,
) -> RoutingMatrices:
    n = S.shape[0]
    sw = S @ W
    eigvals = np.linalg.eigvals(sw)
    rho = float(np.abs(eigvals).max()) if n else 0.0
    sigma = float(np.linalg.svd(sw, compute_uv=False).max()) if n else 0.0
    if rho >= 1.0 - delta_conv:
        raise NonConvergentLoop(rho)
    one = np.eye(n, dtype=complex)
    a = one - sw
    cond = float(np.linalg.cond(a))
    if cond > cond_max:
        raise SingularMatrix(cond)
    g = np.linalg.solve(a, one)
    _, _, _, x_o = internal_projectors(W)
    return RoutingMatrices(
        G=g,
        M=x_o @ g,
        T=sw @ g,
        spectral_radius_SW=rho,
        sigma_max_SW=sigma,
    )


def contract(
    S: np.ndarray,
    W: np.ndarray,
    L: list,
    H_sys: np.ndarray,
    delta_conv: float = DELTA_CONV,
    cond_max: float = COND_MAX,
) -> EffectiveModel:
    """Effective (S_eff, L_eff, H_eff, H_loss) for the connected network."""
    routing = routing_matrices(S, W, delta_conv=delta_conv, cond_max=cond_max)
    i_i, x_i, i_o, x_o = internal_projectors(W)
    n = S.shape[0]
    ext_in = [k for k in range(n) if x_i[k, k].real > 0.5]
    ext_out = [k for k in range(n) if x_o[k, k].real > 0.5]

    s_eff_full = x_o @ routing.G @ S @ x_i
    s_eff = s_eff_full[np.ix_(ext_out, ext_in)]
    l_eff_coeffs = routing.M[ext_out, :]

    l_arr = np.array(L)  # (N, D, D)
    l_dag = l_arr.conj().transpose(0, 2, 1)
    k_mat = routing.G - dag(routing.G)
    h_net = np.einsum("jk,jab,kbc->ac", k_mat, l_dag, l_arr) / 2j
    h_eff = np.asarray(H_sys, dtype=complex) + h_net

    l_eff_ops = np.einsum("jk,kab->jab", l_eff_coeffs, l_arr)
    l_eff_dag = l_eff_ops.conj().transpose(0, 2, 1)
    damping = np.einsum("jab,jbc->ac", l_eff_dag, l_eff_ops)
    h_loss = h_eff - 0.5j * damping

    return EffectiveModel(
        s_eff=s_eff,
        l_eff_coeffs=l_eff_coeffs,
        h_eff=h_eff,
        h_loss=h_loss,
        h_sys=np.asarray(H_sys, dtype=complex),
        base_L=[np.asarray(op, dtype=complex) for op in L],
        routing=routing,
        external_inputs=ext_in,
        external_outputs=ext_out,
    )


def contract_network(
    network: Network,
    delta_conv: float = DELTA_CONV,
    cond_max: float = COND_MAX,
) -> EffectiveModel:
    """Assemble a Network's global matrices and contract them."""
    s = assemble_S(network)
    w = assemble_W(network)
    ell = assemble_L(network)
    h_sys = assemble_H_sys(network) if network.systems else np.zeros((1, 1), complex)
    return contract(s, w, ell, h_sys, delta_conv=delta_conv, cond_max=cond_max)


def effective_L_operators(model: EffectiveModel) -> list:
    """Materialize each effective Lindblad operator as a dense matrix."""
    l_arr = np.array(model.base_L)
    return list(np.einsum("jk,kab->jab", model.l_eff_coeffs, l_arr))


def verify_inversion_identities(S: np.ndarray, W: np.ndarray) -> dict:
    """Max-abs residuals of the two inversion identities used in derivations.

    Both reduce to rearrangements of X_o = 1 - W^dag W under unitarity of S;
    they hold exactly whenever 1 - SW is invertible.  Report-only.
    """
    n = S.shape[0]
    one = np.eye(n, dtype=complex)
    sw = S @ W
    _, _, _, x_o = internal_projectors(W)
    g = np.linalg.solve(one - sw, one)
    g_dag = np.linalg.solve(one - dag(sw), one)

    lhs1 = g_dag @ x_o @ g
    rhs1 = g + dag(sw) @ g_dag
    res1 = float(np.abs(lhs1 - rhs1).max())

    lhs2 = 0.5 * one + sw @ g
    rhs2 = 0.5 * (g_dag @ x_o @ g + g - g_dag)
    res2 = float(np.abs(lhs2 - rhs2).max())

    return {"projector_identity": res1, "half_sum_identity": res2}


def dissipative_hamiltonian(model: EffectiveModel, tol: float = 1e-9) -> np.ndarray:
    """Non-Hermitian generator H_sys - (i/2) L^dag L - i L^dag T L.

    Asserts agreement with h_eff - (i/2) L_eff^dag L_eff; a violation
    indicates an implementation bug, never bad input.
    """
    l_arr = np.array(model.base_L)
    l_dag = l_arr.conj().transpose(0, 2, 1)
    direct = np.einsum("jab,jbc->ac", l_dag, l_arr)
    network_term = np.einsum("jk,jab,kbc->ac", model.routing.T, l_dag, l_arr)
    h = model.h_sys - 0.5j * direct - 1j * network_term

    scale = max(1.0, float(np.abs(h).max()))
    residual = float(np.abs(h - model.h_loss).max())
    if residual > tol * scale:
        raise IdentityViolation(residual)
    return h
