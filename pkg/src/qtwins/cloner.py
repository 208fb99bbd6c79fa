"""Symmetry operations and 1 -> 2 cloning maps on qudits.

Every map takes the state to clone in mode ``a`` and an unnormalized blank
ancilla ``I`` in mode ``b``. The optimal-clone output for ``j = -1, +-i`` is
left sub-normalized; its trace is the post-selection probability
``(d + Re j) / (d + 1)``.
"""

import numpy as np

from .qmath import dag, density_matrix, ket, partial_trace, projector, tensor_product

#: The four interferometer phases, in the order used for all iteration.
PHASES = (1, -1, 1j, -1j)


def symmetry_phase(j):
    """Validate ``j`` as one of the fourth roots of unity and return it."""
    for p in PHASES:
        if abs(complex(j) - p) < 1e-12:
            return p
    raise ValueError(f"symmetry phase must be one of +1, -1, +i, -i; got {j!r}")


def phase_label(j):
    return {1: "+1", -1: "-1", 1j: "+i", -1j: "-i"}[symmetry_phase(j)]


def check_alpha_sq(alpha_sq):
    alpha_sq = float(alpha_sq)
    if not 0.0 <= alpha_sq <= 1.0:
        raise ValueError(f"distinguishability factor must lie in [0, 1], got {alpha_sq}")
    return alpha_sq


def swap_operator(d):
    """SWAP on ``C^d (x) C^d``: ``S|u,w> = |w,u>``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    s = np.zeros((d * d, d * d), dtype=complex)
    for u in range(d):
        for w in range(d):
            s[w * d + u, u * d + w] = 1
    return s


def symmetry_op(j, d):
    """Generalized symmetry operation ``(I + j S) / 2``."""
    j = symmetry_phase(j)
    return (np.eye(d * d) + j * swap_operator(d)) / 2


def _ancilla_product(rho):
    d = rho.shape[0]
    return tensor_product(rho, np.eye(d))


def trivial_clone(rho):
    """Incoherent mode shuffle, ``(rho (x) I + I (x) rho) / (2d)``."""
    rho = density_matrix(rho)
    d = rho.shape[0]
    eye = np.eye(d)
    return (tensor_product(rho, eye) + tensor_product(eye, rho)) / (2 * d)


def optimal_clone(rho, j=1):
    """Optimal cloner output ``2/(d+1) Pi^j (rho (x) I) Pi^j+``."""
    rho = density_matrix(rho)
    d = rho.shape[0]
    p = symmetry_op(j, d)
    return 2 / (d + 1) * p @ _ancilla_product(rho) @ dag(p)


def twins_operator(rho):
    """Coherent part ``S (rho (x) I)`` of the optimal clones.

    Not a physical state: it is non-Hermitian for any ``rho`` other than
    ``I/d``. Its joint measurement gives ``Tr[(x (x) y) c] = Tr(x y rho)``.
    """
    rho = density_matrix(rho)
    return swap_operator(rho.shape[0]) @ _ancilla_product(rho)


def partial_clone(rho, j, alpha_sq):
    """Output for partially distinguishable photons.

    ``alpha_sq`` weights the optimal clones; the remainder are trivial clones.
    """
    alpha_sq = check_alpha_sq(alpha_sq)
    return alpha_sq * optimal_clone(rho, j) + (1 - alpha_sq) * trivial_clone(rho)


def clone_fidelity(psi, mode="a"):
    """Fidelity of one reduced optimal clone with the pure input ``psi``."""
    psi = ket(psi)
    reduced = partial_trace(optimal_clone(projector(psi), 1), keep=mode)
    return float(np.real(np.conj(psi) @ reduced @ psi))


def universal_clone_fidelity(d):
    """Closed-form optimal fidelity ``1/2 + 1/(d+1)``."""
    return 0.5 + 1 / (d + 1)
