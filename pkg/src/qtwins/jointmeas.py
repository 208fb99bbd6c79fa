"""Joint measurements of complementary observables on clones.

The measured observables are a Fourier pair of mutually unbiased bases.
Coordinates are taken in the ``Y`` basis, so ``y_j`` are the standard basis
vectors and ``<x_i|y_j> = exp(2j*pi*i*j/d)/sqrt(d)``. For ``d = 2`` this is
``X = {d, a}`` and ``Y = {h, v}``.
"""

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .cloner import PHASES, check_alpha_sq, partial_clone, symmetry_phase
from .qmath import DimensionError, dag, density_matrix, dft_matrix

CROSS_CHECK_TOL = 1e-10


class CrossCheckError(ArithmeticError):
    """Two independent routes to the same quantity disagree."""


@dataclass(frozen=True, eq=False)
class MubPair:
    """Eigenbases of two complementary observables, stored as columns."""

    x_basis: np.ndarray
    y_basis: np.ndarray

    @property
    def dim(self):
        return self.x_basis.shape[0]

    def overlaps(self):
        """Matrix of inner products ``<x_i|y_j>``."""
        return dag(self.x_basis) @ self.y_basis

    def x_projector(self, i):
        v = self.x_basis[:, i]
        return np.outer(v, np.conj(v))

    def y_projector(self, j):
        v = self.y_basis[:, j]
        return np.outer(v, np.conj(v))


@dataclass(frozen=True, eq=False)
class JointProbTable:
    """Post-selected event probabilities ``Prob^j(x, y)`` for one phase."""

    j: complex
    probs: np.ndarray

    @property
    def dim(self):
        return self.probs.shape[0]

    def total(self):
        return float(self.probs.sum())


def fourier_mub(d):
    """Fourier-related pair of bases in ``C^d``."""
    f = dft_matrix(d)
    # x_i has components <y_j|x_i> = conj(F[i, j])
    return MubPair(x_basis=dag(f), y_basis=np.eye(d, dtype=complex))


def _check_dims(rho, mub):
    if rho.shape[0] != mub.dim:
        raise DimensionError(f"state dimension {rho.shape[0]} does not match basis dimension {mub.dim}")


def quasi_dist_direct(rho, mub):
    """Dirac quasiprobability ``D_ij = <x_i|y_j><y_j|rho|x_i>``."""
    rho = density_matrix(rho)
    _check_dims(rho, mub)
    sandwich = dag(mub.y_basis) @ rho @ mub.x_basis  # [j, i] = <y_j|rho|x_i>
    return mub.overlaps() * sandwich.T


def _marginals(rho, mub):
    px = np.real(np.einsum("ai,ab,bi->i", np.conj(mub.x_basis), rho, mub.x_basis))
    py = np.real(np.einsum("ai,ab,bi->i", np.conj(mub.y_basis), rho, mub.y_basis))
    return px, py


def channel_joint_prob(state, mub):
    """``Tr[(x_a (x) y_b) state]`` for every outcome pair of a two-mode state."""
    d = mub.dim
    s = np.asarray(state).reshape(d, d, d, d)
    x, y = mub.x_basis, mub.y_basis
    p = np.einsum("ax,by,abcd,cx,dy->xy", np.conj(x), np.conj(y), s, x, y)
    return p


def joint_prob_closed_form(rho, j, mub, alpha_sq=1.0):
    """Closed-form joint probability on (partially) optimal clones."""
    rho = density_matrix(rho)
    _check_dims(rho, mub)
    j = symmetry_phase(j)
    alpha_sq = check_alpha_sq(alpha_sq)
    d = mub.dim
    px, py = _marginals(rho, mub)
    incoherent = px[:, None] + py[None, :]
    coherent = np.real(j * quasi_dist_direct(rho, mub))
    optimal = (incoherent + 2 * coherent) / (2 * (d + 1))
    trivial = incoherent / (2 * d)
    return alpha_sq * optimal + (1 - alpha_sq) * trivial


def joint_prob(rho, j, mub, alpha_sq=1.0):
    """Joint probability table ``Prob^j(x, y)`` for X on mode a, Y on mode b.

    The table is computed from the cloner output by a trace and, separately,
    from the closed form in terms of ``<x>``, ``<y>`` and ``<xy>``. The two
    must agree to ``CROSS_CHECK_TOL``.

    Parameters
    ----------
    rho : array_like
        Input density matrix (or ket).
    j : complex
        Interferometer phase, one of ``+1, -1, +1j, -1j``.
    mub : MubPair
        Measured bases.
    alpha_sq : float, optional
        Temporal overlap ``|alpha|^2``; 1 gives optimal clones.

    Returns
    -------
    JointProbTable
    """
    rho = density_matrix(rho)
    _check_dims(rho, mub)
    j = symmetry_phase(j)
    via_channel = channel_joint_prob(partial_clone(rho, j, alpha_sq), mub)
    closed = joint_prob_closed_form(rho, j, mub, alpha_sq)
    err = np.max(np.abs(via_channel - closed))
    if err > CROSS_CHECK_TOL:
        raise CrossCheckError(f"channel and closed-form joint probabilities differ by {err:.3e}")
    return JointProbTable(j=j, probs=np.real(via_channel))


def trivial_joint_prob(rho, mub, j=1):
    """Joint probability on trivial clones, ``(<x> + <y>) / (2d)``.

    The trivial cloner ignores the interferometer phase; ``j`` only labels
    the setting the table was recorded at.
    """
    rho = density_matrix(rho)
    _check_dims(rho, mub)
    px, py = _marginals(rho, mub)
    return JointProbTable(j=symmetry_phase(j), probs=(px[:, None] + py[None, :]) / (2 * mub.dim))


def _by_phase(tables):
    found = {}
    for t in tables:
        j = symmetry_phase(t.j)
        if j in found:
            raise ValueError(f"duplicate table for phase {j}")
        found[j] = t
    missing = [p for p in PHASES if p not in found]
    if missing:
        raise ValueError(f"missing tables for phases {missing}")
    return found


def phase_cycle(tables: Iterable[JointProbTable], mub=None):
    """Isolate the twins' contribution: ``(d+1)/2 * sum_j conj(j) Prob^j``.

    Exactly one table per phase ``+1, -1, +i, -i`` is required.
    """
    found = _by_phase(tables)
    shapes = {t.probs.shape for t in found.values()}
    if len(shapes) != 1:
        raise DimensionError(f"tables have mixed shapes {shapes}")
    d = found[1].dim
    if mub is not None and mub.dim != d:
        raise DimensionError("tables do not match basis dimension")
    acc = sum(np.conj(j) * found[j].probs for j in PHASES)
    return (d + 1) / 2 * acc


def phase_cycle_uncertainty(variances, d):
    """Propagate per-setting variances of ``Prob^j`` through ``phase_cycle``.

    ``variances`` maps each phase to a ``d x d`` array. Returns the standard
    deviations of the real and imaginary parts.
    """
    found = {symmetry_phase(j): np.asarray(v, dtype=float) for j, v in variances.items()}
    k = ((d + 1) / 2) ** 2
    var_re = k * sum(np.real(np.conj(j)) ** 2 * found[j] for j in PHASES)
    var_im = k * sum(np.imag(np.conj(j)) ** 2 * found[j] for j in PHASES)
    return np.sqrt(var_re), np.sqrt(var_im)


def measurement_settings(d):
    """Number of (phase, outcome) settings needed for one wave function."""
    return 4 * d
