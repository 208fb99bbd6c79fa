"""State recovery from the Dirac quasiprobability and from raw counts."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cloner import PHASES, check_alpha_sq, symmetry_phase
from .jointmeas import JointProbTable, MubPair, phase_cycle
from .qmath import (
    DimensionError,
    as_matrix,
    dag,
    eig_hermitian,
    nearest_density_matrix,
    psd_sqrt,
)

log = logging.getLogger(__name__)


class PhaseReferenceError(ValueError):
    """The chosen reference row carries no amplitude."""


class ConvergenceError(RuntimeError):
    """Iterative estimation stopped before meeting its tolerance."""

    def __init__(self, message, iterations, improvement, gradient_residual):
        super().__init__(
            f"{message} (iterations={iterations}, last improvement={improvement:.3e}, "
            f"max eig(R) - 1={gradient_residual:.3e})"
        )
        self.iterations = iterations
        self.improvement = improvement
        self.gradient_residual = gradient_residual


@dataclass(frozen=True, eq=False)
class WavefunctionEstimate:
    """Normalized wave function in the Y basis with its phase reference."""

    amplitudes: np.ndarray
    reference_row: int
    norm_constant: float

    @property
    def dim(self):
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class FidelityReport:
    value: float
    kind: str  # "pure-vs-mixed" or "mixed-vs-mixed"

    def __float__(self):
        return self.value


def _fourier_overlaps(d):
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / math.sqrt(d)


def wavefunction_from_dist(dist, x0=0, mub=None):
    """Read a pure state's wave function off one row of the quasiprobability.

    Row ``x0`` satisfies ``D(x0, y) = <x0|y> psi(y) <psi|x0>``, so dividing
    out the known overlap ``<x0|y>`` leaves ``psi(y)`` times a constant. The
    constant is fixed to be real and positive, which for ``x0 = 0`` (the
    diagonal polarization when ``d = 2``) is the plain row normalization.

    Parameters
    ----------
    dist : array_like
        ``d x d`` quasiprobability, rows indexed by X outcomes.
    x0 : int, optional
        Reference X outcome.
    mub : MubPair, optional
        Bases the distribution was measured in; Fourier pair if omitted.
    """
    dist = np.asarray(dist, dtype=complex)
    d = dist.shape[0]
    if dist.shape != (d, d):
        raise DimensionError(f"quasiprobability must be square, got {dist.shape}")
    if not 0 <= x0 < d:
        raise IndexError(f"reference row {x0} out of range for d={d}")
    overlaps = mub.overlaps() if mub is not None else _fourier_overlaps(d)
    row = dist[x0]
    weight = float(np.sum(np.abs(row) ** 2))
    if weight <= 1e-12:
        raise PhaseReferenceError(f"unusable phase reference: row x0={x0} is empty")
    nu = math.sqrt(weight)
    # |sqrt(d) <x0|y>| = 1, so this only strips the y-dependent phase
    amps = row / (math.sqrt(d) * overlaps[x0]) / nu
    return WavefunctionEstimate(amplitudes=amps, reference_row=x0, norm_constant=nu)


def density_from_dist(dist):
    """Invert the Fourier relation between quasiprobability and ``rho``.

    ``p[j, l] = sum_i D[i, j] exp(2j*pi*i*(l - j)/d)`` gives the density
    matrix in the Y basis. The result is Hermitized but not projected onto
    physical states, so noisy input can come back with negative eigenvalues.
    """
    dist = np.asarray(dist, dtype=complex)
    d = dist.shape[0]
    if dist.shape != (d, d):
        raise DimensionError(f"quasiprobability must be square, got {dist.shape}")
    k = np.arange(d)
    # phase[i, j, l] = exp(2 pi i * x_i (y_l - y_j) / d)
    phase = np.exp(2j * np.pi * k[:, None, None] * (k[None, None, :] - k[None, :, None]) / d)
    p = np.einsum("ij,ijl->jl", dist, phase)
    return (p + dag(p)) / 2


def fidelity(a, b):
    """Fidelity between two states.

    If either argument is a ket (or a rank-one density matrix) the overlap
    ``<psi|rho|psi>`` is returned; otherwise the Uhlmann fidelity
    ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    psi, rho = _pure_part(a), b
    if psi is None:
        psi, rho = _pure_part(b), a
    if psi is not None:
        rho = rho if rho.ndim == 2 else np.outer(rho, np.conj(rho))
        value = float(np.real(np.conj(psi) @ rho @ psi))
        return FidelityReport(min(max(value, 0.0), 1.0), "pure-vs-mixed")
    sa = psd_sqrt(as_matrix(a))
    w, _ = eig_hermitian(sa @ as_matrix(b) @ sa)
    value = float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)
    return FidelityReport(min(max(value, 0.0), 1.0), "mixed-vs-mixed")


def _pure_part(m):
    if m.ndim == 1:
        return m / np.linalg.norm(m)
    w, v = eig_hermitian(m)
    if abs(w[-1] - 1) < 1e-10 and abs(np.sum(w) - 1) < 1e-10:
        return v[:, -1]
    return None


def measurement_operators(mub: MubPair, alpha_sq=1.0):
    """Effective operators ``E[j][x, y]`` with ``Prob^j(x, y) = Tr(E rho)``.

    Returns a dict from phase to a ``(d, d, d, d)`` array indexed ``[x, y]``
    then by matrix row and column.
    """
    alpha_sq = check_alpha_sq(alpha_sq)
    d = mub.dim
    xp = np.einsum("ax,bx->xab", mub.x_basis, np.conj(mub.x_basis))
    yp = np.einsum("ay,by->yab", mub.y_basis, np.conj(mub.y_basis))
    incoherent = xp[:, None] + yp[None, :]
    xy = np.einsum("xab,ybc->xyac", xp, yp)
    yx = np.einsum("ybc,xcd->xybd", yp, xp)
    ops = {}
    for j in PHASES:
        optimal = (incoherent + j * xy + np.conj(j) * yx) / (2 * (d + 1))
        ops[j] = alpha_sq * optimal + (1 - alpha_sq) * incoherent / (2 * d)
    return ops


def _collect_counts(counts, d):
    n = {j: np.zeros((d, d)) for j in PHASES}
    seen = set()
    for rec in counts:
        key = (symmetry_phase(rec.j), rec.x_index, rec.y_index)
        if key in seen:
            raise ValueError(f"duplicate count record for setting {key}")
        seen.add(key)
        if rec.counts < 0:
            raise ValueError("counts must be non-negative")
        n[key[0]][rec.x_index, rec.y_index] = rec.counts
    if len(seen) != 4 * d * d:
        raise ValueError(f"expected {4 * d * d} settings, got {len(seen)}")
    for j in PHASES:
        if n[j].sum() <= 0:
            raise ValueError(f"no counts recorded at phase {j}")
    return n


def linear_inversion(counts, mub, alpha_sq=1.0):
    """Unconstrained estimate from count frequencies via phase cycling.

    The unknown count scale is fixed from the total, since the summed event
    probability over all settings does not depend on the state. The
    coherent weight ``alpha_sq`` is divided out.
    """
    d = mub.dim
    n = _collect_counts(counts, d)
    alpha_sq = check_alpha_sq(alpha_sq)
    if alpha_sq == 0:
        raise ValueError("no coherent contribution: state is not identifiable")
    total_prob = alpha_sq * 4 * d / (d + 1) + (1 - alpha_sq) * 4
    scale = sum(v.sum() for v in n.values()) / total_prob
    tables = [JointProbTable(j=j, probs=n[j] / scale) for j in PHASES]
    return density_from_dist(phase_cycle(tables) / alpha_sq)


def mle_fit(counts, mub, alpha_sq=1.0, max_iter=10_000, tol=1e-10, kkt_tol=1e-6):
    """Maximum-likelihood density matrix from coincidence counts.

    Maximizes the Poisson likelihood of the counts under the cloner forward
    model using a diluted ``R rho R`` iteration, started from the linear
    inversion estimate projected onto physical states. The dilution grows
    while the likelihood improves and shrinks when a step overshoots, so
    every accepted step increases the likelihood. Once a step gains less
    than ``tol``, projected gradient steps take over, which reach
    rank-deficient maxima that the multiplicative update only approaches.

    Parameters
    ----------
    counts : iterable of CountRecord
        One record per ``(j, x, y)`` setting.
    mub : MubPair
        Measured bases.
    alpha_sq : float, optional
        Coherent weight of the clone state the counts were recorded with.
    max_iter : int, optional
        Iteration cap.
    tol : float, optional
        Per-count log-likelihood gain below which the fixed point is
        considered stalled.
    kkt_tol : float, optional
        Stop once the largest eigenvalue of ``R`` exceeds 1 by less than
        this. The excess bounds the per-count log-likelihood still to gain.

    Returns
    -------
    ndarray
        Positive semidefinite, unit-trace ``d x d`` matrix.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is reached first.
    """
    counts = list(counts)
    d = mub.dim
    n = _collect_counts(counts, d)
    ops = measurement_operators(mub, alpha_sq)
    e = np.concatenate([ops[j].reshape(d * d, d, d) for j in PHASES])
    f = np.concatenate([n[j].ravel() for j in PHASES])
    f = f / f.sum()
    active = f > 0
    e_act, f_act = e[active], f[active]

    if alpha_sq > 0:
        start = nearest_density_matrix(linear_inversion(counts, mub, alpha_sq))
    else:
        start = np.eye(d) / d
    # a small full-rank admixture lets the multiplicative update reach every direction
    rho = (1 - 1e-6) * start + 1e-6 * np.eye(d) / d
    eye = np.eye(d)

    def loglik(r):
        p = np.real(np.einsum("kab,ba->k", e_act, r))
        if np.any(p <= 0):
            return -np.inf, p
        return float(f_act @ np.log(p)), p

    def gradient(p):
        return np.einsum("k,kab->ab", f_act / p, e_act)

    def kkt_gap(r_op):
        # optimal iff R <= I on the whole space (R rho = rho holds at any fixed point)
        return float(np.linalg.eigvalsh((r_op + dag(r_op)) / 2)[-1] - 1)

    def polish(r, val, p, t):
        # projected gradient ascent; the simplex projection lands exactly on
        # the boundary where R rho R only creeps towards it
        g = gradient(p)
        while t > 1e-12:
            cand = nearest_density_matrix(r + t * g)
            v_new, p_new = loglik(cand)
            diff = cand - r
            lower = val + np.real(np.vdot(g, diff)) - np.linalg.norm(diff) ** 2 / (2 * t)
            if v_new >= lower and v_new >= val:
                return cand, v_new, p_new, t * 2
            t /= 2
        return r, val, p, t

    current, p = loglik(rho)
    r_op = gradient(p)
    eps = 1.0
    t = 1.0
    improvement = np.inf
    for it in range(1, max_iter + 1):
        for _ in range(60):
            step = eye + eps * r_op
            cand = step @ rho @ dag(step)
            cand = (cand + dag(cand)) / 2
            cand /= np.trace(cand).real
            value, p_new = loglik(cand)
            if value >= current:
                break
            eps /= 2
        else:
            cand, value, p_new = rho, current, p
        improvement = value - current
        rho, current, p = cand, value, p_new
        eps = min(eps * 2, 1e8)
        if improvement < tol:
            rho, value, p, t = polish(rho, current, p, t)
            improvement = value - current
            current = value
        r_op = gradient(p)
        gap = kkt_gap(r_op)
        if gap < kkt_tol:
            break
    else:
        raise ConvergenceError(
            "maximum-likelihood iteration did not converge", max_iter, improvement, kkt_gap(r_op)
        )
    log.debug("mle_fit converged after %d iterations", it)
    w, v = eig_hermitian((rho + dag(rho)) / 2)
    w = np.clip(w, 0, None)
    rho = (v * (w / w.sum())) @ dag(v)
    return rho
