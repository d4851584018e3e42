"""Brute-force Lindblad reference for small chains.

Density matrices are vectorized row-major, vec(A X B) = kron(A, B^T) vec(X).
The generator conserves the magnetization difference M(bra) - M(ket) of each
matrix unit |I><J|, and the steady state (and the leading counting-field
eigenvector) lives in the zero-difference sector.  Solves are done densely on
that sector, which keeps n = 6 at dimension 924 instead of 4096.
"""
from dataclasses import dataclass, field
from functools import reduce
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateSteadyState, ValidationError

SIGMA_P = np.array([[0.0, 1.0], [0.0, 0.0]])
SIGMA_M = SIGMA_P.T.copy()
SIGMA_Z = np.diag([1.0, -1.0])
ID2 = np.eye(2)


def site_op(op, j, n):
    """op acting on site j (1-based) of an n-site chain."""
    if not 1 <= j <= n:
        raise ValidationError(f"site {j} outside 1..{n}")
    return reduce(np.kron, [op if k == j else ID2 for k in range(1, n + 1)])


def magnetization(n):
    return sum(site_op(SIGMA_Z, j, n) for j in range(1, n + 1))


def _check_size(n, nmax=12):
    if not 2 <= n <= nmax:
        raise ValidationError(f"n must be in 2..{nmax}, got {n}")


def build_xxz(n, delta):
    """Open chain sum_{j<n} 2(s+_j s-_{j+1} + s-_j s+_{j+1}) + delta sz_j sz_{j+1}."""
    _check_size(n)
    N = 2 ** n
    H = np.zeros((N, N))
    bond = 2 * (np.kron(SIGMA_P, SIGMA_M) + np.kron(SIGMA_M, SIGMA_P)) \
        + delta * np.kron(SIGMA_Z, SIGMA_Z)
    for j in range(1, n):
        H += np.kron(np.kron(np.eye(2 ** (j - 1)), bond), np.eye(2 ** (n - j - 1)))
    return H.astype(complex)


def build_staggered(n, delta, h):
    """XXZ chain plus the staggered field h sum_j (-1)^j sz_j."""
    H = build_xxz(n, delta)
    for j in range(1, n + 1):
        H = H + h * (-1) ** j * site_op(SIGMA_Z, j, n)
    return H


class Jump(NamedTuple):
    """Jump operator with rate, magnetization direction (+1 raises M) and
    transport label flow (+1 moves magnetization left to right)."""

    op: np.ndarray
    rate: float
    direction: int
    flow: int = 0


@dataclass
class LindbladModel:
    n: int
    hamiltonian: np.ndarray
    jumps: list  # of Jump
    rates: tuple = (1.0, 0.0, 0.0, 1.0)
    eps: float = 1.0
    h: float = 0.0
    delta: float = 1.0
    _tilt_parts: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        H = self.hamiltonian
        if abs(H - H.conj().T).max() > 1e-12:
            raise ValidationError("hamiltonian is not Hermitian")
        M = magnetization(self.n)
        for op, rate, direction, _ in self.jumps:
            if rate < 0:
                raise ValidationError("negative jump rate")
            comm = M @ op - op @ M
            d = 0
            if np.allclose(comm, 2 * op):
                d = 1
            elif np.allclose(comm, -2 * op):
                d = -1
            if direction is not None and direction != d:
                raise ValidationError("jump direction label does not match [M, L]")


def driven_model(n, delta, rates=(1.0, 0.0, 0.0, 1.0), eps=1.0, h=0.0):
    """Chain with boundary jumps sqrt(eps a) s+_1, sqrt(eps b) s-_1, sqrt(eps c) s+_n, sqrt(eps d) s-_n."""
    a, b, c, d = (float(x) for x in rates)
    H = build_staggered(n, delta, h) if h else build_xxz(n, delta)
    jumps = [
        Jump(site_op(SIGMA_P, 1, n), eps * a, 1, 1),
        Jump(site_op(SIGMA_M, 1, n), eps * b, -1, -1),
        Jump(site_op(SIGMA_P, n, n), eps * c, 1, -1),
        Jump(site_op(SIGMA_M, n, n), eps * d, -1, 1),
    ]
    return LindbladModel(n, H, jumps, (a, b, c, d), float(eps), float(h), float(delta))


def maximal_model(n, delta, eps):
    """Pure source on site 1 and pure sink on site n."""
    return driven_model(n, delta, (1.0, 0.0, 0.0, 1.0), eps)


def symmetric_rates(mu):
    if abs(mu) > 1:
        raise ValidationError("|mu| must be <= 1")
    return ((1 + mu) / 2, (1 - mu) / 2, (1 - mu) / 2, (1 + mu) / 2)


@dataclass
class Superoperator:
    matrix: sp.csr_matrix
    n: int

    def dense(self):
        return self.matrix.toarray()

    def sector(self, dm=0):
        """Dense restriction to matrix units |I><J| with M(I) - M(J) = 2 dm."""
        idx = sector_indices(self.n, dm)
        return self.matrix[idx][:, idx].toarray(), idx


def sector_indices(n, dm=0):
    N = 2 ** n
    m = np.array([n - 2 * bin(i).count("1") for i in range(N)])
    diff = m[:, None] - m[None, :]
    return np.flatnonzero(diff.ravel() == 2 * dm)


def liouvillean_matrix(H, jumps, jump_weights=None):
    """Sparse -i[H, .] + sum_k r_k (L . L^+ - 1/2{L^+L, .}); jump terms scaled by jump_weights."""
    N = H.shape[0]
    I = sp.identity(N, format="csr", dtype=complex)
    Hs = sp.csr_matrix(H)
    Lv = -1j * (sp.kron(Hs, I) - sp.kron(I, Hs.T))
    for k, (op, rate, _, _) in enumerate(jumps):
        if rate == 0:
            continue
        w = 1.0 if jump_weights is None else jump_weights[k]
        A = sp.csr_matrix(op)
        AdA = (A.conj().T @ A).tocsr()
        Lv = Lv + rate * (w * sp.kron(A, A.conj())
                          - 0.5 * sp.kron(AdA, I) - 0.5 * sp.kron(I, AdA.T))
    return Lv.tocsr()


def build_liouvillean(model):
    return Superoperator(liouvillean_matrix(model.hamiltonian, model.jumps), model.n)


def steady_state(superop, gap_tol=1e-8):
    """Trace-one Hermitian steady state from the zero eigenvalue of the M-sector generator."""
    A, idx = superop.sector(0)
    w, v = np.linalg.eig(A)
    order = np.argsort(abs(w))
    if len(w) > 1 and abs(w[order[1]]) < gap_tol:
        raise DegenerateSteadyState("liouville-oracle", "unique steady state",
                                    abs(w[order[1]]), gap_tol)
    N = 2 ** superop.n
    vec = np.zeros(N * N, dtype=complex)
    vec[idx] = v[:, order[0]]
    rho = vec.reshape(N, N)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def observable(rho, op):
    return np.trace(op @ rho) / np.trace(rho)


def current_operator(k, n):
    """i (s+_k s-_{k+1} - s-_k s+_{k+1})."""
    return 1j * (site_op(SIGMA_P, k, n) @ site_op(SIGMA_M, k + 1, n)
                 - site_op(SIGMA_M, k, n) @ site_op(SIGMA_P, k + 1, n))


def current_oracle(rho, k):
    n = int(round(np.log2(rho.shape[0])))
    return float(observable(rho, current_operator(k, n)).real)


def profile_oracle(rho):
    n = int(round(np.log2(rho.shape[0])))
    return np.array([observable(rho, site_op(SIGMA_Z, j, n)).real for j in range(1, n + 1)])


def maximal_steady_state(n, delta, eps):
    return steady_state(build_liouvillean(maximal_model(n, delta, eps)))
