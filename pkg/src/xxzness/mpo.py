"""Matrix-product steady state rho = S S^+ and its transfer-operator contractions.

Orientation: the steady-state contraction places the Lax block L[a, b] on the
physical matrix unit |b><a|, i.e.

    S_{I,J} = <0| L[J_1, I_1] L[J_2, I_2] ... L[J_n, I_n] |0>.

With P[i][j] := L[j, i] the double Lax entries are
    LL(i, j) = sum_k P[i][k] (x) conj(P[j][k]),
T = LL(0,0) + LL(1,1), V = LL(0,0) - LL(1,1) and the bond current operator
W = i LL(1,0) LL(0,1) - i LL(0,1) LL(1,0).

All three map the diagonal auxiliary sector |k,k>> into itself and are
tridiagonal there, with T nonnegative.  Large-n contractions run in that
D-dimensional sector through the log-domain kernel, so the cost is O(n D).
The dense D^2 x D^2 operators are kept for identity checks.

Normalizations of L used throughout:
    "raw"       the Lax operator as defined (degenerate at gamma = 0),
    "unit"      L / sin(gamma), regular at the isotropic point (default),
    "boundary"  unit scaled so that <<0|(T - V) = <<0| and (T + V)|0>> = |0>>.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContinuityViolation, FitFailure, ValidationError, ZeroPartition
from .qlax import QContext, build_lax, is_isotropic, q_number

NORMS = ("raw", "unit", "boundary")


def default_cutoff(n):
    """Sector dimension that makes every n-site contraction exact.

    <<0|T^a has support k <= a and T^b|0>> support k <= b, so any sandwich of
    n operators only touches k <= n/2 (+1 for the band of a V or W insertion).
    """
    return n // 2 + 2


def lax_blocks(ctx, norm="unit", scale=1.0):
    if norm not in NORMS:
        raise ValidationError(f"norm must be one of {NORMS}")
    if norm == "raw":
        B = build_lax(ctx).blocks
    else:
        B = build_lax(ctx, normalized=True).blocks
        if norm == "boundary":
            B = B / (np.sqrt(2.0) * abs(B[1, 1, 0, 0]))
    return B * scale


def _P(blocks):
    return blocks.transpose(1, 0, 2, 3)


def build_S_dense(n, ctx, norm="unit"):
    """Dense 2^n x 2^n matrix S, so that rho = S S^+ (unnormalized)."""
    if n > 12:
        raise ValidationError("dense S limited to n <= 12")
    P = _P(lax_blocks(ctx, norm))
    D = ctx.cutoff
    R = np.zeros((1, 1, D), dtype=complex)
    R[0, 0, 0] = 1.0
    for site in range(n):
        keep = min(D, n - site)  # aux index must return to 0 by the end
        R = np.einsum("IJa,ijab->IiJjb", R, P[:, :, : R.shape[2], :keep])
        m = R.shape[0] * 2
        R = R.reshape(m, m, keep)
    return R[:, :, 0]


def dense_steady_state(n, ctx, norm="unit"):
    S = build_S_dense(n, ctx, norm)
    rho = S @ S.conj().T
    return rho / np.trace(rho)


# ---------------------------------------------------------------- dense family

def double_lax(blocks):
    """(2, 2) array of D^2 x D^2 matrices LL(i, j)."""
    P = _P(blocks)
    D = blocks.shape[-1]
    LL = np.zeros((2, 2, D * D, D * D), dtype=complex)
    for i in range(2):
        for j in range(2):
            LL[i, j] = sum(np.kron(P[i, k], P[j, k].conj()) for k in range(2))
    return LL


@dataclass(frozen=True)
class TransferFamily:
    T: np.ndarray
    V: np.ndarray
    W: np.ndarray
    bra0: np.ndarray
    ket0: np.ndarray
    ctx: QContext = field(repr=False)
    norm: str = "unit"


def continuity_constant(ctx, norm="unit", scale=1.0):
    """c with <<0|T^a (W - c T) T^b|0>> = 0, namely (eps/2) |<0|L[1,1]|0>|^2."""
    B = lax_blocks(ctx, norm, scale)
    eps = ctx.eps
    return 0.5 * eps.real * abs(B[1, 1, 0, 0]) ** 2


def quoted_continuity_constant(ctx):
    """-2i [s]_q, the constant quoted for the operator identity W = c T."""
    return -2j * q_number(ctx.s, ctx.gamma)


def build_transfer(ctx, norm="unit", check=True, tol=1e-8):
    """Dense T, V, W on the doubled auxiliary space.

    With ``check`` the continuity identity is verified in its matrix-element
    form <<0|T^a (W - c T) T^b|0>> = 0 (all a + b <= D - 3), which is what the
    current formula needs; ContinuityViolation is raised otherwise.
    """
    B = lax_blocks(ctx, norm)
    LL = double_lax(B)
    T = LL[0, 0] + LL[1, 1]
    V = LL[0, 0] - LL[1, 1]
    W = 1j * (LL[1, 0] @ LL[0, 1] - LL[0, 1] @ LL[1, 0])
    D = ctx.cutoff
    e0 = np.zeros(D * D, dtype=complex)
    e0[0] = 1.0
    fam = TransferFamily(T, V, W, e0, e0.copy(), ctx, norm)
    if check:
        res = weak_continuity_residual(fam)
        if res > tol:
            raise ContinuityViolation("mpo-ness", "weak continuity identity", res, tol)
    return fam


def weak_continuity_residual(fam, const=None):
    """max |<<0|T^a (W - c T) T^b|0>>| / <<0|T^(a+b+1)|0>> over a + b <= D - 3."""
    c = continuity_constant(fam.ctx, fam.norm) if const is None else const
    D = fam.ctx.cutoff
    X = fam.W - c * fam.T
    lefts = [fam.bra0]
    for _ in range(D):
        lefts.append(lefts[-1] @ fam.T)
    rights = [fam.ket0]
    for _ in range(D):
        rights.append(fam.T @ rights[-1])
    res = 0.0
    for a in range(D - 2):
        for b in range(D - 2 - a):
            num = lefts[a] @ X @ rights[b]
            den = lefts[a + b + 1] @ fam.ket0
            res = max(res, abs(num) / abs(den))
    return res


def _interior_mask(D, margin):
    k = np.arange(D)
    ok = k <= D - 1 - margin
    return np.outer(ok, ok).ravel()


def dense_operator_residual(fam, const=None):
    """max |W - c T| over the full interior block of the doubled space (c = -2i[s]_q by default).

    Off the diagonal sector W is not proportional to T for any constant; this
    is kept as a diagnostic.
    """
    c = quoted_continuity_constant(fam.ctx) if const is None else const
    m = _interior_mask(fam.ctx.cutoff, 2)
    return float(abs((fam.W - c * fam.T)[np.ix_(m, m)]).max())


# ---------------------------------------------------------------- diagonal sector

def _sector_w(P, conj_abs=False):
    D = P.shape[-1]
    Wm = np.zeros((D, D), dtype=float if conj_abs else complex)
    for m in range(2):
        for mp in range(2):
            t1 = (P[1, m] @ P[0, mp]) * (P[0, m] @ P[1, mp]).conj()
            t2 = (P[0, m] @ P[1, mp]) * (P[1, m] @ P[0, mp]).conj()
            if conj_abs:
                Wm += abs(t1) + abs(t2)
            else:
                Wm += 1j * (t1 - t2)
    return Wm


def sector_bands(ctx, norm="unit", scale=1.0):
    """Tridiagonal bands (lower, diag, upper) of T, V and W on |k,k>>."""
    B = lax_blocks(ctx, norm, scale)
    a0 = np.diag(B[0, 0])
    a1 = np.diag(B[1, 1])
    up = abs(np.diag(B[1, 0], 1)) ** 2   # from sin(g) s+
    lo = abs(np.diag(B[0, 1], -1)) ** 2  # from sin(g) s-
    T = (lo, abs(a0) ** 2 + abs(a1) ** 2, up)
    V = (-lo, abs(a0) ** 2 - abs(a1) ** 2, up)
    # W restricted to the sector: entries X_kk' conj(Y_kk')
    Wm = _sector_w(_P(B))
    W = (np.diag(Wm, -1), np.diag(Wm), np.diag(Wm, 1))
    return T, V, W


def _band_matrix(band):
    lo, d, up = band
    return np.diag(d) + np.diag(up, 1) + np.diag(lo, -1)


def sector_continuity_residual(ctx, const=None, norm="unit", margin=2):
    """Entrywise relative residual of W = c T on the sector block k, k' <= D-1-margin.

    Each entry |W - c T| is divided by the sum of the magnitudes of the terms
    that build it, so cancellation among exponentially large entries
    (|Delta| > 1) is measured on its own scale.  ``const`` defaults to the
    continuity constant c = (eps/2)|<0|L[1,1]|0>|^2; pass
    quoted_continuity_constant(ctx) to test the quoted form -2i[s]_q.
    """
    T, _, W = sector_bands(ctx, norm)
    c = continuity_constant(ctx, norm) if const is None else const
    Tm = _band_matrix(T)
    X = _band_matrix(W) - c * Tm
    scale = _sector_w(_P(lax_blocks(ctx, norm)), conj_abs=True) + abs(c) * abs(Tm)
    k = ctx.cutoff - margin
    X, scale = abs(X[:k, :k]), scale[:k, :k]
    nz = scale > 0
    return float((X[nz] / scale[nz]).max()) if nz.any() else 0.0


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def log_contract(left, band, right):
    """log of sum_{k,k'} exp(left_k) B_{kk'} exp(right_k') for tridiagonal B.

    Returns (log|value|, phase) with phase a unit complex number (or sign).
    """
    lo, d, up = band
    vals = [
        (left + right, d),
        (left[:-1] + right[1:], up),
        (left[1:] + right[:-1], lo),
    ]
    logs = []
    coefs = []
    for lg, c in vals:
        c = np.asarray(c)
        nz = c != 0
        logs.append(lg[nz] + np.log(abs(c[nz])))
        coefs.append(c[nz] / abs(c[nz]))
    logs = np.concatenate(logs)
    coefs = np.concatenate(coefs)
    fin = np.isfinite(logs)
    if not fin.any():
        return -np.inf, 1.0
    logs, coefs = logs[fin], coefs[fin]
    m = logs.max()
    total = np.sum(coefs * np.exp(logs - m))
    if total == 0:
        return -np.inf, 1.0
    return m + np.log(abs(total)), total / abs(total)


class NessModel:
    """n-site steady state with cached log-domain left/right vectors.

    Immutable after construction; all contractions are exact once
    ctx.cutoff >= default_cutoff(n).
    """

    def __init__(self, ctx, n, norm="unit", scale=1.0):
        if n < 1:
            raise ValidationError("n must be >= 1")
        self.ctx = ctx
        self.n = int(n)
        self.norm = norm
        self.scale = scale
        with np.errstate(over="ignore", invalid="ignore"):
            self.T, self.V, self.W = sector_bands(ctx, norm, scale)
        if not all(np.all(np.isfinite(x)) for band in (self.T, self.V) for x in band):
            raise ValidationError("transfer-matrix entries overflow double precision; "
                                  "reduce n (|Delta| > 1 grows like exp(2 arcosh|Delta| k))")
        lo, d, up = self.T
        self.left = kernels.propagate_log(_log(d), _log(up), _log(lo), self.n, True)
        self.right = kernels.propagate_log(_log(d), _log(up), _log(lo), self.n, False)
        self.zcache = np.array([self.log_partition(k) for k in range(self.n + 1)])
        if not np.all(np.isfinite(self.zcache)):
            raise ZeroPartition("mpo-ness", "finite nonzero partition function",
                                float("inf"), 0.0)
        self._c = continuity_constant(ctx, norm, scale)

    @property
    def eps(self):
        return self.ctx.eps.real

    def log_partition(self, k):
        a = k // 2
        D = self.ctx.cutoff
        ident = (np.zeros(D - 1), np.ones(D), np.zeros(D - 1))
        return log_contract(self.left[a], ident, self.right[k - a])[0]

    def _insert(self, band, j_left, j_right):
        lz, ph = log_contract(self.left[j_left], band, self.right[j_right])
        return ph * np.exp(lz - self.zcache[self.n])

    def profile(self, j):
        """<sigma^z_j> = <<0|T^(j-1) V T^(n-j)|0>> / Z_n (complex, imaginary part diagnostic)."""
        if not 1 <= j <= self.n:
            raise ValidationError(f"site {j} outside 1..{self.n}")
        return self._insert(self.V, j - 1, self.n - j)

    def profiles(self):
        return np.array([self.profile(j) for j in range(1, self.n + 1)])

    def z_ratio(self):
        """Z_{n-1} / Z_n."""
        return float(np.exp(self.zcache[self.n - 1] - self.zcache[self.n]))

    def current(self):
        """Current from the partition-function ratio, J = c Z_{n-1}/Z_n."""
        if self.n < 2:
            raise ValidationError("current needs n >= 2")
        return self._c * self.z_ratio()

    def bond_current(self, k):
        """<j_k> = <<0|T^(k-1) W T^(n-k-1)|0>> / Z_n evaluated directly."""
        if not 1 <= k <= self.n - 1:
            raise ValidationError(f"bond {k} outside 1..{self.n - 1}")
        return self._insert(self.W, k - 1, self.n - k - 1)

    def log_current(self):
        return np.log(self._c) + self.zcache[self.n - 1] - self.zcache[self.n]


def ness_model(delta, eps, n, cutoff=None, norm="unit"):
    ctx = QContext.solved(delta, eps, cutoff or default_cutoff(n))
    return NessModel(ctx, n, norm)


def partition_function(model, k):
    if not 0 <= k <= model.n:
        raise ValidationError("k outside 0..n")
    return float(np.exp(model.zcache[k]))


def spin_profile(model, j, imag_tol=1e-9):
    val = model.profile(j)
    if abs(val.imag) > imag_tol:
        raise ValidationError(f"profile imaginary residue {abs(val.imag):.2e}")
    return float(val.real)


def current(model):
    return float(model.current())


def quoted_current(model):
    """Re(-2i [s]_q Z_{n-1}/Z_n) in the unit normalization, for comparison."""
    return float((quoted_continuity_constant(model.ctx) * model.z_ratio()).real)


# ---------------------------------------------------------------- asymptotics

def half_closed_current(eps):
    """Quoted thermodynamic-limit current at Delta = 1/2."""
    e2 = eps * eps
    return (np.sqrt(81 + 74 * e2 + 9 * e2 * e2) - 7 - 3 * e2) * eps / (4 * (1 + e2))


def decay_rate_easy_axis(delta, eps, n_range):
    """Least-squares slope of log J versus n (compare with -arcosh(delta))."""
    if delta <= 1:
        raise ValidationError("decay fit needs delta > 1")
    ns = np.asarray(list(n_range), dtype=int)
    if len(ns) < 10:
        raise ValidationError("n_range must span at least 10 sizes")
    logs = np.array([ness_model(delta, eps, int(n)).log_current() for n in ns])
    if not np.all(np.isfinite(logs)):
        raise FitFailure("mpo-ness", "finite log current", float("inf"), 0.0)
    slope, intercept = np.polyfit(ns, logs, 1)
    return float(slope), float(intercept), logs


def ratio_quadratic_coefficient(eps, n_values, delta=1.0):
    """Fit Z_n/Z_{n-1} (boundary normalization) to A n^2 + B n + C; return A."""
    ns = np.asarray(list(n_values), dtype=float)
    nmax = int(ns.max())
    ctx = QContext.solved(delta, eps, default_cutoff(nmax))
    m = NessModel(ctx, nmax, "boundary")
    r = np.array([np.exp(m.zcache[int(n)] - m.zcache[int(n) - 1]) for n in ns])
    A, B, C = np.polyfit(ns, r, 2)
    return float(A), r


# ---------------------------------------------------------------- isotropic identities

def _isotropic_family(ctx, norm):
    if not is_isotropic(ctx.gamma) and abs(ctx.delta - 1.0) > 1e-12:
        raise ValidationError("identity is stated for the isotropic point")
    return build_transfer(ctx, norm, check=False)


def vt_algebra_residual(ctx, s=None):
    """max |[T,[T,V]] + 2{T,V} - 8 s^2 V| on the interior block (unit normalization).

    ``s`` in the formula defaults to ctx.s; passing a different value is the
    negative control.
    """
    f = _isotropic_family(ctx, "unit")
    s = ctx.s if s is None else s
    T, V = f.T, f.V
    TV = T @ V - V @ T
    R = T @ TV - TV @ T + 2 * (T @ V + V @ T) - 8 * s ** 2 * V
    m = _interior_mask(ctx.cutoff, 3)
    return float(abs(R[np.ix_(m, m)]).max())


def boundary_residual(ctx, t_factor=1.0):
    """Norms of <<0|(T-V) - <<0| and (T+V)|0>> - |0>> in the boundary normalization."""
    f = build_transfer(ctx, "boundary", check=False)
    T = t_factor * f.T
    r1 = np.linalg.norm(f.bra0 @ (T - f.V) - f.bra0)
    r2 = np.linalg.norm((T + f.V) @ f.ket0 - f.ket0)
    return float(r1), float(r2)
