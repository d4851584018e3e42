"""Full counting statistics of the boundary spin current.

Counting convention: each jump carries exp(-i chi * flow), where flow = +1 for
jumps that move magnetization from the left bath towards the right one
(s+ on site 1, s- on site n) and -1 for the reverse ones.  With J = N/(2t),
the m-th cumulant is

    <J^m>_c = (1/2) d^m lambda / d(-i chi)^m  at chi = 0,

which gives lambda_1 = -1 + cos chi - i mu sin chi for symmetric driving and
the cumulants eps mu/2 (odd) and eps/2 (even) at leading order.

All tilted generators are handled on the zero magnetization-difference sector
(dimension C(2n, n)), which contains the leading eigenvector.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from . import oracle
from .errors import (BranchAmbiguity, GapCollapse, IllConditionedFit, NoSolution,
                     StencilTooCoarse, UnlabeledJump, ValidationError)
from .qlax import QContext, build_lax, gamma_from_delta
from .oracle import SIGMA_Z, site_op


@dataclass(frozen=True)
class DrivingRates:
    a: float
    b: float
    c: float
    d: float
    eps: float = 0.01
    mu: float = None

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValidationError("rates must be nonnegative")

    @classmethod
    def symmetric(cls, mu, eps=0.01):
        a, b, c, d = oracle.symmetric_rates(mu)
        return cls(a, b, c, d, eps, mu)

    @property
    def tuple(self):
        return (self.a, self.b, self.c, self.d)


def fcs_model(n, delta, rates, eps=None, h=0.0):
    eps = rates.eps if eps is None else eps
    return oracle.driven_model(n, delta, rates.tuple, eps, h)


# ---------------------------------------------------------------- tilted generator

def _flows(model):
    flows = []
    for jump in model.jumps:
        if jump.flow not in (1, -1):
            raise UnlabeledJump("jump without a flow label")
        flows.append(jump.flow)
    return flows


def tilted_parts(model):
    """Sector blocks (untilted generator, [jump terms], flows), cached on the model."""
    cached = getattr(model, "_tilt_parts", None)
    if cached is not None:
        return cached
    flows = _flows(model)
    idx = oracle.sector_indices(model.n, 0)
    full = oracle.liouvillean_matrix(model.hamiltonian, model.jumps)
    parts = []
    for jump in model.jumps:
        A = sparse.csr_matrix(jump.op)
        J = jump.rate * sparse.kron(A, A.conj()).tocsr()
        parts.append(J[idx][:, idx].toarray())
    base = full[idx][:, idx].toarray() - sum(parts)
    model._tilt_parts = (base, parts, flows)
    return model._tilt_parts


def build_tilted(model, chi, sector=True):
    """Counting-field generator; dense on the zero sector unless sector=False."""
    if not sector:
        weights = [np.exp(-1j * chi * f) for f in _flows(model)]
        L = oracle.liouvillean_matrix(model.hamiltonian, model.jumps, weights)
        return oracle.Superoperator(L, model.n)
    base, parts, flows = tilted_parts(model)
    out = base.astype(complex)
    for J, f in zip(parts, flows):
        out += np.exp(-1j * chi * f) * J
    return out


def leading_eigenvalue(A, gap_tol=1e-10):
    """Eigenvalue of maximal real part (no tracking)."""
    w = np.linalg.eigvals(A)
    order = np.argsort(-w.real)
    if len(w) > 1 and w[order[0]].real - w[order[1]].real < gap_tol \
            and abs(w[order[0]] - w[order[1]]) > gap_tol:
        raise GapCollapse("fcs-engine", "leading eigenvalue gap",
                          w[order[0]].real - w[order[1]].real, gap_tol)
    return complex(w[order[0]])


def _pick(w, v, ref_vec):
    ov = abs(ref_vec.conj() @ v) / np.linalg.norm(v, axis=0)
    k = int(np.argmax(ov))
    return k


def track_lambda(model, chis, max_step=0.02):
    """lambda(chi) on an arbitrary grid, continued from chi = 0 by eigenvector overlap.

    Points are reached along a path from 0 with steps <= max_step, so branch
    swaps cannot happen through large jumps in chi.
    """
    chis = np.asarray(chis, dtype=float)
    A0 = build_tilted(model, 0.0)
    w, v = np.linalg.eig(A0)
    k0 = int(np.argmin(abs(w)))
    out = np.empty(len(chis), dtype=complex)
    for sign in (1, -1):
        sel = np.flatnonzero(chis * sign >= 0)
        if len(sel) == 0:
            continue
        targets = sorted(set(abs(chis[sel])))
        path = [0.0]
        for t in targets:
            while t - path[-1] > max_step:
                path.append(path[-1] + max_step)
            if t > path[-1]:
                path.append(t)
        vals = {0.0: w[k0]}
        ref = v[:, k0] / np.linalg.norm(v[:, k0])
        for x in path[1:]:
            wx, vx = np.linalg.eig(build_tilted(model, sign * x))
            k = _pick(wx, vx, ref)
            ref = vx[:, k] / np.linalg.norm(vx[:, k])
            vals[x] = wx[k]
        for i in sel:
            out[i] = vals[abs(chis[i])]
    return out


@dataclass
class TiltedSpectrum:
    chi_grid: np.ndarray
    lambda_values: np.ndarray
    cumulants: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    order: int = 0


def lambda_scan(model, chis, max_step=0.02):
    return TiltedSpectrum(np.asarray(chis, float), track_lambda(model, chis, max_step))


# ---------------------------------------------------------------- cumulants

def _fd_weights(m, p):
    """Central finite-difference weights for the m-th derivative on points -p..p."""
    x = np.arange(-p, p + 1, dtype=float)
    A = np.vander(x, increasing=True).T
    rhs = np.zeros(len(x))
    rhs[m] = _fact(m)
    return np.linalg.solve(A, rhs)


def _fact(m):
    out = 1
    for k in range(2, m + 1):
        out *= k
    return out


DEFAULT_STEPS = (0.32, 0.16, 0.08)


def cumulants_numeric(model, orders, steps=DEFAULT_STEPS, tol=None):
    """Cumulants <J^m>_c from finite differences of the tracked lambda(chi).

    For each order a central stencil of second-order accuracy is evaluated at
    the given step sizes and combined by Richardson extrapolation (h^2, h^4).
    Returns (values, error estimates); the error is the difference between
    the last two extrapolation levels.
    """
    orders = list(orders)
    pts = set()
    plan = {}
    for m in orders:
        p = (m + 1) // 2
        wts = np.array(_fd_weights(m, p))
        plan[m] = (p, wts)
        for h in steps:
            pts.update(round(k * h, 12) for k in range(-p, p + 1))
    grid = np.array(sorted(pts))
    lam = dict(zip(grid, track_lambda(model, grid)))
    values, errors = [], []
    for m in orders:
        p, wts = plan[m]
        est = []
        for h in steps:
            f = np.array([lam[round(k * h, 12)] for k in range(-p, p + 1)])
            est.append(wts @ f / h ** m)
        # Richardson on successive halvings, removing h^2 then h^4
        level = est
        table = [level]
        for j in (1, 2):
            if len(level) < 2:
                break
            r = 2.0 ** (2 * j)
            level = [(r * level[i + 1] - level[i]) / (r - 1) for i in range(len(level) - 1)]
            table.append(level)
        best = table[-1][-1]
        err = abs(table[-1][-1] - table[-2][-1])
        # d/d(-i chi) = i d/d chi
        val = 0.5 * (1j ** m) * best
        values.append(val.real)
        errors.append(0.5 * err)
        if tol is not None and 0.5 * err > tol * max(abs(val), 1e-300):
            raise StencilTooCoarse("fcs-engine", f"Richardson agreement (order {m})",
                                   0.5 * err / abs(val), tol)
    return np.array(values), np.array(errors)


# ---------------------------------------------------------------- leading order

def _continue_root(roots_at, chi, start, step=0.005):
    """Follow a root of an algebraic equation in chi from its value at chi = 0.

    At each step the root closest to a linear prediction from the two previous
    points is taken, which also carries the root through double zeros on the
    real axis (where a sign flip is the analytic continuation).
    """
    chi = float(chi)
    nsteps = max(2, int(np.ceil(abs(chi) / step)))
    xs = np.linspace(0.0, chi, nsteps + 1)
    prev = cur = complex(start)
    for i, x in enumerate(xs[1:]):
        pred = cur if i == 0 else 2 * cur - prev
        roots = np.atleast_1d(roots_at(x))
        dist = abs(roots - pred)
        order = np.argsort(dist)
        if len(roots) > 1:
            gap = dist[order[1]] - dist[order[0]]
            if gap < 1e-12 and abs(roots[order[0]] - roots[order[1]]) > 1e-9:
                raise BranchAmbiguity("fcs-engine", "root continuation in chi", gap, 1e-12)
        prev, cur = cur, complex(roots[order[0]])
    return cur


def _continuous_sqrt(fz, chi):
    """sqrt(fz(chi)) continued from the principal root at chi = 0."""
    def roots(x):
        r = np.sqrt(complex(fz(x)))
        return np.array([r, -r])
    return _continue_root(roots, chi, np.sqrt(complex(fz(0.0))))


def _vectorize(f):
    def g(chi, *args, **kw):
        if np.ndim(chi):
            return np.array([f(float(x), *args, **kw) for x in np.ravel(chi)]).reshape(np.shape(chi))
        return f(float(chi), *args, **kw)
    g.__doc__ = f.__doc__
    g.__name__ = f.__name__
    return g


@_vectorize
def lambda1_closed(chi, rates):
    """Leading-order cumulant generating function for arbitrary boundary rates.

    lambda_1 = (sqrt(S^2 + 4[(e^{-2i chi}-1) ad + (e^{2i chi}-1) bc]) - S)/2 with
    S = a + b + c + d, the root continued from chi = 0.  It follows from the
    solvability of the first-order equation projected on 1 and M.
    """
    a, b, c, d = rates.tuple
    S = a + b + c + d
    fz = lambda x: S * S + 4 * ((np.exp(-2j * x) - 1) * a * d + (np.exp(2j * x) - 1) * b * c)
    return (_continuous_sqrt(fz, chi) - S) / 2


@_vectorize
def lambda1_quoted(chi, rates):
    """The quoted form 2 sqrt(1 + (e^{-2i chi}-1) ad + (e^{2i chi}-1) bc) - 2."""
    a, b, c, d = rates.tuple
    fz = lambda x: 1 + (np.exp(-2j * x) - 1) * a * d + (np.exp(2j * x) - 1) * b * c
    return 2 * _continuous_sqrt(fz, chi) - 2


def lambda1_symmetric(chi, mu):
    return -1 + np.cos(chi) - 1j * mu * np.sin(chi)


def _site_terms(chi, rates, nu):
    a, b, c, d = rates.tuple
    x, y = np.exp(-1j * chi), np.exp(1j * chi)
    p, q = (1 + nu) / 2, (1 - nu) / 2
    t = (a * (x - 1) + c * (y - 1)) * q + (b * (y - 1) + d * (x - 1)) * p
    m = (a * (x + 1) + c * (y + 1)) * q - (b * (y + 1) + d * (x + 1)) * p
    return t, m


def nu_at_zero(rates):
    a, b, c, d = rates.tuple
    S = a + b + c + d
    return (a + c - b - d) / S if S else 0.0


@_vectorize
def nu_closed(chi, rates):
    """Polarization nu(chi) of the product-form zeroth-order state.

    Solves nu * lambda_1 = tr(M D rho0) together with lambda_1 = tr(D rho0);
    this is a quadratic in nu whose root is continued from
    nu(0) = (a + c - b - d)/S.
    """
    a, b, c, d = rates.tuple

    def coeffs(x):
        # nu * t(nu) - m(nu) = 0, with t, m affine in nu
        t0, m0 = _site_terms(x, rates, 0.0)
        t1, m1 = _site_terms(x, rates, 1.0)
        tl, ml = t1 - t0, m1 - m0
        return np.array([tl, t0 - ml, -m0])

    def roots(x):
        cf = coeffs(x)
        if abs(cf[0]) < 1e-14:
            return np.array([-cf[2] / cf[1]]) if abs(cf[1]) > 1e-14 else np.array([0.0])
        return np.roots(cf)

    return _continue_root(roots, chi, nu_at_zero(rates))


def lambda1_from_nu(chi, rates):
    return _site_terms(chi, rates, nu_closed(chi, rates))[0]


@_vectorize
def nu_quoted(chi, rates):
    """The quoted expression for nu built on the quoted lambda_1."""
    a, b, c, d = rates.tuple
    x, y = np.exp(-1j * chi), np.exp(1j * chi)
    num = lambda1_quoted(chi, rates) - (x - 1) * (a + d) + (y - 1) * (b + c)
    den = (x - 1) * (a - d) + (y - 1) * (b - c)
    return num / den


def zeroth_order_state(rates, chi, n):
    """2^{-n} prod_j (1 + nu sigma^z_j)."""
    nu = nu_closed(chi, rates)
    site = np.diag([(1 + nu) / 2, (1 - nu) / 2])
    out = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        out = np.kron(out, site)
    return out


def first_cumulant_closed(rates):
    """eps (ad - bc)/S, the first cumulant implied by lambda1_closed."""
    a, b, c, d = rates.tuple
    return rates.eps * (a * d - b * c) / (a + b + c + d)


def first_cumulant_quoted(rates):
    a, b, c, d = rates.tuple
    return rates.eps / 2 * (a * d - b * c)


# ---------------------------------------------------------------- Z operator

@dataclass
class ZOperator:
    matrix: np.ndarray
    residual: float
    gauge: str


class _AdH:
    """ad H = [H, .] in the eigenbasis of H, with kernel and pseudo-inverse."""

    def __init__(self, H, tol=1e-9):
        self.E, self.U = np.linalg.eigh(H)
        diff = self.E[:, None] - self.E[None, :]
        self.ker = abs(diff) < tol
        self.inv = np.where(self.ker, 0.0, 1.0 / np.where(self.ker, 1.0, diff))

    def to_eig(self, X):
        return self.U.conj().T @ X @ self.U

    def from_eig(self, X):
        return self.U @ X @ self.U.conj().T

    def solve(self, B, tol=1e-9):
        """Minimal-norm X with [H, X] = B; NoSolution if B has a kernel component."""
        Be = self.to_eig(B)
        obstruction = abs(Be[self.ker]).max() if self.ker.any() else 0.0
        if obstruction > tol * max(1.0, abs(Be).max()):
            raise NoSolution("fcs-engine", "[H, X] = B solvable", obstruction, tol)
        return self.from_eig(Be * self.inv)

    def kernel_part(self, X):
        return self.from_eig(np.where(self.ker, self.to_eig(X), 0.0))


def boundary_difference(n):
    return site_op(SIGMA_Z, 1, n) - site_op(SIGMA_Z, n, n)


def _z_residual(H, Z, n):
    return float(abs(H @ Z - Z @ H - boundary_difference(n)).max())


def z_min_norm(n, delta, h=0.0):
    H = oracle.build_staggered(n, delta, h) if h else oracle.build_xxz(n, delta)
    Z = _AdH(H).solve(boundary_difference(n).astype(complex))
    return ZOperator(Z, _z_residual(H, Z, n), "min-norm")


def _dS_ds(n, gamma, phi):
    """d/ds S at s = 0 for the raw Lax operator, via a block-upper-triangular doubling."""
    D = n + 2
    ctx = QContext(float(np.cos(gamma).real), gamma, 0.0, phi, D)
    L = build_lax(ctx).blocks
    k = np.arange(D)
    dL = np.zeros_like(L)
    dL[0, 0] = np.diag(gamma * np.cos(phi + gamma * (0.0 - k)))
    dL[1, 1] = np.diag(-gamma * np.cos(phi - gamma * (0.0 - k)))
    dL[0, 1] = np.diag(2 * gamma * np.cos(gamma * (0.0 - k[:-1])), -1)
    ext = np.zeros((2, 2, 2 * D, 2 * D), dtype=complex)
    ext[:, :, :D, :D] = L
    ext[:, :, D:, D:] = L
    ext[:, :, :D, D:] = dL
    P = ext.transpose(1, 0, 2, 3)
    R = np.zeros((1, 1, 2 * D), dtype=complex)
    R[0, 0, 0] = 1.0
    for _ in range(n):
        R = np.einsum("IJa,ijab->IiJjb", R, P)
        m = R.shape[0] * 2
        R = R.reshape(m, m, 2 * D)
    return R[:, :, D]


def z_from_lax(n, delta):
    """Z from the spin derivative of the Lax product at phi = pi/2.

    dS/ds|_{s=0} = -2 gamma sin(gamma) Z in the steady-state orientation.  The
    isotropic point is reached by Richardson extrapolation in gamma.
    """
    H = oracle.build_xxz(n, delta)
    phi = np.pi / 2
    if abs(delta - 1.0) < 1e-12:
        zs = []
        for g in (2e-3, 1e-3):
            zs.append(-_dS_ds(n, g, phi) / (2 * g * np.sin(g)))
        Z = (4 * zs[1] - zs[0]) / 3
    else:
        g = gamma_from_delta(delta)
        Z = -_dS_ds(n, g, phi) / (2 * g * np.sin(g))
    return ZOperator(Z, _z_residual(H, Z, n), "lax")


def build_z_operator(n, delta, gauge="min-norm", tol=1e-9):
    """Solve [H, Z] = sz_1 - sz_n; gauge 'min-norm' (pseudo-inverse) or 'lax'."""
    if n > 8:
        raise ValidationError("Z operator limited to n <= 8")
    z = z_min_norm(n, delta) if gauge == "min-norm" else z_from_lax(n, delta)
    if z.residual > tol:
        raise NoSolution("fcs-engine", f"[H, Z] = sz_1 - sz_n ({gauge})", z.residual, tol)
    return z


# ---------------------------------------------------------------- third order

def dissipator(chi, rates, n, ops=None):
    """Function X -> D_chi X (per unit eps) for the boundary jumps."""
    a, b, c, d = rates.tuple
    sp1, sm1 = site_op(oracle.SIGMA_P, 1, n), site_op(oracle.SIGMA_M, 1, n)
    spn, smn = site_op(oracle.SIGMA_P, n, n), site_op(oracle.SIGMA_M, n, n)
    terms = [(sp1, a, 1), (sm1, b, -1), (spn, c, -1), (smn, d, 1)]

    def apply(X):
        out = np.zeros_like(X, dtype=complex)
        for A, r, flow in terms:
            if r == 0:
                continue
            AdA = A.T @ A
            out += r * (np.exp(-1j * chi * flow) * A @ X @ A.T - 0.5 * (AdA @ X + X @ AdA))
        return out
    return apply


def _fix_kernel(adh, rho1p, lam1, Dop, N):
    """Kernel element K (tr K = 0) making P_ker[(lam1 - D)(rho1p + K)] vanish."""
    ker_idx = np.argwhere(adh.ker)
    basis = []
    for i, j in ker_idx:
        E = np.zeros((N, N), dtype=complex)
        E[i, j] = 1.0
        basis.append(adh.from_eig(E))
    cols = []
    for Bk in basis:
        Y = adh.to_eig(lam1 * Bk - Dop(Bk))[adh.ker]
        cols.append(np.concatenate([Y, [np.trace(Bk)]]))
    A = np.array(cols).T
    y0 = adh.to_eig(lam1 * rho1p - Dop(rho1p))[adh.ker]
    rhs = -np.concatenate([y0, [0.0]])
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = float(abs(A @ coef - rhs).max())
    return sum(c * Bk for c, Bk in zip(coef, basis)), resid


@dataclass
class ThirdOrder:
    lambda1: complex
    lambda3: complex
    lambda3_reduced: complex
    rho1: np.ndarray = field(repr=False)
    rho2: np.ndarray = field(repr=False)
    solvability_residual: float = 0.0


def third_order(chi, mu, n, delta, z=None, h=0.0):
    """Perturbative lambda_1 and lambda_3 for symmetric driving.

    rho = rho0 + eps rho1 + eps^2 rho2 with rho0 = 1/N and tr rho_k = 0.
    The first-order correction is -i kappa Z plus the kernel element fixed
    by the solvability of the second-order equation, so the result does not
    depend on which solution Z of [H, Z] = sz_1 - sz_n is supplied.  Then
    rho2 = adH^+ [i (lambda1 rho1 - D rho1)] and
    lambda3 = tr(D rho2) - lambda1 tr(rho2).
    """
    rates = DrivingRates.symmetric(mu)
    H = oracle.build_staggered(n, delta, h) if h else oracle.build_xxz(n, delta)
    N = 2 ** n
    adh = _AdH(H)
    Dop = dissipator(chi, rates, n)
    rho0 = np.eye(N, dtype=complex) / N
    D0 = Dop(rho0)
    lam1 = np.trace(D0)
    B = boundary_difference(n)
    src = D0 - lam1 * rho0
    kappa = np.trace(src @ B) / np.trace(B @ B)
    if abs(src - kappa * B).max() > 1e-12:
        raise ValidationError("first-order source is not proportional to sz_1 - sz_n")
    if z is None:
        Zm = adh.solve(B.astype(complex))
    else:
        Zm = z.matrix if isinstance(z, ZOperator) else z
    # -i[H, rho1] = lam1 rho0 - D rho0, so [H, rho1] = -i kappa B
    rho1p = -1j * kappa * Zm
    rho1p = rho1p - np.trace(rho1p) / N * np.eye(N)
    K, resid = _fix_kernel(adh, rho1p, lam1, Dop, N)
    rho1 = rho1p + K
    rho2 = adh.solve(1j * (lam1 * rho1 - Dop(rho1)), tol=1e-7)
    lam3 = np.trace(Dop(rho2)) - lam1 * np.trace(rho2)
    pref = (mu - mu * np.cos(chi) + 1j * np.sin(chi)) / 2
    lam3_red = pref * np.trace(B @ rho2)
    return ThirdOrder(complex(lam1), complex(lam3), complex(lam3_red), rho1, rho2, resid)


def lambda3(chi, mu, n, delta, z=None):
    return third_order(chi, mu, n, delta, z).lambda3


def lambda3_shape(chi, mu):
    """lambda3 / f(n) for symmetric driving."""
    c1, c3 = np.cos(chi) - np.cos(3 * chi), np.sin(chi)
    s3 = np.sin(3 * chi)
    return ((1 + 3 * mu * mu) * c1 - 1j * mu * (1 + 3 * mu * mu) * c3
            + 1j * mu * (3 + mu * mu) * s3) / 128


def lambda3_closed(chi, mu, f):
    return f * lambda3_shape(chi, mu)


def f_from_lambda3(chi, mu, lam3):
    return complex(lam3 / lambda3_shape(chi, mu))


def f_from_z(z):
    """tr[(sz_1 - sz_n)[Z, Z^+]] / 2^n for a Z in the lax gauge."""
    Z = z.matrix if isinstance(z, ZOperator) else z
    n = int(round(np.log2(Z.shape[0])))
    C = Z @ Z.conj().T - Z.conj().T @ Z
    return complex(np.trace(boundary_difference(n) @ C) / 2 ** n)


def f_half_quoted(n):
    """Quoted closed form for f(n) at Delta = 1/2."""
    return (5 * (-8.0) ** n - 6 * (-5.0) ** n + 10) * 8.0 ** (1 - n) * (-1.0) ** n / 45


def f_isotropic_quoted(n):
    return n - 1.0


def lambda3_ansatz(chi, mu, n, delta, z=None):
    """The quoted second-order ansatz evaluated literally.

    2^n rho2 = c1 c21 (Z - Z^+)^2 - c1 c22 [Z, Z^+] and
    lambda3 = (-mu + mu cos chi + i sin chi) tr[(-sz_1 + sz_n) rho2].
    """
    z = z if z is not None else z_from_lax(n, delta)
    Z = z.matrix if isinstance(z, ZOperator) else z
    c1 = (-mu - mu * np.cos(chi) + 1j * np.sin(chi)) / 2
    c21 = (-mu - mu * np.cos(chi) + 1j * np.sin(chi)) / 4
    c22 = (np.cos(chi) - 1j * mu * np.sin(chi)) / 2
    A = Z - Z.conj().T
    rho2 = (c1 * c21 * A @ A - c1 * c22 * (Z @ Z.conj().T - Z.conj().T @ Z)) / 2 ** n
    pref = -mu + mu * np.cos(chi) + 1j * np.sin(chi)
    return complex(pref * np.trace(-boundary_difference(n) @ rho2))


def cumulant_third_order(m, mu, f):
    """eps^3 coefficient of the m-th cumulant implied by lambda3_closed."""
    if m % 2 == 0:
        k = m // 2
        return -f * (9 ** k - 1) * (1 + 3 * mu * mu) / 256
    k = (m - 1) // 2
    return -f * mu * (9 ** (k + 1) - 1 + 3 * mu * mu * (9 ** k - 1)) / 256


def cumulant_third_order_quoted(m, mu, f):
    """The quoted cumulant corrections (eps^3 coefficients)."""
    if m % 2 == 0:
        k = m // 2
        return -f * (9 ** k - 1) * (3 * mu * mu + 1) / (128 * _fact(2 * k))
    k = (m - 1) // 2
    return -f * mu * (9 ** (k + 1) - 1 + 3 * (9 ** k - 1) * mu * mu) / (256 * _fact(2 * k + 1))


# ---------------------------------------------------------------- eps fits

@dataclass
class PerturbativeFit:
    lambda1: complex
    lambda3: complex
    lambda1_err: float
    lambda3_err: float
    residual: float
    eps_grid: np.ndarray
    lambdas: np.ndarray


def perturbative_extraction(n, delta, rates, chi, eps_grid, h=0.0, terms=3):
    """Odd-polynomial fit lambda(eps) = eps l1 + eps^3 l3 + eps^5 l5 at fixed chi."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    if len(eps_grid) < 4 or eps_grid.min() <= 0 or eps_grid.max() > 0.2 + 1e-12:
        raise ValidationError("eps grid must have >= 4 points in (0, 0.2]")
    lams = np.array([track_lambda(fcs_model(n, delta, rates, e, h), [chi])[0]
                     for e in eps_grid])
    X = np.array([eps_grid ** (2 * k + 1) for k in range(terms)]).T
    cond = np.linalg.cond(X / np.abs(X).max(axis=0))
    if cond > 1e10:
        raise IllConditionedFit("fcs-engine", "odd-polynomial fit conditioning", cond, 1e10)
    coef, *_ = np.linalg.lstsq(X, lams, rcond=None)
    res = lams - X @ coef
    dof = max(1, len(eps_grid) - terms)
    sigma2 = float(np.sum(abs(res) ** 2) / dof)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    err = np.sqrt(np.diag(cov))
    return PerturbativeFit(complex(coef[0]), complex(coef[1]), float(err[0]), float(err[1]),
                           float(abs(res).max()), eps_grid, lams)
