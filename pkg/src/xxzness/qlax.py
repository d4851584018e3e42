"""q-deformed sl2 primitives: q-numbers, truncated Verma modules and the Lax operator.

Conventions
-----------
Delta = cos(gamma), q = exp(i gamma).  For |Delta| > 1 the angle is complex,
gamma = i arcosh(Delta) (or pi - i arcosh|Delta| for Delta < -1), so every
formula keeps a single code path.  Auxiliary states |0>..|D-1> are the lowest
states of the highest-weight Verma module of spin s.

A Lax operator is stored as a (2, 2, D, D) complex array ``blocks`` where
``blocks[a, b]`` is the auxiliary matrix multiplying the physical matrix unit
|a><b| (physical index 0 = spin up).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NoConvergence, ValidationError

GAMMA_SMALL = 1e-8


def gamma_from_delta(delta):
    """Deformation angle with cos(gamma) = delta."""
    delta = float(delta)
    if abs(delta) <= 1.0:
        return complex(np.arccos(delta))
    a = np.arccosh(abs(delta))
    return complex(0.0, a) if delta > 0 else complex(np.pi, -a)


def q_number(x, gamma):
    """[x]_q = sin(gamma x)/sin(gamma); returns x itself for |gamma| < 1e-8."""
    gamma = complex(gamma)
    if abs(gamma) < GAMMA_SMALL:
        return np.asarray(x, dtype=complex) if np.ndim(x) else complex(x)
    out = np.sin(gamma * np.asarray(x, dtype=complex)) / np.sin(gamma)
    return out if np.ndim(x) else complex(out)


def is_isotropic(gamma):
    return abs(complex(gamma)) < GAMMA_SMALL


@dataclass(frozen=True)
class QContext:
    """Anisotropy, spin and spectral parameters plus auxiliary cutoff D."""

    delta: float
    gamma: complex
    s: complex
    phi: complex = 0.0
    cutoff: int = 8

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "gamma", complex(self.gamma))
        object.__setattr__(self, "s", complex(self.s))
        object.__setattr__(self, "phi", complex(self.phi))
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise ValidationError(f"cutoff must be an integer >= 2, got {self.cutoff}")
        object.__setattr__(self, "cutoff", int(self.cutoff))
        if abs(np.cos(self.gamma) - self.delta) > 1e-12:
            raise ValidationError(
                f"cos(gamma)={np.cos(self.gamma):.15g} does not match delta={self.delta}")

    @property
    def q(self):
        return np.exp(1j * self.gamma)

    @property
    def eps(self):
        """Coupling implied by the steady-state relation (complex in general)."""
        return epsilon_from_s(self.s, self.gamma)

    @classmethod
    def from_delta(cls, delta, s, phi=0.0, cutoff=8):
        return cls(delta, gamma_from_delta(delta), s, phi, cutoff)

    @classmethod
    def solved(cls, delta, eps, cutoff=8):
        """Steady-state point: phi = 0 and s solving the boundary relation for eps."""
        g = gamma_from_delta(delta)
        return cls(delta, g, s_from_epsilon(eps, g), 0.0, cutoff)

    def replace(self, **kw):
        d = dict(delta=self.delta, gamma=self.gamma, s=self.s, phi=self.phi,
                 cutoff=self.cutoff)
        d.update(kw)
        return QContext(**d)

    def to_record(self):
        return {
            "delta": self.delta,
            "gamma_re": self.gamma.real, "gamma_im": self.gamma.imag,
            "s_re": self.s.real, "s_im": self.s.imag,
            "phi_re": self.phi.real, "phi_im": self.phi.imag,
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_record(cls, rec):
        f = lambda k: float(rec.get(k, 0.0))
        return cls(f("delta"), complex(f("gamma_re"), f("gamma_im")),
                   complex(f("s_re"), f("s_im")), complex(f("phi_re"), f("phi_im")),
                   int(rec.get("cutoff", 8)))


@dataclass(frozen=True)
class VermaOps:
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray
    spin: complex
    cutoff: int


def build_verma(ctx):
    """Truncated highest-weight generators s^z, s^+, s^- of spin ctx.s."""
    D = ctx.cutoff
    if D < 2:
        raise ValidationError("cutoff must be >= 2")
    k = np.arange(D)
    sz = np.diag((ctx.s - k).astype(complex))
    sp = np.diag(q_number(k[:-1] + 1.0, ctx.gamma), 1)
    sm = np.diag(q_number(2 * ctx.s - k[:-1], ctx.gamma), -1)
    return VermaOps(sz, sp, sm, ctx.s, D)


def algebra_residual(ops, gamma):
    """Max violation of [s+,s-] = [2 s^z]_q and [s^z, s+-] = +-s+- on rows/cols 0..D-2.

    Each relation is measured relative to the largest entry of the operators
    involved (floored at 1), since q-numbers grow exponentially for |Delta| > 1.
    """
    sz, sp, sm = ops.sz, ops.sp, ops.sm
    i = slice(0, ops.cutoff - 1)
    rhs = np.diag(q_number(2 * np.diag(sz), gamma))
    r1 = sp @ sm - sm @ sp - rhs
    r2 = sz @ sp - sp @ sz - sp
    r3 = sz @ sm - sm @ sz + sm
    scale1 = max(1.0, abs(rhs[i, i]).max(), abs(sp @ sm)[i, i].max())
    scale2 = max(1.0, abs(sp).max(), abs(sm).max())
    return max(abs(r1[i, i]).max() / scale1, abs(r2[i, i]).max() / scale2,
               abs(r3[i, i]).max() / scale2)


@dataclass(frozen=True)
class LaxOperator:
    blocks: np.ndarray
    ctx: QContext = field(repr=False)

    def block(self, a, b):
        return self.blocks[a, b]

    def embed(self):
        """Dense operator on physical (x) auxiliary space."""
        D = self.blocks.shape[-1]
        return self.blocks.transpose(0, 2, 1, 3).reshape(2 * D, 2 * D)


def _diag_sin(ctx, sign, normalized):
    k = np.arange(ctx.cutoff)
    arg = ctx.s - k
    if normalized:
        if ctx.phi == 0:
            return sign * q_number(arg, ctx.gamma)
        if is_isotropic(ctx.gamma):
            raise ValidationError("normalized Lax at gamma=0 requires phi=0")
        return np.sin(ctx.phi + sign * ctx.gamma * arg) / np.sin(ctx.gamma)
    return np.sin(ctx.phi + sign * ctx.gamma * arg)


def build_lax(ctx, normalized=False):
    """Lax operator [[sin(phi+g sz), sin g s-], [sin g s+, sin(phi-g sz)]].

    With ``normalized=True`` the operator is divided by sin(gamma); at phi=0
    this has a regular gamma -> 0 limit [[sz, s-], [s+, -sz]] which is how the
    isotropic point is handled.
    """
    ops = build_verma(ctx)
    D = ctx.cutoff
    B = np.zeros((2, 2, D, D), dtype=complex)
    pref = 1.0 if normalized else np.sin(ctx.gamma)
    B[0, 0] = np.diag(_diag_sin(ctx, +1, normalized))
    B[1, 1] = np.diag(_diag_sin(ctx, -1, normalized))
    B[0, 1] = pref * ops.sm
    B[1, 0] = pref * ops.sp
    return LaxOperator(B, ctx)


def lax_phi_derivative(ctx):
    """d L / d phi: diagonal blocks cos(phi +- gamma sz), off-diagonal blocks zero."""
    D = ctx.cutoff
    arg = ctx.gamma * (ctx.s - np.arange(D))
    B = np.zeros((2, 2, D, D), dtype=complex)
    B[0, 0] = np.diag(np.cos(ctx.phi) * np.cos(arg) - np.sin(ctx.phi) * np.sin(arg))
    B[1, 1] = np.diag(np.cos(ctx.phi) * np.cos(arg) + np.sin(ctx.phi) * np.sin(arg))
    return LaxOperator(B, ctx)


def _pair(A, B):
    # (A (x)_p B) with auxiliary matrix product, on 4 physical states (x) aux
    D = A.shape[-1]
    return np.einsum("abij,cdjk->acbdik", A, B).reshape(4, 4, D, D)


def two_site_h(delta):
    sp = np.array([[0.0, 1.0], [0.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    return 2 * (np.kron(sp, sp.T) + np.kron(sp.T, sp)) + delta * np.kron(sz, sz)


def sutherland_residual(ctx, tol=None, relative=False):
    """Max |[h, L(x)L] - 2 sin g (L(x)L_phi - L_phi(x)L)| on auxiliary rows/cols 0..D-3.

    With ``relative`` the residual is divided by the largest entry of the two
    sides (floored at 1), which is the meaningful scale when |Delta| > 1 makes
    the Verma entries grow exponentially.  If ``tol`` is given a ContractViolation naming the worst element is raised
    when the residual exceeds it.
    """
    D = ctx.cutoff
    L = build_lax(ctx).blocks
    Lp = lax_phi_derivative(ctx).blocks
    h = two_site_h(ctx.delta)
    LL = _pair(L, L)
    lhs = np.einsum("ab,bcij->acij", h, LL) - np.einsum("abij,bc->acij", LL, h)
    rhs = 2 * np.sin(ctx.gamma) * (_pair(L, Lp) - _pair(Lp, L))
    r = abs(lhs - rhs)[:, :, : D - 2, : D - 2]
    if relative:
        r = r / max(1.0, abs(lhs[:, :, : D - 2, : D - 2]).max(),
                    abs(rhs[:, :, : D - 2, : D - 2]).max())
    res = float(r.max())
    if tol is not None and res > tol:
        idx = np.unravel_index(int(r.argmax()), r.shape)
        raise ContractViolation("qlax-core", "Sutherland identity", res, tol,
                                f"physical ({idx[0]},{idx[1]}), auxiliary ({idx[2]},{idx[3]})")
    return res


def epsilon_from_s(s, gamma):
    """Coupling eps = 4i cos(gamma s)/[s]_q (4i/s on the isotropic branch)."""
    s = complex(s)
    if is_isotropic(gamma):
        if s == 0:
            raise ValidationError("[s]_q = 0: pole of the eps(s) relation")
        return 4j / s
    qs = q_number(s, gamma)
    if abs(qs) < 1e-14:
        raise ValidationError("[s]_q = 0: pole of the eps(s) relation")
    return 4j * np.cos(gamma * s) / qs


def s_from_epsilon(eps, gamma, maxiter=200, tol=1e-12):
    """Invert the steady-state relation for s.

    Seeded with the closed-form inverse s0 = arctan(4i sin(g)/eps)/g (principal
    branch; 4i/eps at gamma = 0) and polished by damped Newton.
    """
    eps = complex(eps)
    gamma = complex(gamma)
    if eps == 0:
        raise ValidationError("eps must be nonzero")
    if is_isotropic(gamma):
        return 4j / eps
    s = np.arctan(4j * np.sin(gamma) / eps) / gamma
    if not np.isfinite(s):
        s = 4j / eps
    f = lambda z: epsilon_from_s(z, gamma) - eps
    r = f(s)
    for _ in range(maxiter):
        if abs(r) <= tol * max(1.0, abs(eps)):
            return complex(s)
        # d eps/ds = -4i g sin(g) / sin^2(g s)
        dr = -4j * gamma * np.sin(gamma) / np.sin(gamma * s) ** 2
        step = r / dr
        lam = 1.0
        while lam > 1e-6:
            trial = s - lam * step
            rt = f(trial)
            if np.isfinite(rt) and abs(rt) < abs(r):
                break
            lam /= 2
        s, r = trial, rt
    if abs(r) <= 1e-10:
        return complex(s)
    raise NoConvergence("qlax-core", "s_from_epsilon", abs(r), 1e-10,
                        "supply s directly")
