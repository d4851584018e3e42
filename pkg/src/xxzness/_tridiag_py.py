"""Pure-numpy fallback for the log-domain tridiagonal propagation kernel."""
import numpy as np


def propagate_log(logdiag, logupper, loglower, steps, left):
    """Log components of e_0 T^t (``left``) or T^t e_0 for t = 0..steps.

    T is tridiagonal with nonnegative entries given by their logs:
    T[k,k] = exp(logdiag[k]), T[k,k+1] = exp(logupper[k]), T[k+1,k] = exp(loglower[k]).
    Zero entries are -inf.  Each step is a per-component log-sum-exp, so the
    result keeps full relative precision however wide the dynamic range.
    """
    ld = np.asarray(logdiag, dtype=float)
    D = ld.shape[0]
    a, b = (logupper, loglower) if left else (loglower, logupper)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.full((steps + 1, D), -np.inf)
    out[0, 0] = 0.0
    terms = np.full((3, D), -np.inf)
    with np.errstate(invalid="ignore"):
        for t in range(1, steps + 1):
            v = out[t - 1]
            terms[0] = ld + v
            terms[1, 1:] = a + v[:-1]
            terms[2, :-1] = b + v[1:]
            m = terms.max(axis=0)
            fin = np.isfinite(m)
            row = np.full(D, -np.inf)
            row[fin] = m[fin] + np.log(np.exp(terms[:, fin] - m[fin]).sum(axis=0))
            out[t] = row
    return out
