"""Independent reference computations used only by the tests.

Everything here is written from the textbook operator forms with dense
Kronecker superoperators and ``scipy.linalg.expm``, sharing no code with the
package beyond the system description.
"""

import numpy as np
from scipy.linalg import expm


def ops(sys):
    n = sys.dim
    out = {}
    for (m, k), g in sys.rates.items():
        L = np.zeros((n, n), dtype=complex)
        L[m, k] = np.sqrt(g)
        out[(m, k)] = L
    return out


def _lr(a, b):
    """Superoperator of X -> a X b in row-major vec form."""
    return np.kron(a, b.T)


def liouvillian_super(sys):
    n = sys.dim
    eye = np.eye(n)
    S = np.zeros((n * n, n * n), dtype=complex)
    for L in ops(sys).values():
        LdL = L.conj().T @ L
        S += _lr(L, L.conj().T) - 0.5 * _lr(LdL, eye) - 0.5 * _lr(eye, LdL)
    return S


def zakai_no_count_super(sys):
    # L*(rho) minus the jump terms, plus one trace-restoring unit per channel
    n = sys.dim
    S = liouvillian_super(sys)
    for L in ops(sys).values():
        S += -_lr(L, L.conj().T) + np.eye(n * n)
    return S


def propagate(S, rho, t):
    n = rho.shape[0]
    return (expm(S * t) @ rho.reshape(-1)).reshape(n, n)


def unconditioned(sys, rho0, t):
    return propagate(liouvillian_super(sys), rho0, t)


def zakai_along(sys, rho0, events, t):
    """Unnormalized state at ``t`` (right limit) for events ``[(tau, ch)]``."""
    S = zakai_no_count_super(sys)
    L = ops(sys)
    rho, now = np.asarray(rho0, dtype=complex), 0.0
    for tau, ch in events:
        if tau > t:
            break
        rho = propagate(S, rho, tau - now)
        rho = L[ch] @ rho @ L[ch].conj().T
        now = tau
    return propagate(S, rho, t - now)


def likelihood(sys, rho0, events, horizon):
    return np.trace(zakai_along(sys, rho0, events, horizon)).real


def random_density(rng, n, rank=None, real=False):
    rank = n if rank is None else rank
    a = rng.normal(size=(n, rank))
    if not real:
        a = a + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_isometry_ops(rng, n, m):
    """``m`` Kraus operators with sum Omega^dag Omega = 1 from a random unitary."""
    from scipy.stats import unitary_group

    u = unitary_group.rvs(n * m, random_state=rng)
    v = u[:, :n]
    return [v[k * n:(k + 1) * n] for k in range(m)]
