"""Compiled inner loops.

All randomness enters as pre-drawn uniforms so that results depend only on the
numpy Generator stream, never on numba's internal RNG.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _draw(cum, n, r):
    # first index whose cumulative weight exceeds r
    for j in range(n):
        if cum[j] > r:
            return j
    return n - 1


@njit(cache=True, nogil=True)
def init_assignments(docs, perm_ptr, perm_topics, u, z):
    for i in range(docs.shape[0]):
        d = docs[i]
        lo = perm_ptr[d]
        n = perm_ptr[d + 1] - lo
        j = int(u[i] * n)
        if j >= n:
            j = n - 1
        z[i] = perm_topics[lo + j]


@njit(cache=True, nogil=True)
def sweep(docs, langs, gwords, z, perm_ptr, perm_topics, n_dk, n_kt, n_k, alpha, beta, vbeta, u, cum):
    """One collapsed Gibbs pass over all tokens in storage order."""
    for i in range(docs.shape[0]):
        d = docs[i]
        l = langs[i]
        w = gwords[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kt[k, w] -= 1
        n_k[l, k] -= 1
        lo = perm_ptr[d]
        n = perm_ptr[d + 1] - lo
        b = beta[l]
        vb = vbeta[l]
        total = 0.0
        for j in range(n):
            kk = perm_topics[lo + j]
            total += (n_dk[d, kk] + alpha) * (n_kt[kk, w] + b) / (n_k[l, kk] + vb)
            cum[j] = total
        k = perm_topics[lo + _draw(cum, n, u[i] * total)]
        z[i] = k
        n_dk[d, k] += 1
        n_kt[k, w] += 1
        n_k[l, k] += 1


@njit(cache=True, nogil=True)
def run_chain(docs, langs, gwords, z, perm_ptr, perm_topics, n_dk, n_kt, n_k, alpha, beta, vbeta,
              uniforms, burn_in, thin, out):
    """Run uniforms.shape[0] sweeps, writing z after every thin-th post-burn-in sweep to out."""
    cum = np.empty(n_dk.shape[1], np.float64)
    row = 0
    for s in range(uniforms.shape[0]):
        sweep(docs, langs, gwords, z, perm_ptr, perm_topics, n_dk, n_kt, n_k, alpha, beta, vbeta,
              uniforms[s], cum)
        if s >= burn_in and (s - burn_in + 1) % thin == 0 and row < out.shape[0]:
            out[row, :] = z
            row += 1
    return row


@njit(cache=True, nogil=True)
def fold_in(gwords, permitted, phi, alpha, uniforms, burn_in):
    """Gibbs over one document's tokens with phi, a (K, sum V) matrix, held fixed.

    Row 0 of uniforms initialises z, rows 1.. are sweeps; theta is averaged over
    sweeps after burn_in.
    """
    K = phi.shape[0]
    n = gwords.shape[0]
    m = permitted.shape[0]
    n_dk = np.zeros(K, np.float64)
    z = np.empty(n, np.int64)
    cum = np.empty(m, np.float64)
    theta = np.zeros(K, np.float64)
    # initial assignments from the first row of uniforms
    for i in range(n):
        j = int(uniforms[0, i] * m)
        if j >= m:
            j = m - 1
        z[i] = permitted[j]
        n_dk[z[i]] += 1.0
    denom = n + alpha * m
    kept = 0
    for s in range(1, uniforms.shape[0]):
        for i in range(n):
            w = gwords[i]
            n_dk[z[i]] -= 1.0
            total = 0.0
            for j in range(m):
                kk = permitted[j]
                total += (n_dk[kk] + alpha) * phi[kk, w]
                cum[j] = total
            k = permitted[_draw(cum, m, uniforms[s, i] * total)]
            z[i] = k
            n_dk[k] += 1.0
        if s > burn_in:
            for j in range(m):
                kk = permitted[j]
                theta[kk] += (n_dk[kk] + alpha) / denom
            kept += 1
    for k in range(K):
        theta[k] /= kept
    return theta
