"""Compiled inner loops for the sequential HMM recursions.

Everything here is deliberately dumb: plain loops over (bins, states),
no allocation inside the time loop, and error signalling via sentinel
return values because jitted code cannot raise with runtime data.
Callers in :mod:`telegraph_hmm.core` translate sentinels into proper
exceptions.
"""

import numpy as np
from numba import njit

# Sentinel meaning "no zero-likelihood bin was hit".
NO_FAILURE = -1


@njit(cache=True)
def forward_scaled(initial, transition, lik):
    """Scaled forward recursion.

    Returns (alpha, scale, fail_bin) where alpha[t] is the filtered
    distribution after observing bins 0..t, scale[t] is the one-step
    normalizer P(s_t | s_0..t-1), and fail_bin is the 0-based index of
    the first bin whose incremental likelihood vanished (NO_FAILURE if
    the pass completed).
    """
    n, k = lik.shape
    alpha = np.zeros((n, k))
    scale = np.zeros(n)

    tot = 0.0
    for i in range(k):
        v = initial[i] * lik[0, i]
        alpha[0, i] = v
        tot += v
    if tot <= 0.0:
        return alpha, scale, 0
    scale[0] = tot
    for i in range(k):
        alpha[0, i] /= tot

    for t in range(1, n):
        tot = 0.0
        for j in range(k):
            acc = 0.0
            for i in range(k):
                acc += alpha[t - 1, i] * transition[i, j]
            v = acc * lik[t, j]
            alpha[t, j] = v
            tot += v
        if tot <= 0.0:
            return alpha, scale, t
        scale[t] = tot
        for j in range(k):
            alpha[t, j] /= tot

    return alpha, scale, NO_FAILURE


@njit(cache=True)
def backward_scaled(transition, lik, scale):
    """Backward recursion scaled by the forward normalizers.

    beta[t] here is the raw backward variable divided by
    prod(scale[t+1:]), so alpha[t] * beta[t] sums to one without any
    further normalization.
    """
    n, k = lik.shape
    beta = np.zeros((n, k))
    for i in range(k):
        beta[n - 1, i] = 1.0
    for t in range(n - 2, -1, -1):
        c = scale[t + 1]
        for i in range(k):
            acc = 0.0
            for j in range(k):
                acc += transition[i, j] * lik[t + 1, j] * beta[t + 1, j]
            beta[t, i] = acc / c
    return beta


@njit(cache=True)
def em_stats(initial, transition, lik, counts, n_symbols):
    """One E-step: forward, rolling backward, sufficient statistics.

    Accumulates everything Baum-Welch needs without storing the pairwise
    posterior tensor:

      loglik     total log P(counts | model)
      gamma1     smoothed distribution at the first bin
      xi_sum     sum over t of smoothed pair probabilities (k, k)
      occ_head   sum over t = 0..n-2 of smoothed occupancy (k,)
      occ_all    sum over all t of smoothed occupancy (k,)
      emis_num   indicator-weighted count histogram per state (k, n_symbols)
      fail_bin   first zero-likelihood bin, or NO_FAILURE
    """
    n, k = lik.shape
    gamma1 = np.zeros(k)
    xi_sum = np.zeros((k, k))
    occ_head = np.zeros(k)
    occ_all = np.zeros(k)
    emis_num = np.zeros((k, n_symbols))

    alpha, scale, fail = forward_scaled(initial, transition, lik)
    if fail != NO_FAILURE:
        return 0.0, gamma1, xi_sum, occ_head, occ_all, emis_num, fail

    loglik = 0.0
    for t in range(n):
        loglik += np.log(scale[t])

    # Last bin: scaled beta is one, smoothed == filtered.
    beta_next = np.ones(k)
    s_last = counts[n - 1]
    for i in range(k):
        g = alpha[n - 1, i]
        occ_all[i] += g
        emis_num[i, s_last] += g
    if n == 1:
        for i in range(k):
            gamma1[i] = alpha[0, i]
        return loglik, gamma1, xi_sum, occ_head, occ_all, emis_num, NO_FAILURE

    beta_t = np.zeros(k)
    for t in range(n - 2, -1, -1):
        c = scale[t + 1]
        s_t = counts[t]
        for i in range(k):
            acc = 0.0
            for j in range(k):
                w = transition[i, j] * lik[t + 1, j] * beta_next[j]
                acc += w
                xi_sum[i, j] += alpha[t, i] * w / c
            beta_t[i] = acc / c
        for i in range(k):
            g = alpha[t, i] * beta_t[i]
            occ_head[i] += g
            occ_all[i] += g
            emis_num[i, s_t] += g
        for i in range(k):
            beta_next[i] = beta_t[i]

    for i in range(k):
        gamma1[i] = alpha[0, i] * beta_next[i]

    return loglik, gamma1, xi_sum, occ_head, occ_all, emis_num, NO_FAILURE


@njit(cache=True)
def sample_path(initial_cdf, transition_cdf, draws):
    """Draw a state path from cumulative initial/transition tables.

    draws is a vector of uniforms, one per bin; inversion is a linear
    scan because the state count is tiny.
    """
    n = draws.shape[0]
    k = initial_cdf.shape[0]
    states = np.zeros(n, dtype=np.int64)

    u = draws[0]
    s = k - 1
    for i in range(k):
        if u < initial_cdf[i]:
            s = i
            break
    states[0] = s

    for t in range(1, n):
        u = draws[t]
        row = transition_cdf[s]
        s = k - 1
        for j in range(k):
            if u < row[j]:
                s = j
                break
        states[t] = s

    return states
