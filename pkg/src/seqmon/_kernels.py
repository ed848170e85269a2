"""Compiled inner loops.

Per component the detector only needs the running prefix sum and the running
min/max of past prefix means ``U_j = S_{m+j} / (m+j)``, because

    (k-j) * (mean(X[m+j+1 .. m+k]) - mean(X[1 .. m+j]))
        = (m+k) * (S_{m+k} / (m+k) - U_j).

So the maximum over ``j < k`` is ``(m+k) * max(Sbar - min U, max U - Sbar)``
and every tick costs O(1) per active component.
"""

from numba import njit


@njit(cache=True, nogil=True)
def advance(rows, start, shift, prefix, umin, umax, inv_scale, idx, n_active, m,
            k, n_mon, threshold, stats, max_stats):
    """Consume rows from ``start`` until a step exceeds ``threshold``.

    Observations enter as ``x - shift`` (the statistic is shift invariant;
    anchoring at a stable value keeps constant streams exactly at zero).
    ``k`` is the number of monitoring steps already taken.  ``stats`` receives
    the weighted statistic of every active component at the last step;
    ``max_stats[r + 1]`` (if non-empty) the maximum over components after
    consuming ``rows[r]``.
    Returns the number of rows consumed.
    """
    n = rows.shape[0]
    r = start
    while r < n and k < n_mon:
        x = rows[r]
        n0 = m + k
        n1 = n0 + 1
        w = 1.0 / (1.0 + (k + 1) / m)
        best = 0.0
        for a in range(n_active):
            h = idx[a]
            u = prefix[h] / n0
            if u < umin[h]:
                umin[h] = u
            if u > umax[h]:
                umax[h] = u
            s = prefix[h] + (x[h] - shift[h])
            prefix[h] = s
            mean = s / n1
            lo = mean - umin[h]
            hi = umax[h] - mean
            dev = lo if lo > hi else hi
            stat = w * n1 * dev * inv_scale[h]
            stats[h] = stat
            if stat > best:
                best = stat
        k += 1
        r += 1
        if max_stats.shape[0] > 0:
            max_stats[r] = best
        if best > threshold:
            break
    return r - start


@njit(cache=True, nogil=True)
def accumulate(rows, prefix):
    for r in range(rows.shape[0]):
        for h in range(rows.shape[1]):
            prefix[h] += rows[r, h]


@njit(cache=True, nogil=True)
def fold_max(rows, prefix, umin, umax, m, k, inv_scale):
    """Fold monitoring rows into the state of every component; return the
    largest weighted statistic seen.  Used by the bootstrap."""
    d = rows.shape[1]
    best = 0.0
    for r in range(rows.shape[0]):
        n0 = m + k
        n1 = n0 + 1
        w = 1.0 / (1.0 + (k + 1) / m)
        c = w * n1 * inv_scale
        for h in range(d):
            u = prefix[h] / n0
            if u < umin[h]:
                umin[h] = u
            if u > umax[h]:
                umax[h] = u
            s = prefix[h] + rows[r, h]
            prefix[h] = s
            mean = s / n1
            lo = mean - umin[h]
            hi = umax[h] - mean
            dev = lo if lo > hi else hi
            stat = c * dev
            if stat > best:
                best = stat
        k += 1
    return best


@njit(cache=True)
def brute_stat(x, m, k):
    """Literal ``max_j (k-j) |mean(x[m+j:m+k]) - mean(x[:m+j])|``, O(k (m+k))."""
    best = 0.0
    for j in range(k):
        before = 0.0
        for i in range(m + j):
            before += x[i]
        after = 0.0
        for i in range(m + j, m + k):
            after += x[i]
        val = (k - j) * abs(after / (k - j) - before / (m + j))
        if val > best:
            best = val
    return best
