"""Compiled kernels for the sparse solver.

The factorization kernel computes, at step k, row k of U and column k of
L from the not-yet-eliminated part of A (Crout ordering). Traversal of
the already-stored factors is done with the usual linked-list scheme:
each stored row of U (column of L) keeps a cursor to its first entry not
yet consumed, and rows/columns are chained under the index where their
cursor currently sits.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def csr_matvec(indptr, indices, data, x):
    n = indptr.size - 1
    out = np.zeros(n, np.float64)
    for i in range(n):
        s = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            s += data[t] * x[indices[t]]
        out[i] = s
    return out


@njit(cache=True)
def ilu_apply(l_colptr, l_rowidx, l_data, u_rowptr, u_colidx, u_data, b):
    """Solve (I + L) U x = b with L strictly lower (by columns) and U
    upper with the diagonal stored first in each row."""
    n = b.size
    y = b.copy()
    for j in range(n):
        yj = y[j]
        if yj != 0.0:
            for t in range(l_colptr[j], l_colptr[j + 1]):
                y[l_rowidx[t]] -= l_data[t] * yj
    for i in range(n - 1, -1, -1):
        s = y[i]
        for t in range(u_rowptr[i] + 1, u_rowptr[i + 1]):
            s -= u_data[t] * y[u_colidx[t]]
        y[i] = s / u_data[u_rowptr[i]]
    return y


@njit(cache=True)
def _select_largest(idx, vals, count, keep):
    """Keep the `keep` largest |vals| among the first `count` candidates,
    returned as indices sorted ascending."""
    if count <= keep:
        out = idx[:count].copy()
        out.sort()
        return out
    mags = np.empty(count, np.float64)
    for s in range(count):
        mags[s] = abs(vals[s])
    order = np.argsort(mags)
    out = np.empty(keep, np.int64)
    for s in range(keep):
        out[s] = idx[order[count - keep + s]]
    out.sort()
    return out


@njit(cache=True)
def crout_ilut(n, a_indptr, a_indices, a_data, row_norms, drop_tol, fill_limit):
    """Dual-dropping incomplete LU of a symmetric matrix in Crout order.

    Entries below drop_tol times the 2-norm of the corresponding row
    (column) of A are dropped; at most fill_limit entries are stored per
    row of U (including the diagonal) and per column of L (unit diagonal
    implicit). Returns the failing row index, or -1 on success.
    """
    u_cap = a_indptr[n] + 16 * n
    l_cap = u_cap
    u_rowptr = np.zeros(n + 1, np.int64)
    u_colidx = np.empty(u_cap, np.int64)
    u_data = np.empty(u_cap, np.float64)
    l_colptr = np.zeros(n + 1, np.int64)
    l_rowidx = np.empty(l_cap, np.int64)
    l_data = np.empty(l_cap, np.float64)

    z = np.zeros(n, np.float64)
    zmark = np.full(n, -1, np.int64)
    zidx = np.empty(n, np.int64)
    zval = np.empty(n, np.float64)
    w = np.zeros(n, np.float64)
    wmark = np.full(n, -1, np.int64)
    widx = np.empty(n, np.int64)
    wval = np.empty(n, np.float64)

    u_first = np.zeros(n, np.int64)
    u_head = np.full(n, -1, np.int64)
    u_next = np.full(n, -1, np.int64)
    l_first = np.zeros(n, np.int64)
    l_head = np.full(n, -1, np.int64)
    l_next = np.full(n, -1, np.int64)

    lbuf = np.empty(n, np.int64)
    ubuf = np.empty(n, np.int64)

    u_nnz = 0
    l_nnz = 0

    for k in range(n):
        zcnt = 0
        wcnt = 0
        for t in range(a_indptr[k], a_indptr[k + 1]):
            col = a_indices[t]
            v = a_data[t]
            if col >= k:
                z[col] = v
                zmark[col] = k
                zidx[zcnt] = col
                zcnt += 1
            if col > k:
                # column k of A equals row k for symmetric input
                w[col] = v
                wmark[col] = k
                widx[wcnt] = col
                wcnt += 1

        lcnt = 0
        i = l_head[k]
        while i != -1:
            lbuf[lcnt] = i
            lcnt += 1
            i = l_next[i]
        ucnt = 0
        i = u_head[k]
        while i != -1:
            ubuf[ucnt] = i
            ucnt += 1
            i = u_next[i]

        # z <- z - L[k, i] * U[i, k:] for stored columns i with L[k, i] != 0
        for s in range(lcnt):
            i = lbuf[s]
            lki = l_data[l_first[i]]
            for t in range(u_first[i], u_rowptr[i + 1]):
                col = u_colidx[t]
                if zmark[col] != k:
                    zmark[col] = k
                    z[col] = 0.0
                    zidx[zcnt] = col
                    zcnt += 1
                z[col] -= lki * u_data[t]

        # w <- w - U[i, k] * L[k+1:, i] for stored rows i with U[i, k] != 0
        for s in range(ucnt):
            i = ubuf[s]
            uik = u_data[u_first[i]]
            for t in range(l_first[i], l_colptr[i + 1]):
                row = l_rowidx[t]
                if row <= k:
                    continue
                if wmark[row] != k:
                    wmark[row] = k
                    w[row] = 0.0
                    widx[wcnt] = row
                    wcnt += 1
                w[row] -= uik * l_data[t]

        # advance cursors consumed at this step and rechain
        for s in range(lcnt):
            i = lbuf[s]
            l_first[i] += 1
            if l_first[i] < l_colptr[i + 1]:
                nxt = l_rowidx[l_first[i]]
                l_next[i] = l_head[nxt]
                l_head[nxt] = i
        for s in range(ucnt):
            i = ubuf[s]
            u_first[i] += 1
            if u_first[i] < u_rowptr[i + 1]:
                nxt = u_colidx[u_first[i]]
                u_next[i] = u_head[nxt]
                u_head[nxt] = i

        pivot = z[k] if zmark[k] == k else 0.0
        if not (pivot > 0.0):
            return (
                k,
                u_rowptr,
                u_colidx[:u_nnz],
                u_data[:u_nnz],
                l_colptr,
                l_rowidx[:l_nnz],
                l_data[:l_nnz],
            )

        tau = drop_tol * row_norms[k]

        ccnt = 0
        for s in range(zcnt):
            col = zidx[s]
            if col > k:
                v = z[col]
                if abs(v) >= tau and v != 0.0:
                    zidx[ccnt] = col
                    zval[ccnt] = v
                    ccnt += 1
        kept_u = _select_largest(zidx, zval, ccnt, min(fill_limit - 1, ccnt))

        ccnt = 0
        for s in range(wcnt):
            row = widx[s]
            v = w[row]
            if abs(v) >= tau and v != 0.0:
                widx[ccnt] = row
                wval[ccnt] = v
                ccnt += 1
        kept_l = _select_largest(widx, wval, ccnt, min(fill_limit, ccnt))

        need = u_nnz + kept_u.size + 1
        if need > u_cap:
            while u_cap < need:
                u_cap *= 2
            nc = np.empty(u_cap, np.int64)
            nd = np.empty(u_cap, np.float64)
            nc[:u_nnz] = u_colidx[:u_nnz]
            nd[:u_nnz] = u_data[:u_nnz]
            u_colidx, u_data = nc, nd
        need = l_nnz + kept_l.size
        if need > l_cap:
            while l_cap < need:
                l_cap *= 2
            nc = np.empty(l_cap, np.int64)
            nd = np.empty(l_cap, np.float64)
            nc[:l_nnz] = l_rowidx[:l_nnz]
            nd[:l_nnz] = l_data[:l_nnz]
            l_rowidx, l_data = nc, nd

        u_colidx[u_nnz] = k
        u_data[u_nnz] = pivot
        u_nnz += 1
        for s in range(kept_u.size):
            col = kept_u[s]
            u_colidx[u_nnz] = col
            u_data[u_nnz] = z[col]
            u_nnz += 1
        u_rowptr[k + 1] = u_nnz

        for s in range(kept_l.size):
            row = kept_l[s]
            l_rowidx[l_nnz] = row
            l_data[l_nnz] = w[row] / pivot
            l_nnz += 1
        l_colptr[k + 1] = l_nnz

        if u_rowptr[k + 1] - u_rowptr[k] > 1:
            u_first[k] = u_rowptr[k] + 1
            nxt = u_colidx[u_first[k]]
            u_next[k] = u_head[nxt]
            u_head[nxt] = k
        else:
            u_first[k] = u_rowptr[k + 1]
        if l_colptr[k + 1] > l_colptr[k]:
            l_first[k] = l_colptr[k]
            nxt = l_rowidx[l_first[k]]
            l_next[k] = l_head[nxt]
            l_head[nxt] = k
        else:
            l_first[k] = l_colptr[k + 1]

    return (
        -1,
        u_rowptr,
        u_colidx[:u_nnz].copy(),
        u_data[:u_nnz].copy(),
        l_colptr,
        l_rowidx[:l_nnz].copy(),
        l_data[:l_nnz].copy(),
    )
