import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def sor_sweeps(indptr, indices, data, diag_pos, x, b, omega, nsweeps):
    """Forward SOR sweeps on a CSR matrix, in place."""
    n = len(b)
    for _ in range(nsweeps):
        for i in range(n):
            s = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                s -= data[k] * x[indices[k]]
            x[i] += omega * s / data[diag_pos[i]]
    return x


@nb.njit(cache=True, nogil=True)
def sor_sweeps_mean_free(indptr, indices, data, diag_pos, x, b, omega, nsweeps):
    """SOR sweeps with the iterate projected to zero mean after each sweep."""
    n = len(b)
    for _ in range(nsweeps):
        for i in range(n):
            s = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                s -= data[k] * x[indices[k]]
            x[i] += omega * s / data[diag_pos[i]]
        m = 0.0
        for i in range(n):
            m += x[i]
        m /= n
        for i in range(n):
            x[i] -= m
    return x


def diagonal_positions(indptr, indices):
    n = len(indptr) - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i] : indptr[i + 1]]
        hit = np.flatnonzero(row == i)
        if len(hit):
            pos[i] = indptr[i] + hit[0]
    return pos
