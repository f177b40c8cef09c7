"""Fused tanh kernels for channel-stacked hyper-dual arrays.

Arrays have shape (4, P, n) with channels [value, d/dx, d/dT, d2/dx2].
"""

import numba as nb


@nb.njit(cache=True)
def tanh_forward(a, t, h):
    """h = tanh(a) on all four channels, given t = tanh(a[0])."""
    _, m, n = a.shape
    for i in range(m):
        for j in range(n):
            tt = t[i, j]
            s = 1.0 - tt * tt
            ax = a[1, i, j]
            h[0, i, j] = tt
            h[1, i, j] = s * ax
            h[2, i, j] = s * a[2, i, j]
            h[3, i, j] = s * a[3, i, j] - 2.0 * tt * s * ax * ax


@nb.njit(cache=True)
def tanh_backward(gh, a, h, g):
    """Cotangents of the pre-activation ``a`` from those of ``h = tanh(a)``."""
    _, m, n = a.shape
    for i in range(m):
        for j in range(n):
            t = h[0, i, j]
            s = 1.0 - t * t
            ts = t * s
            ax = a[1, i, j]
            g0 = gh[0, i, j]
            g1 = gh[1, i, j]
            g2 = gh[2, i, j]
            g3 = gh[3, i, j]
            g[0, i, j] = (s * g0 - 2.0 * ts * (g1 * ax + g2 * a[2, i, j] + g3 * a[3, i, j])
                          - 2.0 * g3 * ax * ax * (s * s - 2.0 * t * ts))
            g[1, i, j] = s * g1 - 4.0 * g3 * ts * ax
            g[2, i, j] = s * g2
            g[3, i, j] = s * g3
