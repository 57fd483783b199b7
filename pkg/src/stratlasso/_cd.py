"""Compiled coordinate-descent kernel for penalized quadratic subproblems."""

from numba import njit


@njit(cache=True)
def cd_quadratic(H, g, c, pen, max_sweeps, tol):
    """Minimize ``g.(x-c) + 0.5 (x-c)' H (x-c) + sum_j pen_j |x_j|``.

    Cyclic coordinate descent in covariance form, started at ``x = c``.
    Stops when the largest weighted squared move ``H_jj dx_j^2`` in a sweep
    drops below ``tol``.  Returns the minimizer and the sweep count.
    """
    k = c.shape[0]
    x = c.copy()
    q = g.copy()
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        biggest = 0.0
        for j in range(k):
            a = H[j, j]
            if a <= 0.0:
                continue
            u = a * x[j] - q[j]
            t = pen[j]
            if u > t:
                new = (u - t) / a
            elif u < -t:
                new = (u + t) / a
            else:
                new = 0.0
            d = new - x[j]
            if d != 0.0:
                x[j] = new
                for i in range(k):
                    q[i] += d * H[i, j]
                move = a * d * d
                if move > biggest:
                    biggest = move
        if biggest < tol:
            break
    return x, sweeps

