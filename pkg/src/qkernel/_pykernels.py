"""NumPy versions of the compiled particle-method kernels."""
import numpy as np


def linear_bin(x, origin, spacing, n):
    pos = (np.asarray(x, dtype=float) - origin) / spacing
    j = np.floor(pos).astype(np.int64)
    frac = pos - j
    inside = (j >= 0) & (j < n - 1)
    out = np.bincount(j[inside], weights=1.0 - frac[inside], minlength=n)[:n]
    out = out + np.bincount(j[inside] + 1, weights=frac[inside], minlength=n)[:n]
    edge = (j == n - 1) & (frac == 0.0)
    if np.any(edge):
        out[n - 1] += np.count_nonzero(edge)
    return out


def interp_uniform(values, origin, spacing, x):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    nodes = origin + spacing * np.arange(n)
    return np.interp(np.asarray(x, dtype=float), nodes, values, left=0.0, right=0.0)


def mckean_step(x, ratio_grid, origin, spacing, z, scale):
    ratio_grid = np.asarray(ratio_grid, dtype=float)
    n = ratio_grid.shape[0]
    pos = (x - origin) / spacing
    outside = (pos < 0) | (pos >= n - 1)
    r = interp_uniform(ratio_grid, origin, spacing, x)
    r = np.where(outside, 1.0, r)
    x += scale * np.sqrt(r) * z
    return int(np.count_nonzero(outside))
