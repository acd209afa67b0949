"""Shared fixtures-as-functions for the test modules."""
import numpy as np

from anisoharnack.norms import NormModel, parse_norm


def all_families(dim):
    """One representative of each norm family in dimension ``dim``."""
    A = np.linalg.qr(np.arange(1.0, dim * dim + 1).reshape(dim, dim) + 2 * np.eye(dim))[0]
    S = np.eye(dim) + 0.25 * np.ones((dim, dim)) / dim
    return {
        "weighted": NormModel.weighted_euclidean(S),
        "ellp": NormModel.ell_p(4.0, dim),
        "rotated": NormModel.rotated_ell_p(A, 3.0),
        "varexp": parse_norm("varexp(1.5, 3.5, tilt)", dim),
    }


def fd_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    E = np.eye(n) * h
    for i in range(n):
        for j in range(n):
            H[i, j] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j])
                       + f(x - E[i] - E[j])) / (4 * h * h)
    return H
