"""Test-only constructions shared across modules."""

import itertools

import numpy as np

from zerotemp.potentials import Potential


def table_potential(M, name="table"):
    """Potential that reproduces the matrix M exactly on the grid of size len(M)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]

    def idx(t):
        return np.rint(np.asarray(t) * (n - 1)).astype(int)

    def ev(x, y):
        return M[idx(x), idx(y)]

    zero = lambda x, y: 0.0 * (np.asarray(x) + np.asarray(y))
    return Potential(name, ev, zero, zero, zero, float(np.ptp(M)) * (n - 1))


def simple_cycles(n):
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            first = subset[0]
            for perm in itertools.permutations(subset[1:]):
                yield (first,) + perm


def brute_max_cycle_mean(M):
    best = -np.inf
    for cyc in simple_cycles(len(M)):
        total = sum(M[a, b] for a, b in zip(cyc, cyc[1:] + cyc[:1]))
        best = max(best, total / len(cyc))
    return best
