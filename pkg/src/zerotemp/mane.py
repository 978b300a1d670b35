"""Path costs on the grid: Mane potential S, Peierls barrier h, the
non-wandering set and separating subactions.

Edge weight is w(i, j) = m - A(x_i, x_j) >= cost of a one-step path; S is the
cheapest path of at least one edge and h the cost of arbitrarily long paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstructionFailure,
    EmptyOmega,
    IncompatibleBoundaryData,
    InconsistentM,
    InvalidArgument,
    PreconditionError,
)
from .grid import Grid, to_csv
from .potentials import Potential
from .tropical import BACKWARD, Subaction, calibration_residual

NEG_CYCLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CostMatrices:
    m: float
    S: np.ndarray
    h: np.ndarray
    k_used: int
    h_converged: bool
    lip: float
    w: np.ndarray

    def save(self, stem) -> None:
        n = self.S.shape[0]
        with open(f"{stem}.csv", "w") as fh:
            fh.write("i,j,S,h\n")
            for i in range(n):
                fh.write("".join(f"{i},{j},{self.S[i, j]:.17g},{self.h[i, j]:.17g}\n" for j in range(n)))


def floyd_warshall(w: np.ndarray) -> np.ndarray:
    """Shortest walks with at least one edge (diagonal starts at the self-loop cost)."""
    D = np.array(w, dtype=float)
    for k in range(D.shape[0]):
        np.minimum(D, D[:, k : k + 1] + D[k : k + 1, :], out=D)
    return D


def min_plus(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    C = np.full((P.shape[0], Q.shape[1]), np.inf)
    for k in range(P.shape[1]):
        np.minimum(C, P[:, k : k + 1] + Q[k : k + 1, :], out=C)
    return C


def cost_matrices(A: Potential, g: Grid, m: float, k_max: int | None = None, tol: float = 1e-12) -> CostMatrices:
    """S by Floyd-Warshall; h as the min of S_k over the window k in [K/2, K].

    The window minimum is w^{K/2} (x) (I + w)^{K/2} in min-plus algebra, so
    doubling K costs two products.
    """
    if k_max is None:
        k_max = 4 * g.n
    if k_max < 3:
        raise InvalidArgument("k_max must be at least 3")
    w = m - A.matrix(g)
    S = floyd_warshall(w)
    worst = float(np.min(np.diag(S)))
    if worst < -NEG_CYCLE_TOL:
        raise InconsistentM(f"a cycle beats m={m!r} by {-worst:.3e}; m is not the maximum cycle mean")

    ident = np.full_like(w, np.inf)
    np.fill_diagonal(ident, 0.0)
    P = w
    Q = np.minimum(ident, w)
    h = min_plus(P, Q)  # K = 2
    K = 2
    converged = False
    while 2 * K <= k_max:
        P = min_plus(P, P)
        Q = min_plus(Q, Q)
        h_next = min_plus(P, Q)
        K *= 2
        delta = float(np.max(np.abs(h_next - h)))
        h = h_next
        if delta < tol:
            converged = True
            break
    S.setflags(write=False)
    h.setflags(write=False)
    return CostMatrices(float(m), S, h, K, converged, A.lip, w)


def default_omega_tol(lip: float, n: int) -> float:
    return 1e-6 * max(lip, 1.0) / (n - 1)


def omega_set(cm: CostMatrices, tol: float | None = None) -> list[int]:
    """Nodes whose cheapest loop costs nothing: S(x, x) <= tol."""
    n = cm.S.shape[0]
    if tol is None:
        tol = default_omega_tol(cm.lip, n)
    out = [int(i) for i in np.flatnonzero(np.diag(cm.S) <= tol)]
    if not out:
        raise EmptyOmega(f"no node has S(x,x) <= {tol:.3e}; tolerance too tight or m inconsistent")
    return out


def convex_weights(count: int) -> np.ndarray:
    """1/2, 1/4, ..., 2^-(count-1), 2^-(count-1): the dyadic series with its
    tail lumped onto the last term, so the weights sum to one."""
    if count == 0:
        return np.zeros(0)
    c = 0.5 ** np.arange(1, count + 1)
    c[-1] *= 2.0
    return c


def _gaps(cm: CostMatrices, j: int) -> np.ndarray:
    """g_j(x, y) = w(x, y) - S(x_j, y) + S(x_j, x) >= 0: slack of the subaction S(x_j, .)."""
    s = cm.S[j]
    return cm.w - s[None, :] + s[:, None]


def separating_subaction(cm: CostMatrices, omega, g: Grid, floor: float = 0.0) -> Subaction:
    """Convex dyadic combination of S(x_j, .) - S(x_j, 0) over nodes outside omega.

    The margin m - max_y[u(y) - u(x) + A(x, y)] is accumulated as a weighted
    sum of nonnegative slacks so its sign survives the 2^-j scaling.
    """
    n = g.n
    omega_set_ = set(int(i) for i in omega)
    outside = [i for i in range(n) if i not in omega_set_]
    terms = outside
    if not outside and np.min(cm.w) < 0:
        # nothing to separate, but u = 0 is not a subaction; S(x_0, .) always is
        terms = sorted(omega_set_)[:1]
    c = convex_weights(len(terms))
    u = np.zeros(n)
    margin = np.zeros((n, n))
    worst_gap, worst_node = 0.0, -1
    for cj, j in zip(c, terms):
        u += cj * (cm.S[j] - cm.S[j, 0])
        G = _gaps(cm, j)
        if G.min() < worst_gap:
            worst_gap = float(G.min())
            worst_node = int(np.argmin(G.min(axis=1)))
        margin += cj * np.maximum(G, 0.0)
    if worst_gap < -1e-9:
        raise ConstructionFailure(f"S(x_j, .) is not a backward subaction (slack {worst_gap:.3e})", worst_node)
    margin_x = margin.min(axis=1) if terms else np.zeros(n)
    naive = cm.m - np.max(cm.m - cm.w + u[None, :] - u[:, None], axis=1)
    for i in range(n):
        if i in omega_set_:
            if margin_x[i] > 1e-6:
                raise ConstructionFailure(f"margin {margin_x[i]:.3e} on the non-wandering set", i)
        elif not margin_x[i] > floor:
            raise ConstructionFailure(f"margin {margin_x[i]:.3e} not above floor {floor}", i)
    u.setflags(write=False)
    return Subaction(
        u,
        BACKWARD,
        "separating",
        cm.m,
        0,
        0.0,
        0,
        {"margin": margin_x, "margin_float": naive, "worst_slack": worst_gap, "terms": len(terms)},
    )


def check_boundary_data(f: dict, cm: CostMatrices, tol=1e-9):
    for x, fx in f.items():
        for y, fy in f.items():
            if fy - fx > cm.h[x, y] + tol:
                raise IncompatibleBoundaryData(
                    f"f(y) - f(x) = {fy - fx:.3e} exceeds h(x, y) = {cm.h[x, y]:.3e}", (x, y)
                )


def subaction_from_boundary(f: dict, cm: CostMatrices, g: Grid) -> Subaction:
    """u(x) = max over p in omega of f(p) - h(x, p). ``f`` maps omega node -> value."""
    if not cm.h_converged:
        raise PreconditionError("Peierls barrier has not stabilized; raise k_max")
    if not f:
        raise InvalidArgument("boundary data is empty")
    check_boundary_data(f, cm)
    ps = sorted(f)
    vals = np.array([f[p] for p in ps])
    u = np.max(vals[None, :] - cm.h[:, ps], axis=1)
    A_like = _FromWeights(cm)
    res = calibration_residual(A_like, g, u, cm.m, BACKWARD)
    boundary_err = float(np.max(np.abs(u[ps] - vals)))
    u.setflags(write=False)
    return Subaction(u, BACKWARD, "calibrated", cm.m, -1, res, 0, {"boundary_error": boundary_err})


class _FromWeights:
    """Adapter exposing A(x_i, x_j) = m - w(i, j) to helpers that call ``matrix``."""

    def __init__(self, cm: CostMatrices):
        self._A = cm.m - cm.w

    def matrix(self, g):
        return self._A


def save_omega(omega, g: Grid, path) -> None:
    with open(path, "w") as fh:
        json.dump([float(g.nodes[i]) for i in omega], fh)
        fh.write("\n")


def save_margins(sub: Subaction, g: Grid, path) -> None:
    to_csv(g, sub.extra["margin"], path, header="x,margin")
