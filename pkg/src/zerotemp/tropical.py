"""Zero-temperature objects: maximizing value m and calibrated subactions.

On the grid, stationary Markov measures with equal marginals are convex
combinations of cycle measures, so m is the maximum cycle mean of the weight
matrix A(x_i, x_j). Subactions are fixed points of the max-plus (Lax-Oleinik)
map shifted by m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .grid import Grid, to_csv
from .potentials import Potential
from .transfer import EigenPair

FORWARD = "forward"
BACKWARD = "backward"


def _cycle_mean(W, cycle):
    total = 0.0
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        total += W[a, b]
    return total / len(cycle)


def _canonical(cycle):
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def karp_value(A: Potential, g: Grid) -> dict:
    """Maximum cycle mean over the complete digraph on grid nodes.

    Returns ``{"m": float, "cycle": [node, ...], "karp_estimate": float}``.
    ``m`` is recomputed from the returned cycle (sum, then one division);
    ``karp_estimate`` is the raw min/max ratio from the dynamic program.
    """
    W = A.matrix(g)
    n = g.n
    D = np.empty((n + 1, n))
    pred = np.zeros((n + 1, n), dtype=np.int64)
    D[0] = 0.0
    for k in range(1, n + 1):
        cand = D[k - 1][:, None] + W
        pred[k] = np.argmax(cand, axis=0)
        D[k] = cand[pred[k], np.arange(n)]
    ratios = (D[n][None, :] - D[:n]) / (n - np.arange(n))[:, None]
    per_node = ratios.min(axis=0)
    v = int(np.argmax(per_node))
    estimate = float(per_node[v])

    # walk back from (n, v) and collect the cycles it closes
    walk = [v]
    for k in range(n, 0, -1):
        walk.append(int(pred[k, walk[-1]]))
    walk.reverse()
    candidates = []
    seen = {}
    for pos, node in enumerate(walk):
        if node in seen:
            candidates.append(walk[seen[node] : pos])
        seen[node] = pos
    diag = np.diag(W)
    candidates.append([int(np.argmax(diag))])

    best, best_key = None, None
    for cyc in candidates:
        cyc = _canonical(list(cyc))
        mean = _cycle_mean(W, cyc)
        key = (-mean, len(cyc), cyc[0])
        if best_key is None or key < best_key:
            best, best_key = cyc, key
    m = -best_key[0]
    return {"m": m, "cycle": best, "karp_estimate": estimate}


@dataclass(frozen=True, eq=False)
class Subaction:
    values: np.ndarray
    direction: str
    kind: str
    m: float
    normalization: int = 0
    residual: float = 0.0
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def inequality_violation(self, A: Potential, g: Grid) -> float:
        """Largest amount by which the subaction inequality fails on the grid (<= 0 is fine)."""
        W = A.matrix(g) - self.m
        u = self.values
        if self.direction == FORWARD:
            return float(np.max(W + u[:, None] - u[None, :]))
        return float(np.max(W + u[None, :] - u[:, None]))

    def calibration_residual(self, A: Potential, g: Grid) -> float:
        return calibration_residual(A, g, self.values, self.m, self.direction)

    def summary(self) -> dict:
        out = {
            "m": self.m,
            "direction": self.direction,
            "kind": self.kind,
            "residual": self.residual,
            "iterations": self.iterations,
        }
        out.update({k: v for k, v in self.extra.items() if not isinstance(v, np.ndarray)})
        return out

    def save(self, g: Grid, stem) -> None:
        to_csv(g, self.values, f"{stem}.csv", header="x,u")
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def lax_oleinik(W, u, direction):
    """One max-plus step without the shift: forward y -> max_x W[x, y] + u[x]."""
    if direction == FORWARD:
        return (W + u[:, None]).max(axis=0)
    return (W + u[None, :]).max(axis=1)


def calibration_residual(A: Potential, g: Grid, u, m, direction) -> float:
    W = A.matrix(g)
    return float(np.max(np.abs(lax_oleinik(W, np.asarray(u), direction) - m - u)))


def calibrated_subaction(A: Potential, g: Grid, m: float, direction=FORWARD, tol=1e-12, max_iter=20_000) -> Subaction:
    """Value iteration u <- max(A + u) - m, pinned to zero at node 0."""
    if direction not in (FORWARD, BACKWARD):
        raise InvalidArgument(f"direction must be forward or backward, got {direction!r}")
    W = A.matrix(g)
    u = np.zeros(g.n)
    change = math.inf
    converged = False
    for it in range(1, max_iter + 1):
        new = lax_oleinik(W, u, direction) - m
        new -= new[0]
        change = float(np.max(np.abs(new - u)))
        u = new
        if change < tol:
            converged = True
            break
    residual = calibration_residual(A, g, u, m, direction)
    kind = "calibrated" if converged and residual <= 1e-7 else "plain"
    u.setflags(write=False)
    return Subaction(u, direction, kind, m, 0, residual, it, {"converged": converged, "last_change": change})


def beta_limit(eps: list[EigenPair], which=FORWARD, reference: Subaction | None = None) -> dict:
    """(1/beta) log phi_beta for each eigenpair, pinned to zero at node 0.

    ``which="forward"`` uses phi (limit is the forward subaction), ``"backward"``
    uses phi_bar.
    """
    if len(eps) < 2:
        raise InvalidArgument("need at least two eigenpairs")
    betas = [ep.beta for ep in eps]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise InvalidArgument("betas must be strictly increasing")
    us = []
    for ep in eps:
        f = ep.phi if which == FORWARD else ep.phi_bar
        u = np.log(f) / ep.beta
        us.append(u - u[0])
    consecutive = [float(np.max(np.abs(b - a))) for a, b in zip(us, us[1:])]
    diag = {"betas": betas, "consecutive": consecutive}
    if reference is not None:
        ref = reference.values - reference.values[0]
        diag["to_reference"] = [float(np.max(np.abs(u - ref))) for u in us]
    return {"limit": us[-1], "all": us, "diagnostics": diag}


def duality_certificate(u: Subaction, A: Potential, g: Grid, m: float | None = None) -> dict:
    """max over grid pairs of A(x, y) + u(y) - u(x), and its gap to m."""
    if u.direction != BACKWARD:
        raise InvalidArgument("duality certificate needs a backward subaction")
    m = u.m if m is None else m
    W = A.matrix(g)
    v = u.values
    dual = float(np.max(W + v[None, :] - v[:, None]))
    return {"dual_value": dual, "gap": dual - m}
