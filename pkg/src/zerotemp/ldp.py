"""Large-deviation rates for cylinder sets at zero temperature."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import build_chain, cylinder_measure
from .errors import InvalidArgument, InvalidSubaction
from .grid import Grid
from .potentials import Potential
from .transfer import EigenPair, leading_eigenpair
from .tropical import BACKWARD, FORWARD, Subaction

TERM_TOL = 1e-6


def _nodes(points, g: Grid):
    return [g.nearest(float(p)) for p in points]


def F_k(points, V: Subaction, Vbar: Subaction, A: Potential, m: float, g: Grid) -> float:
    """max(V + Vbar) - V(x_1) - Vbar(x_k) - sum (A - m)(x_i, x_{i+1})."""
    if len(points) < 1:
        raise InvalidArgument("need at least one point")
    if V.direction != FORWARD or Vbar.direction != BACKWARD:
        raise InvalidArgument("F_k takes a forward V and a backward Vbar")
    idx = _nodes(points, g)
    top = float(np.max(V.values + Vbar.values))
    x = g.nodes[idx]
    path = float(np.sum(A.eval(x[:-1], x[1:]) - m)) if len(idx) > 1 else 0.0
    return top - V.values[idx[0]] - Vbar.values[idx[-1]] - path


def rate_prefix(points, V: Subaction, A: Potential, m: float, g: Grid) -> float:
    """Partial sum of V(x_{i+1}) - V(x_i) - (A - m)(x_i, x_{i+1}) over the k - 1 steps."""
    if len(points) < 2:
        raise InvalidArgument("need at least two points")
    idx = _nodes(points, g)
    x = g.nodes[idx]
    v = V.values[idx]
    terms = v[1:] - v[:-1] - (A.eval(x[:-1], x[1:]) - m)
    worst = float(np.min(terms))
    if worst < -TERM_TOL:
        raise InvalidSubaction(f"rate term {worst:.3e} is negative; V is not a forward subaction")
    total = 0.0
    for t in terms:
        total += float(t)
    return total


def _snapped(cyl, g: Grid):
    out = []
    for a, b in cyl:
        i, j = g.nearest(a), g.nearest(b)
        if j < i:
            raise InvalidArgument(f"interval [{a}, {b}] is empty on the grid")
        out.append(np.arange(i, j + 1))
    return out


def inf_rate_over_cylinder(cyl, V: Subaction, Vbar: Subaction, A: Potential, m: float, g: Grid) -> dict:
    """Exact minimum of F_k over the grid points of the cylinder.

    F_k splits into a chain of pairwise terms, so the minimum is a max-plus
    product along the cylinder; the result equals exhaustive enumeration.
    """
    if len(cyl) < 1:
        raise InvalidArgument("cylinder needs at least one interval")
    idx = _snapped(cyl, g)
    W = A.matrix(g) - m
    top = float(np.max(V.values + Vbar.values))
    best = V.values[idx[0]].copy()
    back = []
    for prev, cur in zip(idx, idx[1:]):
        cand = best[:, None] + W[np.ix_(prev, cur)]
        arg = np.argmax(cand, axis=0)
        back.append(arg)
        best = cand[arg, np.arange(len(cur))]
    final = best + Vbar.values[idx[-1]]
    j = int(np.argmax(final))
    path = [j]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path.reverse()
    nodes = [int(ix[p]) for ix, p in zip(idx, path)]
    return {"inf": top - float(final[j]), "argmin": [float(g.nodes[i]) for i in nodes], "nodes": nodes}


@dataclass
class RateReport:
    cylinder: list
    F_inf: float
    rows: list = field(default_factory=list)
    converged: bool = False
    hypotheses_unverified: bool = False
    argmin: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, stem) -> None:
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(f"{stem}_plot.txt", "w") as fh:
            fh.write("# beta value target\n")
            for r in self.rows:
                fh.write(f"{r['beta']:.17g} {r['log_measure_over_beta']:.17g} {-self.F_inf:.17g}\n")


def ldp_table(
    A: Potential,
    g: Grid,
    cyl,
    betas,
    V: Subaction,
    Vbar: Subaction,
    m: float,
    eigen_tol: float = 1e-12,
    eigenpairs: dict | None = None,
    hypotheses_unverified: bool = False,
) -> RateReport:
    """(1/beta) log mu_beta(cylinder) against -inf F_k over the cylinder, per beta.

    ``eigenpairs`` maps beta to a precomputed EigenPair; missing ones are solved.
    """
    betas = [float(b) for b in betas]
    if len(betas) < 3 or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise InvalidArgument("need at least three strictly increasing betas")
    target = inf_rate_over_cylinder(cyl, V, Vbar, A, m, g)
    rows = []
    for beta in betas:
        ep: EigenPair = (eigenpairs or {}).get(beta) or leading_eigenpair(beta, A, g, tol=eigen_tol)
        chain = build_chain(ep, A, g)
        mu, snap = cylinder_measure(chain, cyl)
        value = math.log(mu) / beta if mu > 0 else -math.inf
        rows.append(
            {
                "beta": beta,
                "measure": mu,
                "log_measure_over_beta": value,
                "error": abs(value + target["inf"]),
                "snap": snap,
            }
        )
    errs = [r["error"] for r in rows]
    converged = errs[-3] >= errs[-2] >= errs[-1]
    return RateReport(
        cylinder=[list(map(float, iv)) for iv in cyl],
        F_inf=target["inf"],
        rows=rows,
        converged=bool(converged),
        hypotheses_unverified=bool(hypotheses_unverified),
        argmin=target["argmin"],
    )
