"""Maximizing measure on the grid and the twist-condition graph y = Y(x)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .grid import Grid, to_csv
from .potentials import Potential, twist_report
from .tropical import BACKWARD, Subaction, karp_value


@dataclass(frozen=True)
class SupportMeasure:
    pairs: tuple  # (i, j, mass)
    source: str

    def marginals(self, n: int):
        row, col = np.zeros(n), np.zeros(n)
        for i, j, mass in self.pairs:
            row[i] += mass
            col[j] += mass
        return row, col

    def integral(self, A: Potential, g: Grid) -> float:
        """Sum of A over the cycle edges, divided once by its length."""
        total = 0.0
        for i, j, _ in self.pairs:
            total += float(A.eval(g.nodes[i], g.nodes[j]))
        return total / len(self.pairs)

    def to_json(self, g: Grid) -> dict:
        return {"pairs": [[float(g.nodes[i]), float(g.nodes[j]), mass] for i, j, mass in self.pairs]}


def maximizing_measure(A: Potential, g: Grid, karp: dict | None = None) -> SupportMeasure:
    """Uniform mass on the edges of an optimal cycle."""
    karp = karp or karp_value(A, g)
    cyc = karp["cycle"]
    L = len(cyc)
    pairs = tuple((a, b, 1.0 / L) for a, b in zip(cyc, cyc[1:] + cyc[:1]))
    return SupportMeasure(pairs, "karp-cycle")


@dataclass(frozen=True, eq=False)
class GraphMap:
    Y: np.ndarray  # node index of Y(x_i)
    defined: np.ndarray  # bool mask
    du: np.ndarray
    dA: np.ndarray
    cross_tol: float

    @property
    def defined_at(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.defined)]

    def save(self, g: Grid, path) -> None:
        to_csv(g, [g.nodes[self.Y], self.defined.astype(float)], path, header="x,Y,defined")


def derivative(u, h):
    """Central differences inside, one-sided at the ends."""
    du = np.empty_like(u)
    du[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    du[0] = (u[1] - u[0]) / h
    du[-1] = (u[-1] - u[-2]) / h
    return du


def graph_map(u: Subaction, A: Potential, g: Grid) -> GraphMap:
    if u.direction != BACKWARD:
        raise PreconditionError("graph_map needs a backward subaction")
    if not twist_report(A, g)["is_twist"]:
        raise PreconditionError(f"{A.name} violates the twist condition on the grid")
    W = A.matrix(g)
    Y = np.argmax(W + u.values[None, :], axis=1)
    du = derivative(np.asarray(u.values, dtype=float), g.h)
    dA = np.asarray(A.d_x(g.nodes, g.nodes[Y]) + 0.0 * g.nodes)
    cross_tol = A.lip * 10.0 / (g.n - 1)
    defined = np.abs(dA - du) <= cross_tol
    return GraphMap(Y, defined, du, dA, cross_tol)


def left_limit_extension(gm: GraphMap) -> np.ndarray:
    """Y with excluded nodes filled from the nearest defined node on the left (reporting only)."""
    Y = gm.Y.copy()
    last = None
    for i in range(len(Y)):
        if gm.defined[i]:
            last = Y[i]
        elif last is not None:
            Y[i] = last
    return Y


def monotonicity_check(Y, defined_at, g: Grid, sign: str = "+") -> dict:
    """Scan consecutive defined nodes for inversions beyond one grid cell.

    ``sign="-"`` checks for non-increasing maps (negative twist).
    """
    ys = np.asarray(g.nodes)[np.asarray(Y)] if np.issubdtype(np.asarray(Y).dtype, np.integer) else np.asarray(Y, float)
    slack = 1.0 / (g.n - 1) + 1e-12
    nodes = sorted(int(i) for i in defined_at)
    violations = []
    for a, b in zip(nodes, nodes[1:]):
        step = ys[b] - ys[a]
        if (sign == "+" and step < -slack) or (sign == "-" and step > slack):
            violations.append((a, b))
    return {"ok": not violations, "violations": violations}


def support_on_graph_check(sm: SupportMeasure, gm: GraphMap, g: Grid) -> dict:
    off = []
    for i, j, _ in sm.pairs:
        if gm.defined[i] and abs(g.nodes[j] - g.nodes[gm.Y[i]]) > 2.0 / (g.n - 1) + 1e-12:
            off.append((i, j))
    return {"ok": not off, "off_graph_pairs": off}


def cohomology_residual(sm: SupportMeasure, u: Subaction, A: Potential, g: Grid) -> float:
    """max over support pairs of |u(x) - A(x, y) - u(y) + m|."""
    worst = 0.0
    for i, j, _ in sm.pairs:
        r = u.values[i] - float(A.eval(g.nodes[i], g.nodes[j])) - u.values[j] + u.m
        worst = max(worst, abs(r))
    return worst


def save_support(sm: SupportMeasure, g: Grid, path) -> None:
    with open(path, "w") as fh:
        json.dump(sm.to_json(g), fh, indent=2)
        fh.write("\n")
