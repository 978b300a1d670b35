"""Uniform grid on [0, 1] with composite trapezoid weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    def nearest(self, x: float) -> int:
        """Index of the node closest to ``x`` (ties go to the lower index)."""
        return int(np.floor(x * (self.n - 1) + 0.5 - 1e-12))

    def sub_weights(self, a: float, b: float) -> tuple[np.ndarray, float]:
        """Trapezoid weights for the sub-interval [a, b] after snapping to nodes.

        Returns the weight vector (zero outside the snapped interval) and the
        larger of the two snap distances.
        """
        i, j = self.nearest(a), self.nearest(b)
        snap = max(abs(self.nodes[i] - a), abs(self.nodes[j] - b))
        w = np.zeros(self.n)
        if j > i:
            w[i : j + 1] = self.h
            w[i] *= 0.5
            w[j] *= 0.5
        return w, float(snap)


def make_grid(n: int) -> Grid:
    if int(n) != n or n < 2:
        raise InvalidArgument(f"grid needs at least 2 nodes, got {n}")
    n = int(n)
    nodes = np.arange(n, dtype=float) / (n - 1)
    nodes[-1] = 1.0
    weights = np.full(n, 1.0 / (n - 1))
    weights[0] = weights[-1] = 0.5 / (n - 1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return Grid(n, nodes, weights)


def integrate(g: Grid, f) -> float:
    """Weighted sum of ``f`` over the nodes, accumulated left to right."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise InvalidArgument(f"grid function has shape {f.shape}, expected ({g.n},)")
    return float(np.cumsum(g.weights * f)[-1])


def to_csv(g: Grid, values, path, header="x,value"):
    """Write one or more grid functions as CSV with 17 significant digits."""
    cols = [np.asarray(v, dtype=float) for v in (values if isinstance(values, (list, tuple)) else [values])]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(g.n):
            fh.write(",".join(f"{c:.17g}" for c in (g.nodes[i], *(col[i] for col in cols))) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
