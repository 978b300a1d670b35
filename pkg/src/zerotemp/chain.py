"""Absolutely continuous stationary Markov measure nu_beta = theta(x) K(x, y) dx dy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCylinder, InternalConsistencyError, InvalidArgument
from .grid import Grid, integrate, to_csv
from .potentials import Potential
from .transfer import EigenPair, kernel

ROW_TOL = 1e-10
NORM_TOL = 1e-10
STATIONARY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GibbsChain:
    beta: float
    theta: np.ndarray
    kernel: np.ndarray
    log_kernel: np.ndarray
    pi: float
    grid: Grid

    def row_sums(self) -> np.ndarray:
        return (self.kernel * self.grid.weights[None, :]).sum(axis=1)

    def joint(self) -> np.ndarray:
        """Quadrature masses w_i w_j theta_i K_ij; sums to one."""
        w = self.grid.weights
        return (w * self.theta)[:, None] * self.kernel * w[None, :]

    def push_forward(self, v) -> np.ndarray:
        """y -> int v(x) K(x, y) dx."""
        return ((self.grid.weights * v)[:, None] * self.kernel).sum(axis=0)

    def residuals(self) -> dict:
        return {
            "row_stochasticity": float(np.max(np.abs(self.row_sums() - 1.0))),
            "joint_normalization": abs(float(self.joint().sum(axis=1).sum()) - 1.0),
            "stationarity": float(np.max(np.abs(self.push_forward(self.theta) - self.theta))),
        }


def build_chain(ep: EigenPair, A: Potential, g: Grid) -> GibbsChain:
    k = kernel(ep.beta, A, g)
    phi, phib = ep.phi, ep.phi_bar
    pi = integrate(g, phi * phib)
    theta = phi * phib / pi
    log_lam_s = ep.log_lambda - ep.beta * k.shift
    logK = ep.beta * (A.matrix(g) - k.shift) + np.log(phib)[None, :] - np.log(phib)[:, None] - log_lam_s
    K = np.exp(logK)
    theta.setflags(write=False)
    K.setflags(write=False)
    logK.setflags(write=False)
    chain = GibbsChain(ep.beta, theta, K, logK, pi, g)
    r = chain.residuals()
    if not np.all(theta > 0):
        raise InternalConsistencyError("theta is not strictly positive")
    if r["row_stochasticity"] > ROW_TOL:
        raise InternalConsistencyError(f"kernel rows do not integrate to 1: {r['row_stochasticity']:.3e}")
    if r["joint_normalization"] > NORM_TOL:
        raise InternalConsistencyError(f"nu_beta is not a probability: {r['joint_normalization']:.3e}")
    if r["stationarity"] > STATIONARY_TOL:
        raise InternalConsistencyError(f"theta is not stationary: {r['stationarity']:.3e}")
    return chain


def expect(c: GibbsChain, F) -> float:
    """int F(x, y) d nu_beta for an n x n array F."""
    return float((c.joint() * F).sum(axis=1).sum())


def entropy_penalized(c: GibbsChain, g: Grid) -> float:
    """-int theta K log K. Nonpositive by Jensen."""
    if not np.all(c.kernel > 0):
        raise InvalidArgument("kernel has nonpositive entries; entropy undefined")
    return -expect(c, c.log_kernel)


def mean_potential(c: GibbsChain, A: Potential, g: Grid) -> float:
    return expect(c, A.matrix(g))


def variational_residual(c: GibbsChain, ep: EigenPair, A: Potential, g: Grid) -> float:
    """|log lambda - (beta int A d nu + S[nu])|."""
    return abs(ep.log_lambda - (c.beta * mean_potential(c, A, g) + entropy_penalized(c, g)))


def marginal_gap(c: GibbsChain, f) -> float:
    """int f(x) d nu - int f(y) d nu for a grid function f."""
    J = c.joint()
    return float((J.sum(axis=1) * f).sum() - (J.sum(axis=0) * f).sum())


def cylinder_measure(c: GibbsChain, cyl) -> tuple[float, float]:
    """Measure of the cylinder A_1 x ... x A_k and the largest endpoint snap distance.

    Each interval is snapped to its nearest nodes and integrated with the
    trapezoid rule on the snapped sub-interval.
    """
    g = c.grid
    if len(cyl) < 1:
        raise InvalidArgument("cylinder needs at least one interval")
    weights, snap = [], 0.0
    for a, b in cyl:
        if not (0.0 <= a < b <= 1.0):
            raise InvalidArgument(f"bad interval [{a}, {b}]")
        w, s = g.sub_weights(a, b)
        if not np.any(w > 0):
            raise DegenerateCylinder(f"interval [{a}, {b}] is empty after snapping to the grid")
        weights.append(w)
        snap = max(snap, s)
    mass = weights[0] * c.theta
    for w in weights[1:]:
        mass = w * (mass[:, None] * c.kernel).sum(axis=0)
    return float(np.cumsum(mass)[-1]), snap


def _cell_cdf(values, h):
    cells = 0.5 * (values[..., :-1] + values[..., 1:]) * h
    cdf = np.cumsum(cells, axis=-1)
    return cdf / cdf[..., -1:]


def sample_path(c: GibbsChain, length: int, seed: int) -> np.ndarray:
    """Trajectory x_1..x_len: x_1 ~ theta, x_{t+1} ~ K(node nearest x_t, .).

    Cells are picked by their trapezoid mass and the state is placed uniformly
    inside the cell. Uses the counter-based Philox generator.
    """
    if length < 1:
        raise InvalidArgument("length must be >= 1")
    g = c.grid
    rng = np.random.Generator(np.random.Philox(seed))
    theta_cdf = _cell_cdf(c.theta, g.h)
    row_cdf = _cell_cdf(c.kernel, g.h)
    u = rng.random((length, 2))
    out = np.empty(length)
    cell = int(np.searchsorted(theta_cdf, u[0, 0], side="right"))
    cell = min(cell, g.n - 2)
    out[0] = g.nodes[cell] + u[0, 1] * g.h
    for t in range(1, length):
        i = g.nearest(out[t - 1])
        cell = min(int(np.searchsorted(row_cdf[i], u[t, 0], side="right")), g.n - 2)
        out[t] = g.nodes[cell] + u[t, 1] * g.h
    return out


def chain_summary(c: GibbsChain, ep: EigenPair, A: Potential, g: Grid) -> dict:
    r = c.residuals()
    return {
        "beta": c.beta,
        "pi": c.pi,
        "row_stochasticity_residual": r["row_stochasticity"],
        "joint_normalization_residual": r["joint_normalization"],
        "stationarity_residual": r["stationarity"],
        "entropy": entropy_penalized(c, g),
        "mean_A": mean_potential(c, A, g),
        "variational_residual": variational_residual(c, ep, A, g),
    }


def save_chain(c: GibbsChain, summary: dict, stem, dump_kernel=False) -> None:
    to_csv(c.grid, c.theta, f"{stem}_theta.csv", header="x,theta")
    with open(f"{stem}.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if dump_kernel:
        n = c.grid.n
        with open(f"{stem}_kernel.csv", "w") as fh:
            fh.write("i,j,K\n")
            for i in range(n):
                fh.write("".join(f"{i},{j},{c.kernel[i, j]:.17g}\n" for j in range(n)))


def log_measure_over_beta(c: GibbsChain, cyl) -> float:
    mu, _ = cylinder_measure(c, cyl)
    return math.log(mu) / c.beta if mu > 0 else -math.inf
