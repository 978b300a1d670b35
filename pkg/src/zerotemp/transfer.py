"""Perron operators with kernel exp(beta A(x, y)) against Lebesgue measure.

The forward operator integrates over the first argument,
    (L phi)(y) = int exp(beta A(x, y)) phi(x) dx,
the backward one over the second,
    (Lbar phi)(x) = int exp(beta A(x, y)) phi(y) dy.
Both are discretized with the grid's trapezoid weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalConsistencyError, InvalidArgument, NoConvergence
from .grid import Grid, integrate, read_csv, to_csv
from .potentials import Potential

# exp overflows past ~709
_TINY = np.finfo(float).tiny
_LOG_GUARD = 700.0


@dataclass(frozen=True, eq=False)
class Kernel:
    """exp(beta (A - shift)) on the grid product; shift is 0 unless overflow threatens."""

    beta: float
    shift: float
    values: np.ndarray
    a_min: float
    a_max: float


_kernel_cache: dict = {}
_CACHE_SIZE = 64


def kernel(beta: float, A: Potential, g: Grid) -> Kernel:
    key = (float(beta), id(A), id(g))
    hit = _kernel_cache.get(key)
    if hit is not None and hit[0] is A and hit[1] is g:
        return hit[2]
    a = A.matrix(g)
    a_max, a_min = float(a.max()), float(a.min())
    shift = a_max if beta * a_max > _LOG_GUARD else 0.0
    values = np.exp(beta * (a - shift))
    values.setflags(write=False)
    k = Kernel(float(beta), shift, values, a_min, a_max)
    if len(_kernel_cache) >= _CACHE_SIZE:
        _kernel_cache.pop(next(iter(_kernel_cache)))
    _kernel_cache[key] = (A, g, k)
    return k


def _forward(k: Kernel, g: Grid, phi):
    # row-by-row accumulation over x keeps a fixed order per output entry
    return ((g.weights * phi)[:, None] * k.values).sum(axis=0)


def _backward(k: Kernel, g: Grid, phi):
    return (k.values * (g.weights * phi)[None, :]).sum(axis=1)


def _check_len(g, phi):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (g.n,):
        raise InvalidArgument(f"grid function has shape {phi.shape}, expected ({g.n},)")
    return phi


def apply_forward(beta, A: Potential, g: Grid, phi) -> np.ndarray:
    k = kernel(beta, A, g)
    return _forward(k, g, _check_len(g, phi)) * math.exp(beta * k.shift)


def apply_backward(beta, A: Potential, g: Grid, phi) -> np.ndarray:
    k = kernel(beta, A, g)
    return _backward(k, g, _check_len(g, phi)) * math.exp(beta * k.shift)


@dataclass(frozen=True, eq=False)
class EigenPair:
    beta: float
    lam: float
    log_lambda: float
    phi: np.ndarray
    phi_bar: np.ndarray
    iterations: int
    residual: float
    lambda_backward: float

    @property
    def relative_lambda_mismatch(self) -> float:
        return abs(self.lam - self.lambda_backward) / self.lam

    def summary(self) -> dict:
        return {
            "beta": self.beta,
            "lambda": self.lam,
            "log_lambda": self.log_lambda,
            "lambda_backward": self.lambda_backward,
            "iterations": self.iterations,
            "residual": self.residual,
        }

    def save(self, g: Grid, stem) -> None:
        to_csv(g, [self.phi, self.phi_bar], f"{stem}.csv", header="x,phi,phi_bar")
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, stem) -> "EigenPair":
        _, data = read_csv(f"{stem}.csv")
        with open(f"{stem}.json") as fh:
            meta = json.load(fh)
        return cls(
            beta=meta["beta"],
            lam=meta["lambda"],
            log_lambda=meta["log_lambda"],
            phi=data[:, 1].copy(),
            phi_bar=data[:, 2].copy(),
            iterations=meta["iterations"],
            residual=meta["residual"],
            lambda_backward=meta["lambda_backward"],
        )


def _rel_change(new, old) -> float:
    return float(np.max(np.abs(new - old) / np.maximum(new, _TINY)))


def leading_eigenpair(beta, A: Potential, g: Grid, tol=1e-12, max_iter=100_000) -> EigenPair:
    """Power iteration on both operators, renormalizing to unit integral each step."""
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    if beta <= 0:
        raise InvalidArgument("beta must be positive")
    k = kernel(beta, A, g)
    phi = np.ones(g.n)
    phib = np.ones(g.n)
    residual = math.inf
    for it in range(1, max_iter + 1):
        new = _forward(k, g, phi)
        new /= integrate(g, new)
        newb = _backward(k, g, phib)
        newb /= integrate(g, newb)
        # pointwise relative change, so nodes where phi is tiny converge too
        residual = max(_rel_change(new, phi), _rel_change(newb, phib))
        phi, phib = new, newb
        if residual < tol:
            break
    else:
        raise NoConvergence("power iteration did not converge", residual, max_iter)

    lam_s = integrate(g, _forward(k, g, phi)) / integrate(g, phi)
    lamb_s = integrate(g, _backward(k, g, phib)) / integrate(g, phib)
    log_lambda = math.log(lam_s) + beta * k.shift
    scale = math.exp(beta * k.shift) if beta * k.shift < _LOG_GUARD else math.inf
    if abs(lam_s - lamb_s) / lam_s > max(10 * tol, 1e-13):
        raise InternalConsistencyError(
            f"forward/backward eigenvalues differ: {lam_s * scale!r} vs {lamb_s * scale!r}"
        )
    phi.setflags(write=False)
    phib.setflags(write=False)
    return EigenPair(
        beta=float(beta),
        lam=lam_s * scale,
        log_lambda=log_lambda,
        phi=phi,
        phi_bar=phib,
        iterations=it,
        residual=residual,
        lambda_backward=lamb_s * scale,
    )


def spectral_gap_bound(ep: EigenPair, A: Potential, g: Grid) -> float:
    """lambda (Ksup - Kinf) / (Ksup + Kinf) with K = exp(beta A) over the grid.

    Written as lambda * tanh(beta (max A - min A) / 2), which avoids overflow.
    """
    k = kernel(ep.beta, A, g)
    return ep.lam * math.tanh(ep.beta * (k.a_max - k.a_min) / 2.0)


def relcompact_bounds(ep: EigenPair, A: Potential, g: Grid) -> dict:
    """A-priori bounds on the eigendata: pointwise range of phi and (1/beta) log lambda."""
    sup_abs = float(np.max(np.abs(A.matrix(g))))
    c = 2.0 * sup_abs
    lo, hi = math.exp(-ep.beta * c), math.exp(ep.beta * c)
    rate = ep.log_lambda / ep.beta
    # constant A attains the bound; allow the rounding of the quadrature weight sum
    slack = 8 * np.finfo(float).eps * max(1.0, sup_abs)
    return {
        "sup_abs_A": sup_abs,
        "phi_in_range": bool(np.all((ep.phi >= lo) & (ep.phi <= hi))),
        "phi_bar_in_range": bool(np.all((ep.phi_bar >= lo) & (ep.phi_bar <= hi))),
        "log_lambda_over_beta": rate,
        "lambda_in_range": bool(-sup_abs - slack <= rate <= sup_abs + slack),
        "positive": bool(np.all(ep.phi > 0) and np.all(ep.phi_bar > 0)),
    }
