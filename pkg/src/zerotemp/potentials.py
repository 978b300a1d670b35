"""Potentials A(x, y) on [0, 1]^2 with analytic derivatives.

All callables are vectorized: they accept numpy arrays that broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .grid import Grid

TWO_PI = 2.0 * math.pi

Fn2 = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Potential:
    name: str
    eval: Fn2
    d_x: Fn2
    d_y: Fn2
    d_xy: Fn2
    lip: float

    def __call__(self, x, y):
        return self.eval(x, y)

    def matrix(self, g: Grid) -> np.ndarray:
        """A(x_i, y_j) on the grid product, rows indexed by x."""
        return np.asarray(
            self.eval(g.nodes[:, None], g.nodes[None, :]) + np.zeros((g.n, g.n)), dtype=float
        )

    def transpose(self) -> "Potential":
        return Potential(
            name=f"{self.name}^T",
            eval=lambda x, y: self.eval(y, x),
            d_x=lambda x, y: self.d_y(y, x),
            d_y=lambda x, y: self.d_x(y, x),
            d_xy=lambda x, y: self.d_xy(y, x),
            lip=self.lip,
        )


def _const(c):
    return lambda x, y: c + 0.0 * (np.asarray(x) + np.asarray(y))


def constant(c: float = 0.0) -> Potential:
    """A(x, y) = c. Rank-one kernel; useful as a degenerate baseline."""
    return Potential(f"constant({c})", _const(c), _const(0.0), _const(0.0), _const(0.0), 0.0)


def _product(params):
    return Potential(
        "product",
        eval=lambda x, y: x * y,
        d_x=lambda x, y: y + 0.0 * x,
        d_y=lambda x, y: x + 0.0 * y,
        d_xy=_const(1.0),
        lip=math.sqrt(2.0),
    )


def _quadratic(params):
    return Potential(
        "quadratic",
        eval=lambda x, y: -((x - y) ** 2),
        d_x=lambda x, y: -2.0 * (x - y),
        d_y=lambda x, y: 2.0 * (x - y),
        d_xy=_const(2.0),
        lip=2.0 * math.sqrt(2.0),
    )


def _xy_cosine(params):
    return Potential(
        "xy_cosine",
        eval=lambda x, y: np.cos(TWO_PI * (x - y)),
        d_x=lambda x, y: -TWO_PI * np.sin(TWO_PI * (x - y)),
        d_y=lambda x, y: TWO_PI * np.sin(TWO_PI * (x - y)),
        d_xy=lambda x, y: TWO_PI**2 * np.cos(TWO_PI * (x - y)),
        lip=TWO_PI * math.sqrt(2.0),
    )


def _xy_cosine_magnetic(params):
    (l,) = params
    # |grad A|^2 = (2pi)^2 [(s + l sin(2pi x))^2 + s^2], s = sin(2pi(x-y)); bounded by s = +-1
    lip = TWO_PI * math.sqrt((1.0 + abs(l)) ** 2 + 1.0)
    return Potential(
        f"xy_cosine_magnetic({l})",
        eval=lambda x, y: np.cos(TWO_PI * (x - y)) + l * np.cos(TWO_PI * x),
        d_x=lambda x, y: -TWO_PI * np.sin(TWO_PI * (x - y)) - l * TWO_PI * np.sin(TWO_PI * x),
        d_y=lambda x, y: TWO_PI * np.sin(TWO_PI * (x - y)),
        d_xy=lambda x, y: TWO_PI**2 * np.cos(TWO_PI * (x - y)),
        lip=lip,
    )


_BUILTINS = {
    "product": (_product, 0),
    "quadratic": (_quadratic, 0),
    "xy_cosine": (_xy_cosine, 0),
    "xy_cosine_magnetic": (_xy_cosine_magnetic, 1),
}


def builtin(name: str, params=()) -> Potential:
    if name not in _BUILTINS:
        raise InvalidArgument(f"unknown potential {name!r}; choose from {sorted(_BUILTINS)}")
    factory, arity = _BUILTINS[name]
    params = list(params or [])
    if len(params) != arity:
        raise InvalidArgument(f"potential {name!r} takes {arity} parameter(s), got {len(params)}")
    return factory([float(p) for p in params])


def perturb(A: Potential, f, df, sup_df: float | None = None, label: str = "f") -> Potential:
    """A(x, y) + f(x). ``sup_df`` defaults to a scan of |f'| on 10001 points."""
    if sup_df is None:
        sup_df = float(np.max(np.abs(df(np.linspace(0.0, 1.0, 10001)))))
    return Potential(
        name=f"{A.name}+{label}",
        eval=lambda x, y: A.eval(x, y) + f(x),
        d_x=lambda x, y: A.d_x(x, y) + df(x),
        d_y=A.d_y,
        d_xy=A.d_xy,
        lip=A.lip + sup_df,
    )


def polynomial(coeffs):
    """f(x) = sum c_k x^k and its derivative, plus sup |f'| on [0, 1]."""
    c = np.asarray(coeffs, dtype=float)
    f = np.polynomial.Polynomial(c)
    df = f.deriv()
    # |f'| attains its sup at an endpoint or a critical point of f'
    cand = [0.0, 1.0] + [r.real for r in df.deriv().roots() if abs(r.imag) < 1e-12 and 0 <= r.real <= 1]
    sup_df = max(abs(float(df(t))) for t in cand) if len(c) > 1 else 0.0
    return (lambda x: f(x) + 0.0 * x), (lambda x: df(x) + 0.0 * x), sup_df


def perturb_poly(A: Potential, coeffs) -> Potential:
    f, df, sup_df = polynomial(coeffs)
    if not np.any(np.asarray(coeffs, dtype=float)):
        sup_df = 0.0
    return perturb(A, f, df, sup_df=sup_df, label=f"poly{list(map(float, coeffs))}")


def twist_report(A: Potential, g: Grid) -> dict:
    dxy = np.asarray(A.d_xy(g.nodes[:, None], g.nodes[None, :]) + np.zeros((g.n, g.n)))
    lo, hi = float(dxy.min()), float(dxy.max())
    is_twist = lo > 0 or hi < 0
    sign = "+" if lo > 0 else "-" if hi < 0 else "0"
    return {"min_dxy": lo, "max_dxy": hi, "is_twist": bool(is_twist), "sign": sign}


def check_derivatives(A: Potential, n_points=100, step=1e-5, tol=1e-4, seed=0) -> float:
    """Largest central-difference mismatch of d_x, d_y, d_xy at random interior points.

    Raises InvalidArgument when it exceeds ``tol``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(step, 1 - step, n_points)
    y = rng.uniform(step, 1 - step, n_points)
    fd_x = (A.eval(x + step, y) - A.eval(x - step, y)) / (2 * step)
    fd_y = (A.eval(x, y + step) - A.eval(x, y - step)) / (2 * step)
    fd_xy = (A.d_x(x, y + step) - A.d_x(x, y - step)) / (2 * step)
    err = max(
        float(np.max(np.abs(fd_x - A.d_x(x, y)))),
        float(np.max(np.abs(fd_y - A.d_y(x, y)))),
        float(np.max(np.abs(fd_xy - A.d_xy(x, y)))),
    )
    if err > tol:
        raise InvalidArgument(f"derivatives of {A.name} fail finite-difference check: {err:.3e}")
    return err


def from_config(cfg: dict) -> Potential:
    """Build from ``{"potential": {...}, "perturbation": {"poly": [...]}}``."""
    p = cfg["potential"]
    A = builtin(p["name"], p.get("params", []))
    poly = (cfg.get("perturbation") or {}).get("poly")
    if poly:
        A = perturb_poly(A, poly)
    return A
