import math

import numpy as np
import pytest

from zerotemp.chain import (
    build_chain,
    cylinder_measure,
    entropy_penalized,
    marginal_gap,
    mean_potential,
    sample_path,
    variational_residual,
)
from zerotemp.errors import DegenerateCylinder, InvalidArgument
from zerotemp.grid import integrate, make_grid
from zerotemp.transfer import leading_eigenpair


@pytest.fixture(scope="module")
def chains(g201, pots, eigen):
    cache = {}

    def get(name, beta):
        if (name, beta) not in cache:
            cache[name, beta] = build_chain(eigen(name, beta), pots[name], g201)
        return cache[name, beta]

    return get


@pytest.mark.parametrize("name", ["zero", "const"])
def test_trivial_chain(chains, name):
    c = chains(name, 4.0)
    assert np.allclose(c.theta, 1.0, atol=1e-13)
    assert np.allclose(c.kernel, 1.0, atol=1e-13)


@pytest.mark.parametrize("name", ["product", "quadratic", "xy_cosine", "perturbed_quadratic"])
@pytest.mark.parametrize("beta", [1.0, 4.0, 32.0])
def test_chain_invariants(chains, name, beta):
    c = chains(name, beta)
    r = c.residuals()
    assert r["row_stochasticity"] <= 1e-10
    assert r["joint_normalization"] <= 1e-10
    assert r["stationarity"] <= 1e-8
    assert np.all(c.theta > 0)


def test_entropy_zero_for_uniform_chain(chains, g201):
    assert abs(entropy_penalized(chains("zero", 2.0), g201)) <= 1e-13


@pytest.mark.parametrize("name", ["product", "quadratic", "xy_cosine"])
def test_entropy_nonpositive(chains, g201, name):
    for beta in (1.0, 4.0, 32.0):
        assert entropy_penalized(chains(name, beta), g201) <= 1e-12


def test_entropy_cross_identity(chains, eigen, g201, pots):
    # S from -int theta K log K versus log lambda - beta int A d nu
    c = chains("product", 1.0)
    ep = eigen("product", 1.0)
    direct = entropy_penalized(c, g201)
    other = ep.log_lambda - 1.0 * mean_potential(c, pots["product"], g201)
    assert abs(direct - other) <= 1e-8


def test_entropy_rejects_nonpositive_kernel(chains, g201):
    c = chains("product", 1.0)
    from dataclasses import replace

    bad = replace(c, kernel=np.where(np.eye(g201.n, dtype=bool), 0.0, c.kernel))
    with pytest.raises(InvalidArgument):
        entropy_penalized(bad, g201)


def test_variational_trivial(chains, eigen, g201, pots):
    assert variational_residual(chains("zero", 3.0), eigen("zero", 3.0), pots["zero"], g201) <= 1e-14
    assert variational_residual(chains("const", 3.0), eigen("const", 3.0), pots["const"], g201) <= 1e-12


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0, 8.0])
def test_variational_product(chains, eigen, g201, pots, beta):
    assert variational_residual(chains("product", beta), eigen("product", beta), pots["product"], g201) <= 1e-8


def test_holonomy(chains):
    c = chains("product", 4.0)
    rng = np.random.default_rng(7)
    x = c.grid.nodes
    for _ in range(20):
        a, b, f = rng.normal(size=3)
        fn = a * np.sin(3 * x + b) + f * x**2
        assert abs(marginal_gap(c, fn)) <= 1e-8


def test_cylinder_trivial(chains):
    assert cylinder_measure(chains("zero", 1.0), [(0.0, 0.5), (0.0, 0.5)])[0] == pytest.approx(0.25, abs=1e-14)
    for name in ("product", "quadratic"):
        assert cylinder_measure(chains(name, 4.0), [(0.0, 1.0)])[0] == pytest.approx(1.0, abs=1e-10)


def test_cylinder_against_double_loop(chains, g201):
    """Independent trapezoid over the square [0.5, 1]^2 written as explicit loops."""
    c = chains("product", 2.0)
    lo, hi = 100, 200
    h = 1.0 / 200
    total = 0.0
    for i in range(lo, hi + 1):
        wi = h / 2 if i in (lo, hi) else h
        for j in range(lo, hi + 1):
            wj = h / 2 if j in (lo, hi) else h
            total += wi * wj * c.theta[i] * c.kernel[i, j]
    mu, snap = cylinder_measure(c, [(0.5, 1.0), (0.5, 1.0)])
    assert snap == 0.0
    assert abs(mu - total) <= 1e-10


def test_cylinder_three_steps_matches_tensor(chains):
    c = chains("quadratic", 4.0)
    cyl = [(0.1, 0.4), (0.3, 0.7), (0.5, 0.9)]
    ws = [c.grid.sub_weights(a, b)[0] for a, b in cyl]
    brute = np.einsum("i,i,ij,j,jk,k->", ws[0], c.theta, c.kernel, ws[1], c.kernel, ws[2])
    assert cylinder_measure(c, cyl)[0] == pytest.approx(brute, rel=1e-12)


def test_cylinder_snap_and_degenerate():
    g = make_grid(11)
    from zerotemp.potentials import builtin

    c = build_chain(leading_eigenpair(1.0, builtin("product"), g), builtin("product"), g)
    _, snap = cylinder_measure(c, [(0.12, 0.5)])
    assert snap == pytest.approx(0.02)
    with pytest.raises(DegenerateCylinder):
        cylinder_measure(c, [(0.31, 0.34)])


def test_sample_uniform_chain(chains):
    path = sample_path(chains("zero", 1.0), 100_000, seed=11)
    sigma = 1 / math.sqrt(12 * 100_000)
    assert abs(path.mean() - 0.5) <= 3 * sigma


def test_sample_deterministic(chains):
    c = chains("product", 4.0)
    a = sample_path(c, 500, seed=5)
    b = sample_path(c, 500, seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_path(c, 500, seed=6))


def test_sample_occupation(chains):
    c = chains("product", 8.0)
    path = sample_path(c, 100_000, seed=3)
    w, _ = c.grid.sub_weights(0.9, 1.0)
    expected = float((w * c.theta).sum())
    assert abs(np.mean(path >= 0.9) - expected) <= 0.02


def test_m_bound_and_pressure_approach(chains, eigen, g201, pots, zero_temp):
    """int A d nu_beta <= m, and (1/beta) log lambda approaches m from below."""
    for name in ("product", "quadratic", "xy_cosine"):
        m = zero_temp(name)["m"]
        prev = -np.inf
        for beta in (4.0, 8.0, 16.0, 32.0):
            c, ep = chains(name, beta), eigen(name, beta)
            mean_a = mean_potential(c, pots[name], g201)
            S = entropy_penalized(c, g201)
            assert mean_a <= m + 1e-6
            pressure = ep.log_lambda / beta
            assert abs(pressure - mean_a - S / beta) <= 1e-9
            assert pressure <= m + 1e-6
            assert pressure >= prev - 1e-12
            prev = pressure
