import pytest

from zerotemp.grid import make_grid
from zerotemp.potentials import builtin, constant, perturb_poly
from zerotemp.transfer import leading_eigenpair
from zerotemp.tropical import BACKWARD, FORWARD, calibrated_subaction, karp_value

BETAS = (4.0, 8.0, 16.0, 32.0)


@pytest.fixture(scope="session")
def g201():
    return make_grid(201)


@pytest.fixture(scope="session")
def g101():
    return make_grid(101)


@pytest.fixture(scope="session")
def pots():
    return {
        "product": builtin("product"),
        "quadratic": builtin("quadratic"),
        "xy_cosine": builtin("xy_cosine"),
        "perturbed_quadratic": perturb_poly(builtin("quadratic"), [0.0, 0.1]),
        "zero": constant(0.0),
        "const": constant(0.7),
    }


@pytest.fixture(scope="session")
def eigen(g201, pots):
    """Lazily solved eigenpairs keyed by (potential name, beta)."""
    cache = {}

    def get(name, beta):
        key = (name, float(beta))
        if key not in cache:
            cache[key] = leading_eigenpair(beta, pots[name], g201)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def zero_temp(g201, pots):
    cache = {}

    def get(name):
        if name not in cache:
            A = pots[name]
            k = karp_value(A, g201)
            cache[name] = {
                "karp": k,
                "m": k["m"],
                "V": calibrated_subaction(A, g201, k["m"], FORWARD),
                "Vbar": calibrated_subaction(A, g201, k["m"], BACKWARD),
            }
        return cache[name]

    return get
