import math

import numpy as np
import pytest
from hypothesis import settings

from anisoac.domain import Grid
from anisoac.energy import EnergyParams
from anisoac.integrand import Modulation, make_integrand
from anisoac.minmax import mountain_pass
from anisoac.potential import make_potential

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ANISO = [[4.0, 0.0], [0.0, 1.0]]

# criterion -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def quartic():
    return make_potential("quartic")


def aniso_params(eps, cells=(128, 128), delta=0.1, modulation=None):
    spec = make_integrand("quadratic", 2, matrix=ANISO, modulation=modulation)
    return EnergyParams(eps, delta, make_potential(), spec, Grid(cells))


def stripe_guess(p, axis=1, offsets=(0.25, 0.75)):
    """tanh stripe pair normal to ``axis`` (F(e_axis) = 1 for the fixtures used)."""
    x = p.grid.coords()[..., axis]
    a, b = offsets
    half, mid = 0.5 * (b - a), 0.5 * (a + b)
    return np.tanh((half - np.abs(x - mid)) / (math.sqrt(2) * p.epsilon))


_cache = {}


def saddle(kind, inv):
    """Min-max saddles on 128^2 with the diag(4,1) integrand, cached per session."""
    key = (kind, inv)
    if key not in _cache:
        if kind == "plain":
            p = aniso_params(1 / inv)
            res = mountain_pass(p, K=17, rounds=150, deltas=(0.05, 0.02, 0.01))
            p = p.with_delta(0.01)
        else:
            p = aniso_params(1 / inv, modulation=Modulation(0.3, (0, 1)))
            res = mountain_pass(p, K=17, rounds=80, center=0.5, anchored=True)
        _cache[key] = (res, p)
    return _cache[key]
