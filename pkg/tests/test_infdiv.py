import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given
from hypothesis import strategies as st

from cfreeconv.convolution import CFreePair, boolean_conv, cfree_conv, classical_conv, free_conv
from cfreeconv.errors import PreconditionError
from cfreeconv.infdiv import (CFreeGeneratorPair, LevyHincinParams, boolean_id_law, cfree_limit_law,
                              check_infdiv, classical_id_law, extract_generators, free_F, free_id_law,
                              nevanlinna_E, semigroup_at)
from cfreeconv.measure import (Measure, bernoulli_sym, gaussian, levy_distance, moment, point_mass,
                               semicircle)
from cfreeconv.oracle import moments_from_free_cumulants
from cfreeconv.transforms import cauchy_G, moments_from_transform

ZERO = LevyHincinParams.zero()
UNIT = LevyHincinParams.atomic(0.0, [0.0], [1.0])
POISSON = LevyHincinParams.atomic(0.5, [1.0], [0.5])
GAUSS_GEN = CFreeGeneratorPair(UNIT, UNIT)
POISSON_GEN = CFreeGeneratorPair(POISSON, POISSON)


def normalized(m):
    return m.scaled(1.0 / m.total_mass)


@pytest.fixture(scope="module")
def gauss_pair():
    return cfree_limit_law(GAUSS_GEN)


@pytest.fixture(scope="module")
def poisson_pair():
    return cfree_limit_law(POISSON_GEN)


def test_nevanlinna_examples():
    assert nevanlinna_E(ZERO, 1 + 1j) == 0
    assert nevanlinna_E(UNIT, 0.3 + 2j) == pytest.approx(1 / (0.3 + 2j))
    p = LevyHincinParams.atomic(1.0, [1.0], [1.0])
    assert nevanlinna_E(p, 2j) == pytest.approx(1 + (3 - 4j) / 5)
    with pytest.raises(PreconditionError):
        nevanlinna_E(UNIT, 1.0 + 0j)


@given(st.floats(-2, 2), st.lists(st.tuples(st.floats(-3, 3), st.floats(0.01, 2)), min_size=1, max_size=4),
       st.floats(-5, 5), st.floats(0.01, 5))
def test_nevanlinna_maps_to_lower_half_plane(gamma, atoms, x, y):
    locs, masses = zip(*atoms)
    p = LevyHincinParams.atomic(gamma, locs, masses)
    assert nevanlinna_E(p, complex(x, y)).imag <= 1e-12


def test_nevanlinna_density_sigma_matches_atoms():
    sigma = Measure.create(density=(-1.0, 2.0 / 2047, np.ones(2048) * 0.25))
    z = np.array([0.5 + 1j, -2 + 0.5j])
    t = np.linspace(-1, 1, 200001)
    want = [trapezoid((1 + t * zz) / (zz - t) * 0.25, t) for zz in z]
    assert nevanlinna_E(LevyHincinParams(0.0, sigma), z) == pytest.approx(want, abs=1e-6)


def test_boolean_laws():
    assert boolean_id_law(ZERO).atoms == [(0.0, 1.0)]
    assert boolean_id_law(LevyHincinParams.atomic(1.5)).atoms == [(1.5, 1.0)]
    b = boolean_id_law(UNIT)
    assert [x for x, _ in b.atoms] == pytest.approx([-1, 1], abs=1e-9)
    assert [w for _, w in b.atoms] == pytest.approx([0.5, 0.5], abs=1e-6)


def test_free_laws():
    assert free_id_law(ZERO).atoms == [(0.0, 1.0)]
    assert levy_distance(free_id_law(UNIT), semicircle(0, 2)) <= 1e-3
    # F^{-1}(z) - z = z/(z - 1): every free cumulant is 1
    want = moments_from_free_cumulants([1, 1, 1, 1], 4)
    G = lambda z: 1.0 / free_F(POISSON, z)  # noqa: E731
    assert moments_from_transform(G, 4, 8.0) == pytest.approx(want, rel=1e-9)
    # the inverted law carries the x**-1/2 edge at 0, resolved to a few 1e-3
    p = free_id_law(POISSON)
    assert [moment(p, k) for k in range(5)] == pytest.approx(want, rel=5e-3)


def test_free_F_round_trip():
    z = np.array([0.3 + 1j, -1 + 2j, 2 + 3j])
    w = free_F(POISSON, z)
    assert np.max(np.abs(w + nevanlinna_E(POISSON, w) - z)) <= 1e-10


def test_classical_laws():
    assert classical_id_law(ZERO).atoms == [(0.0, 1.0)]
    assert classical_id_law(LevyHincinParams.atomic(-0.7)).atoms == [(-0.7, 1.0)]
    assert levy_distance(classical_id_law(UNIT), gaussian(0, 1)) <= 1e-3


def test_classical_poisson_is_compound_poisson():
    # sigma = (1/2) delta_1 means rate 1 at jump 1 with drift gamma - 1/2
    law = classical_id_law(POISSON)
    for k in range(4):
        assert dict((round(x, 9), w) for x, w in law.atoms)[float(k)] == pytest.approx(
            math.exp(-1) / math.factorial(k), abs=1e-12)


def test_classical_density_sigma_moments():
    sigma = Measure.create(density=(-0.5, 1.0 / 1023, np.full(1024, 0.4)))
    law = classical_id_law(LevyHincinParams(0.2, sigma))
    # mean = gamma + int x dsigma, variance = int (1 + x^2) dsigma
    t = np.linspace(-0.5, 0.5, 100001)
    mean = 0.2 + trapezoid(t * 0.4, t)
    var = trapezoid((1 + t * t) * 0.4, t)
    assert moment(law, 1) == pytest.approx(mean, abs=2e-3)
    assert moment(law, 2) - moment(law, 1) ** 2 == pytest.approx(var, rel=5e-3)


@pytest.mark.parametrize("law, conv", [(boolean_id_law, boolean_conv), (free_id_law, free_conv),
                                       (classical_id_law, classical_conv)])
def test_generator_additivity(law, conv):
    p1 = LevyHincinParams.atomic(0.3, [0.0], [0.5])
    p2 = LevyHincinParams.atomic(-0.1, [1.0, -0.5], [0.3, 0.2])
    assert levy_distance(law(p1 + p2), conv(law(p1), law(p2))) <= 1e-3


def test_cfree_limit_trivial():
    pair = cfree_limit_law(CFreeGeneratorPair(ZERO, ZERO))
    assert pair.mu.atoms == [(0.0, 1.0)] and pair.nu.atoms == [(0.0, 1.0)]


def test_weak_law_reading():
    pair = cfree_limit_law(CFreeGeneratorPair(ZERO, UNIT))
    assert pair.mu.atoms == [(0.0, 1.0)]
    assert cfree_limit_law(CFreeGeneratorPair(UNIT, UNIT)).mu.atoms != [(0.0, 1.0)]


def test_cfree_gaussian_closed_form(gauss_pair):
    z = np.array([0.5 + 1j, -1 + 0.5j, 2j])
    F_sc = 1.0 / cauchy_G(semicircle(0, 2), z)
    want = 1.0 / (z - 1.0 / F_sc)
    assert cauchy_G(gauss_pair.mu, z) == pytest.approx(want, abs=1e-5)


def test_semigroup_endpoints(gauss_pair):
    p0 = semigroup_at(GAUSS_GEN, 0.0)
    assert p0.mu.atoms == [(0.0, 1.0)] and p0.nu.atoms == [(0.0, 1.0)]
    p1 = semigroup_at(GAUSS_GEN, 1.0)
    assert levy_distance(p1.mu, gauss_pair.mu) <= 1e-3
    with pytest.raises(PreconditionError):
        semigroup_at(GAUSS_GEN, -1.0)


@pytest.mark.parametrize("gen", [GAUSS_GEN, POISSON_GEN], ids=["gaussian", "poisson"])
def test_semigroup_law(gen):
    half = semigroup_at(gen, 0.5)
    both = cfree_conv(half, half)
    one = semigroup_at(gen, 1.0)
    assert levy_distance(both.mu, one.mu) <= 1e-3
    assert levy_distance(both.nu, one.nu) <= 1e-3


@pytest.mark.parametrize("name", ["gauss_pair", "poisson_pair"])
def test_limit_laws_pass_check(name, request):
    pair = request.getfixturevalue(name)
    gen = GAUSS_GEN if name == "gauss_pair" else POISSON_GEN
    rep = check_infdiv(pair)
    assert rep.accepted and rep.residual <= 1e-4
    assert rep.gamma == pytest.approx(gen.first.gamma, abs=0.02)
    assert levy_distance(normalized(rep.sigma), normalized(gen.first.sigma)) <= 0.05


def test_check_rejects_bernoulli_over_semicircle():
    rep = check_infdiv(CFreePair(bernoulli_sym(1), semicircle(0, 2)))
    assert not rep.accepted and rep.residual > 1e-2


def test_check_accepts_equal_semicircles():
    sc = semicircle(0, 2)
    rep = check_infdiv(CFreePair(sc, sc))
    assert rep.accepted
    assert rep.gamma == pytest.approx(0, abs=1e-3)
    assert rep.sigma.total_mass == pytest.approx(1, abs=1e-3)
    assert levy_distance(normalized(rep.sigma), point_mass(0)) <= 0.05


def test_extract_trivial():
    g, _ = extract_generators(CFreePair(point_mass(0), point_mass(0)))
    for p in (g.first, g.second):
        assert p.gamma == pytest.approx(0, abs=1e-9) and p.sigma.total_mass == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("name", ["gauss_pair", "poisson_pair"])
def test_extract_recovers_generators(name, request):
    gen = GAUSS_GEN if name == "gauss_pair" else POISSON_GEN
    g, residual = extract_generators(request.getfixturevalue(name))
    for got, want in ((g.first, gen.first), (g.second, gen.second)):
        assert abs(got.gamma - want.gamma) <= 0.02
        assert got.sigma.total_mass == pytest.approx(want.sigma.total_mass, abs=0.02)
        assert levy_distance(normalized(got.sigma), normalized(want.sigma)) <= 0.05


def test_extract_refuses_uncertified_pair():
    with pytest.raises(PreconditionError):
        extract_generators(CFreePair(bernoulli_sym(1), semicircle(0, 2)))
