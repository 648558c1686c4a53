"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from cfreeconv import cli
from cfreeconv.arrays import array_limit_harness, bernoulli_rows, poisson_rows
from cfreeconv.convolution import (CFreePair, boolean_conv, cfree_conv, classical_conv, free_conv,
                                   free_subordination)
from cfreeconv.expr import ParseError, parse
from cfreeconv.infdiv import (CFreeGeneratorPair, LevyHincinParams, boolean_id_law, cfree_limit_law,
                              check_infdiv, classical_id_law, extract_generators, free_id_law, nevanlinna_E,
                              semigroup_at)
from cfreeconv.measure import (AffineMap, Measure, arcsine, bernoulli_sym, default_ladder, free_poisson,
                               gaussian, inversion_grid, l1_density_error, levy_distance, moment, point_mass,
                               semicircle, stieltjes_invert)
from cfreeconv.oracle import atomic_moments, catalan, cfree_moments, nc_partitions
from cfreeconv.stable import StableFunction, check_stability, make_stable_pair, phi_covariance_error
from cfreeconv.transforms import cauchy_G, e_transform, f_transform, invert_F, make_context

UNIT = LevyHincinParams.atomic(0.0, [0.0], [1.0])
POISSON = LevyHincinParams.atomic(0.5, [1.0], [0.5])
GAUSS_GEN = CFreeGeneratorPair(UNIT, UNIT)
POISSON_GEN = CFreeGeneratorPair(POISSON, POISSON)
LADDER = [16, 64, 256]


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def families():
    return {
        "delta": point_mass(0.3),
        "bernoulli": bernoulli_sym(1.0),
        "semicircle": semicircle(0.0, 2.0),
        "arcsine": arcsine(0.0, 2.0),
        "gaussian": gaussian(0.0, 1.0),
        "free_poisson": free_poisson(0.4),
    }


def nonincreasing(xs, slack=1e-9):
    return all(b <= a + slack for a, b in zip(xs, xs[1:]))


def test_criterion_01_transform_axioms(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    bad = []
    for name, m in families().items():
        z = rng.uniform(-5, 5, 100) + 1j * rng.uniform(1e-3, 5, 100)
        g, f, e = cauchy_G(m, z), f_transform(m, z), e_transform(m, z)
        if np.any(g.imag > 0) or np.any(f.imag < z.imag * (1 - 1e-12)) or np.any(e.imag > 1e-12 * np.abs(z)):
            bad.append(name)
        y = 1e3
        if abs(f_transform(m, 1j * y) / (1j * y) - 1) > 0.05:
            bad.append(name + " (large y)")
    dt = time.perf_counter() - t0
    report(1, not bad and dt < 10, f"6 families x 100 points, violations {bad or 'none'}, {dt:.2f} s")


def test_criterion_02_inversion_round_trips(report):
    worst_l1, worst_atom, worst_f = 0.0, 0.0, 0.0
    fam = families()
    for name in ("delta", "bernoulli", "semicircle", "arcsine"):
        m = fam[name]
        window, n = inversion_grid(m)
        back = stieltjes_invert(m.cauchy, window, n)
        worst_l1 = max(worst_l1, l1_density_error(back, m))
        want = dict(m.atoms)
        got = dict(back.atoms)
        if len(got) != len(want):
            worst_atom = math.inf
        for (x, w), (xb, wb) in zip(sorted(want.items()), sorted(got.items())):
            worst_atom = max(worst_atom, abs(w - wb), abs(x - xb))
    rng = np.random.default_rng(2)
    for m in fam.values():
        ctx = make_context(m)
        w = ctx.cone.sample(rng, 100)
        worst_f = max(worst_f, float(np.max(np.abs(f_transform(m, invert_F(ctx, w)) - w))))
    ok = worst_l1 <= 1e-2 and worst_atom <= 1e-3 and worst_f <= 1e-10
    report(2, ok, f"L1 {worst_l1:.2e}, atom error {worst_atom:.2e}, invert_F residual {worst_f:.2e}")


def test_criterion_03_subordination_contract(report):
    pairs = [
        (bernoulli_sym(1), bernoulli_sym(1)),
        (semicircle(0, 2), semicircle(0, 2)),
        (bernoulli_sym(1), Measure.atomic([-0.5, 2.0], [0.7, 0.3])),
        (gaussian(0, 1), arcsine(0, 2)),
        (free_poisson(1.0), semicircle(0.5, 1.0)),
    ]
    worst = 0.0
    for n1, n2 in pairs:
        lo = n1.support()[0] + n2.support()[0] - 1
        hi = n1.support()[1] + n2.support()[1] + 1
        x = np.linspace(lo, hi, 2048)
        for y in default_ladder((lo, hi), 2048):
            z = x + 1j * y
            w1, w2 = free_subordination(n1, n2, z)
            worst = max(worst, float(np.max(np.abs(f_transform(n1, w1) - f_transform(n2, w2)))))
    report(3, worst <= 1e-10, f"max |F1(w1) - F2(w2)| over 5 pairs x 2048 x 3 ladder heights: {worst:.2e}")


def test_criterion_04_reductions(report):
    a, b = bernoulli_sym(1), Measure.atomic([-1.0, 0.5, 2.0], [0.3, 0.5, 0.2])
    s = semicircle(0.3, 1.0)
    d = point_mass(0)
    boolean = cfree_conv(CFreePair(a, d), CFreePair(b, d))
    e1 = levy_distance(boolean.mu, boolean_conv(a, b))
    free = cfree_conv(CFreePair(a, a), CFreePair(s, s))
    f_ref = free_conv(a, s)
    e2 = max(levy_distance(free.mu, f_ref), levy_distance(free.nu, f_ref))
    neutral = cfree_conv(CFreePair(b, s), CFreePair(d, d))
    e3 = max(levy_distance(neutral.mu, b), levy_distance(neutral.nu, s),
             levy_distance(boolean_conv(b, d), b), levy_distance(free_conv(s, d), s),
             levy_distance(classical_conv(b, d), b))
    ok = e1 <= 1e-3 and e2 <= 1e-3 and e3 <= 1e-3
    report(4, ok, f"boolean reduction {e1:.2e}, free reduction {e2:.2e}, neutral element {e3:.2e}")


def test_criterion_05_oracle(report):
    catalan_ok = all(len(nc_partitions(n)) == catalan(n) for n in range(1, 9))
    rng = np.random.default_rng(20260417)

    def rat():
        k = int(rng.integers(1, 4))
        w = rng.uniform(0.1, 1.0, k)
        return Measure.atomic(rng.uniform(-2, 2, k), w / w.sum())

    def am(m):
        return atomic_moments(m.atom_loc, m.atom_mass, 6)

    worst = 0.0
    for _ in range(10):
        p1, p2 = CFreePair(rat(), rat()), CFreePair(rat(), rat())
        c = cfree_conv(p1, p2)
        want = np.array(cfree_moments(am(p1.mu), am(p1.nu), am(p2.mu), am(p2.nu)))
        got = np.array([moment(c.mu, k) for k in range(7)])
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1.0))))
    ok = catalan_ok and worst <= 1e-3
    report(5, ok, f"NC counts = Catalan for n <= 8: {catalan_ok}; worst relative moment error {worst:.2e}")


@pytest.fixture(scope="module")
def gaussian_run():
    t0 = time.perf_counter()
    rows = bernoulli_rows(LADDER)
    rep = array_limit_harness(rows, rows, expected=GAUSS_GEN)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def poisson_run():
    rows = poisson_rows(LADDER)
    return array_limit_harness(rows, rows, expected=POISSON_GEN)


def test_criterion_06_gaussian_harness(report, gaussian_run):
    rep, dt = gaussian_run
    # the comparison targets are the generator laws; pin them to the closed forms
    targets = [levy_distance(boolean_id_law(UNIT), bernoulli_sym(1)),
               levy_distance(free_id_law(UNIT), semicircle(0, 2)),
               levy_distance(classical_id_law(UNIT), gaussian(0, 1))]
    routes = {k: rep.distances[k] for k in ("boolean", "free", "classical")}
    ok = max(targets) <= 1e-3
    ok &= all(d[-1] <= 0.05 and nonincreasing(d) for d in routes.values())
    ok &= max(abs(g) for g in rep.gamma_n) <= 1e-6
    ok &= rep.sigma_mass == sorted(rep.sigma_mass) and abs(rep.sigma_mass[-1] - 1) <= 0.01
    ok &= rep.sigma_radius == sorted(rep.sigma_radius, reverse=True) and rep.sigma_radius[-1] <= 0.1
    ok &= rep.distances["cfree_mu"][-1] <= 0.05 and rep.distances["cfree_nu"][-1] <= 0.05
    ok &= rep.closing_error <= 1e-2 and dt < 120
    detail = (f"routes at n=256 boolean {routes['boolean'][-1]:.2e}, free {routes['free'][-1]:.2e}, "
              f"classical {routes['classical'][-1]:.2e}; c-free {rep.distances['cfree_mu'][-1]:.2e}; "
              f"sigma mass {rep.sigma_mass[-1]:.4f}, radius {rep.sigma_radius[-1]:.4f}; "
              f"closing {rep.closing_error:.2e}; {dt:.1f} s")
    report(6, ok, detail)


def test_criterion_07_poisson_harness(report, poisson_run):
    rep = poisson_run
    g, mass = rep.gamma_n[-1], rep.sigma_mass[-1]
    ok = abs(g - 0.5) <= 0.02 and abs(mass - 0.5) <= 0.02
    report(7, ok, f"n=256: gamma_n {g:.5f}, sigma_n mass {mass:.5f}; harness failures {rep.failures or 'none'}")


def test_criterion_08_infdiv_triangle(report):
    out = []
    ok = True
    for name, gen in (("gaussian", GAUSS_GEN), ("poisson", POISSON_GEN)):
        pair = cfree_limit_law(gen)
        r = check_infdiv(pair)
        half = semigroup_at(gen, 0.5)
        both, one = cfree_conv(half, half), semigroup_at(gen, 1.0)
        semi = max(levy_distance(both.mu, one.mu), levy_distance(both.nu, one.nu))
        g, _ = extract_generators(pair)
        dg = max(abs(g.first.gamma - gen.first.gamma), abs(g.second.gamma - gen.second.gamma))
        ds = max(levy_distance(g.first.sigma.normalized(), gen.first.sigma.normalized()),
                 levy_distance(g.second.sigma.normalized(), gen.second.sigma.normalized()))
        dm = max(abs(g.first.sigma.total_mass - gen.first.sigma.total_mass),
                 abs(g.second.sigma.total_mass - gen.second.sigma.total_mass))
        ok &= r.accepted and r.residual <= 1e-4 and semi <= 1e-3 and dg <= 0.02 and ds <= 0.05 and dm <= 0.05
        out.append(f"{name}: fit {r.residual:.1e}, semigroup {semi:.1e}, |dgamma| {dg:.1e}, sigma Lévy {ds:.1e}")
    report(8, ok, "; ".join(out))


def test_criterion_09_array_limits_are_infdiv(report, gaussian_run, poisson_run):
    out = []
    ok = True
    for name, rep in (("gaussian", gaussian_run[0]), ("poisson", poisson_run)):
        # Phi of the route (1) pairs extrapolated to k_n -> infinity, fitted at 1e-4
        ok &= rep.phi_fit_residual <= 1e-4
        # the limit law generated by the extrapolated row parameters
        law = check_infdiv(cfree_limit_law(rep.generators))
        ok &= law.accepted
        finite = check_infdiv(rep.limit_pair).residual
        out.append(f"{name}: extrapolated Phi fit {rep.phi_fit_residual:.1e}, "
                   f"limit law fit {law.residual:.1e} (n=256 pair itself {finite:.1e})")
    report(9, ok, "; ".join(out))


def test_criterion_10_stability(report):
    catalogue = [
        StableFunction("constant", 3.0, 0.0),
        StableFunction("constant", -1.0, -2.0),
        StableFunction("power_high", 0.0, 1.0, 2.0),
        StableFunction("power_high", 0.5, complex(math.cos(-0.9), math.sin(-0.9)) * 2, 1.5),
        StableFunction("power_low", 0.2, -1.0, 0.5),
        StableFunction("power_low", 0.0, complex(math.cos(-2.5), math.sin(-2.5)), 0.3),
        StableFunction("log", 1.0 - 0.5j, -1.0),
    ]
    worst = max(check_stability(f, a).residual for f in catalogue for a in (0.5, 1.0, 2.0))
    p = LevyHincinParams.atomic(0.0, [-1.0, 2.0], [0.6, 0.4])
    rejected = check_stability(lambda z: nevanlinna_E(p, z), 2.0).residual
    inv = StableFunction("power_high", 0.0, 1.0, 2.0)
    pair = make_stable_pair(inv, inv)
    cov = max(phi_covariance_error(pair, AffineMap(2.0, 0.0)), phi_covariance_error(pair, AffineMap(0.5, 0.3)))
    ref = cfree_limit_law(GAUSS_GEN)
    dist = max(levy_distance(pair.mu, ref.mu), levy_distance(pair.nu, ref.nu))
    ok = worst <= 1e-10 and rejected > 1e-3 and cov <= 1e-6 and dist <= 1e-2
    report(10, ok, f"catalogue residual {worst:.1e}, non-catalogue {rejected:.2f}, covariance {cov:.1e}, "
                   f"stable Gaussian pair Lévy {dist:.1e}")


def test_criterion_11_cli(report, tmp_path, capsys):
    cmd = [sys.executable, "-m", "cfreeconv", "convolve",
           "cfconv(pair(bernoulli(1), semicircle(0, 1)), pair(bernoulli(1), semicircle(0, 1)))", "--grid-n", "512"]
    runs = [subprocess.run(cmd, capture_output=True, check=True).stdout for _ in range(2)]
    identical = runs[0] == runs[1] and len(runs[0]) > 0
    malformed = [("fconv(semicircle(0,2)", (1, 22)), ("fconv(semicirc(0,2), delta(0))", (1, 7)),
                 ("pair(delta(0))", (1, 1)), ("fconv(delta(0),, delta(1))", (1, 16)),
                 ("fconv(\n  semicircle(0, 2),\n  bernoulli(1) x)", (3, 16))]
    positions = []
    for src, want in malformed:
        try:
            parse(src)
            positions.append(False)
        except ParseError as e:
            positions.append((e.line, e.col) == want)
    heavy = tmp_path / "heavy.json"
    heavy.write_text(json.dumps({"phi": {"family": "constant", "a": 0, "b": 0},
                                 "psi": {"family": "power_low", "a": 0, "b": -1, "alpha": 0.3}}))
    codes = {
        0: cli.main(["density", "delta(1)"]),
        2: cli.main(["density", "fconv(semicircle(0,2)"]),
        3: cli.main(["stable", "construct", str(heavy)]),
        4: cli.main(["density", "semicircle(0, -1)"]),
    }
    capsys.readouterr()
    codes_ok = all(k == v for k, v in codes.items())
    ok = identical and all(positions) and codes_ok
    report(11, ok, f"byte-identical {identical}, error positions {sum(positions)}/5, exit codes {codes}")
