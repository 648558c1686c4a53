"""Stable analytic functions and the stable pair they generate."""

import math

from cfreeconv import StableFunction, check_stability, make_stable_pair
from cfreeconv.measure import AffineMap
from cfreeconv.stable import phi_covariance_error

funcs = [
    StableFunction("power_high", 0.0, 1.0, 2.0),
    StableFunction("power_high", 0.0, complex(math.cos(-0.4), math.sin(-0.4)), 1.5),
    StableFunction("power_low", 0.0, -1.0, 0.5),
    StableFunction("log", -0.5j, -1.0),
]
for f in funcs:
    r = check_stability(f, 2.0)
    print(f"{f.family:<11} alpha={f.alpha}  b={r.b:.6f}  c={r.c:+.6f}  residual={r.residual:.1e}")

inv = funcs[0]
pair = make_stable_pair(inv, inv)
print(f"pair from 1/z: nu support {pair.nu.support()}, mu support {pair.mu.support()}")
print(f"Phi covariance under t -> 2t: {phi_covariance_error(pair, AffineMap(2.0, 0.0)):.1e}")
