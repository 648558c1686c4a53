"""Central limit theorems side by side.

Rows of n symmetric Bernoulli(+-1/sqrt n) laws are summed classically,
booleanly, freely and c-freely; each sum is compared with its limit.
"""

from cfreeconv import CFreeGeneratorPair, LevyHincinParams
from cfreeconv.arrays import array_limit_harness, bernoulli_rows

unit = LevyHincinParams.atomic(0.0, [0.0], [1.0])
ladder = [16, 64, 256]
rows = bernoulli_rows(ladder)
rep = array_limit_harness(rows, rows, expected=CFreeGeneratorPair(unit, unit))

print("route        " + "".join(f"n={n:<10d}" for n in ladder))
for route in ("classical", "boolean", "free", "cfree_mu"):
    print(f"{route:<13}" + "".join(f"{d:<12.3e}" for d in rep.distances[route]))
print(f"gamma_n      {rep.gamma_n}")
print(f"sigma_n mass {[round(m, 4) for m in rep.sigma_mass]}")
print(f"closing identity error {rep.closing_error:.2e}, passed: {rep.passed}")
