"""The c-free Poisson law: build it from its generators, certify it and
read the generators back off the semigroup."""

import numpy as np

from cfreeconv import CFreeGeneratorPair, LevyHincinParams, cfree_limit_law, check_infdiv, extract_generators

poisson = LevyHincinParams.atomic(0.5, [1.0], [0.5])
pair = cfree_limit_law(CFreeGeneratorPair(poisson, poisson))

for name, m in (("mu", pair.mu), ("nu", pair.nu)):
    print(f"{name}: atoms {[(round(x, 6), round(w, 6)) for x, w in m.atoms]}, "
          f"density mass {m.density_mass:.6f}")
x = np.linspace(0.0, 4.0, 9)
print("mu density on", x)
print(np.round(pair.mu.density_at(x), 5))

rep = check_infdiv(pair)
print(f"Nevanlinna fit residual {rep.residual:.2e}, accepted {rep.accepted}")
gen, drift = extract_generators(pair)
print(f"recovered gamma {gen.first.gamma:.4f}, sigma mass {gen.first.sigma.total_mass:.4f} "
      f"(ladder drift {drift:.1e})")
