"""Solve the bundled TSPLIB files and report the gap to the best known tours."""
import os

from l2gls import SearchConfig, load_instance, solve

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")
BEST_KNOWN = {"eil51": 426, "pr76": 108159}

for name, best in BEST_KNOWN.items():
    inst = load_instance(os.path.join(FIXTURES, f"{name}.tsp"))
    # Coordinates are rescaled to the unit square internally; the reported
    # cost is in the file's own units with TSPLIB's rounded distances.
    res = solve(inst, SearchConfig(max_steps=20000, seed=0))
    gap = 100 * (res.best_cost - best) / best
    print(f"{name:6s} n={inst.n:3d}  best {res.best_cost:9.0f}  known {best:7d}  gap {gap:+.2f}%  {res.wall_time:.1f}s")
