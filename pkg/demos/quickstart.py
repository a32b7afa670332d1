"""Solve a random TSP and a random CVRP, and check the TSP against the exact optimum.

Run with ``python3 demos/quickstart.py``; takes a few seconds.
"""
from l2gls import GenSpec, SearchConfig, exact_tsp, generate_cvrp, generate_uniform_tsp, solve
from l2gls.instance import CustomerMode, DepotMode

# Twenty uniform points in the unit square.  Small enough that Held-Karp
# gives us the true optimum to compare against.
tsp = generate_uniform_tsp(20, seed=1)
res = solve(tsp, SearchConfig(max_steps=5000, seed=0))
opt, _ = exact_tsp(tsp)
print(f"TSP20   best {res.best_cost:.4f}   optimum {opt:.4f}   gap {100 * (res.best_cost / opt - 1):.3f}%")
print(f"        {res.steps_executed} steps, {res.penalty_events} penalty events, {res.wall_time:.2f}s")
print("        tour", res.best_solution.order)

# A CVRP with clustered customers and a central depot.  n counts customers.
cvrp = generate_cvrp(GenSpec(30, seed=2, depot_mode=DepotMode.CENTRAL, customer_mode=CustomerMode.CLUSTERED))
res = solve(cvrp, SearchConfig(max_steps=5000, seed=0))
print(f"\nCVRP30  best {res.best_cost:.4f}   capacity {cvrp.capacity}")
for k, route in enumerate(res.best_solution.routes):
    load = int(cvrp.demands[route].sum())
    print(f"        route {k}: load {load:3d}  {route}")
