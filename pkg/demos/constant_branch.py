"""Continue the constant branch on the L=2 dumbbell and classify its first two branch points."""
import numpy as np

from qgraph.classify import classify, compute_thetas
from qgraph.continuation import continue_branch, polish_branch_point, seed_point
from qgraph.discretize import constant_solution, make_system
from qgraph.graphs import build_dumbbell
from qgraph.spectrum import first_mode

L = 2.0
sys = make_system(build_dumbbell(L), 0.05)
lam0 = -0.01
seed = seed_point(sys, np.full(sys.size, constant_solution(lam0)), lam0, -1.0)
branch = continue_branch(sys, seed, -1.0, (-0.5, 0.0), ds=0.01, origin="constant")

print(f"{len(branch.points)} points, lambda from {branch.points[0].lam:.3f} to {branch.points[-1].lam:.3f}")
for family in ("odd", "even"):
    k = first_mode(L, family)
    print(f"first {family} mode k = {k:.9f}, predicted crossing at {-k * k / 2:.6f}")

for bp in branch.events_tagged("branch_point")[:2]:
    u, lam = polish_branch_point(sys, sys.from_function(bp.solution), bp.lam)
    th = compute_thetas(sys, u, lam)
    c = classify(th)
    print(f"branch point at {lam:.6f}: {c.kind}; Theta = " + ", ".join(f"{t:+.3e}" for t in th.thetas))
