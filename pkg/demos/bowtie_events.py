"""Bifurcations of the bowtie self-trapping lattice and the fixed-point threshold on S2."""
from qgraph.bowtie import circle_hyperbola_fixed_points, dst_branch_events, threshold_R

for ev in dst_branch_events():
    print(f"{ev.kind:>13s}  branches {ev.branches}  omega = {ev.omega:+.9f}  Q = {ev.Q:.9f}")

r_star = threshold_R()
print(f"\nfixed points on the sphere change from 2 to 4 at R* = {r_star:.12f}")
for R in (5.0, 10.0, 16.0):
    pts = circle_hyperbola_fixed_points(R)
    print(f"R = {R:5.1f}: " + ", ".join(f"({x:+.4f}, {z:+.4f})" for x, z in pts))
