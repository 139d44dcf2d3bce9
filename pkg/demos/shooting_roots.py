"""Roots of the dumbbell shooting function at lambda=-1, L=2, checked on the FD grid."""
from qgraph.graphs import build_dumbbell
from qgraph.shooting import fd_oracle, find_standing_waves

lam, L = -1.0, 2.0
scan = find_standing_waves(lam, L)
g = build_dumbbell(L)
print(f"{len(scan.roots)} roots of f(q) on [0, 1.3)")
for r in scan.roots:
    rep = fd_oracle(g, r.edge_callables(), lam, 0.05)
    print(f"q = {r.q:.10f}  Q = {r.Q:.8f}  polished residual {rep.residual:.1e}")
