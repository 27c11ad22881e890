"""Coderivative of the polyhedral normal-cone map at a pushing point.

Each piece of the result is a linear image of a sign-constrained vector q;
the brute-force oracle on the graph's normal cone confirms membership for
random covectors.
"""

import numpy as np

from polysweep.variational import CoderivQuery, dstar_F, oracle_graph_normals

# x = 0 on the face {-x_1 <= 0} of a half-plane, pushed with multiplier 1/2
q = CoderivQuery(x=[0.0, 0.3], A=[[-1.0, 0.0], [0.0, 1.0]], b=[0.0, 1.0],
                 v=[0.5, 0.0], u=[0.0, 1.0])
res = dstar_F(q)
print(f"active faces {q.active}, LICQ {q.licq()}, exact formula {res.exact}")
for piece in res.pieces:
    print(f"  piece p={piece.p}, zero {piece.pattern.zero}, nonneg {piece.pattern.nonneg}, "
          f"free {piece.pattern.free}")

rng = np.random.default_rng(0)
agree = 0
for _ in range(200):
    piece = res.pieces[0]
    w = piece.evaluate(rng.normal(size=q.m)) if rng.random() < 0.5 else rng.normal(size=8)
    agree += res.contains(w) == oracle_graph_normals(q, w)
print(f"formula and oracle agree on {agree}/200 covectors")
