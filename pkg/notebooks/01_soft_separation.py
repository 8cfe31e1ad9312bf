"""
Soft d-separation on a small graph
==================================

Edge probabilities ``W`` turn every low-order d-separation statement into a
log-space score. At a low temperature and with a 0/1 matrix the scores agree
with the graphical criterion; with fractional weights they lower-bound the
probability that a random graph drawn edge by edge satisfies the statement.
"""

# %%
import numpy as np

from diffdsep.diffsep import soft_scores
from diffdsep.graph import BinaryDag, discrete_statements

# %%
# A collider ``0 -> 2 <- 1`` with a descendant ``2 -> 3``.
adj = np.zeros((4, 4), dtype=np.int8)
adj[0, 2] = adj[1, 2] = adj[2, 3] = 1
dag = BinaryDag(adj)

con0, con1 = discrete_statements(dag)
print("0 and 1 marginally separated:", not con0[0, 1])
print("0 and 1 separated given 3:   ", not con1[0, 1, 3])

# %%
# The same statements from the soft scores of the binary matrix.
sc = soft_scores(adj.astype(float), alpha=1e-5)
print("soft P(0 sep 1)     =", np.exp(sc.dsep0[0, 1]))
print("soft P(0 sep 1 | 3) =", np.exp(sc.dsep1[0, 1, 3]))

# %%
# Fractional weights. Nodes 0 and 1 share no ancestor in any graph drawn
# from ``w``, so the true probability of the marginal separation is 1. The
# soft score is a lower bound on it: loose at high temperature, close at low
# temperature.
w = adj * 0.7
for alpha in (1.0, 0.1, 0.01):
    s = soft_scores(w, alpha)
    print(f"alpha={alpha:<5} P(0 sep 1)={np.exp(s.dsep0[0, 1]):.3f}  P(0 sep 1 | 3)={np.exp(s.dsep1[0, 1, 3]):.3f}")
