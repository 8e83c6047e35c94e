"""Generate a planted partition, look at it, and check which recovery regime it sits in."""
import numpy as np

from mpcsbm import SbmParams, generate_sbm, regime_check

prm = SbmParams(n=100, k=2, p=0.5, q=0.05, seed=1)
inst = generate_sbm(prm)
g = inst.graph

print("N =", g.N, " m =", g.m)
same = inst.truth[inst.edges[:, 0]] == inst.truth[inst.edges[:, 1]]
print("intra edges", same.sum(), "(expected", 0.5 * 2 * 100 * 99 // 2, ")")
print("inter edges", (~same).sum(), "(expected", 0.05 * 100 * 100, ")")

deg = g.degrees
print("degree mean %.1f  min %d  max %d" % (deg.mean(), deg.min(), deg.max()))

# common neighbours: same-cluster pairs share far more than cross pairs
A = g.adjacency(dtype=np.float32)
cn = A @ A.T
t = inst.truth
print("mean common neighbours, same cluster  %.1f" % cn[np.ix_(t == 0, t == 0)].mean())
print("mean common neighbours, cross cluster %.1f" % cn[np.ix_(t == 0, t == 1)].mean())

rep = regime_check(prm, r=3)
print("common-neighbour condition (left, right, ok):", rep.lemma_threshold)
print("power condition (left, right, ok):", rep.power)
# neither condition holds at this size: the proofs need far larger n,
# yet both algorithms still recover most seeds (see 02 and 03)
