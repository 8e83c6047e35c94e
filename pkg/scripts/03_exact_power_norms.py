"""Distances between rows of (A - qJ)^r from walk counts alone, checked against dense algebra."""
from fractions import Fraction

import numpy as np

from mpcsbm import (SbmParams, aix_sum, compute_arx, compute_norm, expansion_coefficients, generate_sbm,
                    mpc_power_iteration, power_iteration)
from mpcsbm.evaluate import accuracy, plan_cluster
from mpcsbm.mpc_power import NormTables
from mpcsbm.sequential import norm_oracle_matrix

g = generate_sbm(SbmParams(n=8, k=2, p=0.6, q=0.1, seed=2)).graph
r, q = 2, Fraction(1, 10)

cluster = plan_cluster(generate_sbm(SbmParams(8, 2, 0.6, 0.1, 2)), "mpc-power")
walks = aix_sum(cluster, g, r)
print("C_i (total walks of length i):", walks.C)

exp = expansion_coefficients(r, q, g.N, walks.C)
print("%d words collapse into %d coefficient groups" % (2 ** (2 * r), len(exp.X) + 1))
for key in sorted(exp.X):
    print("  X%s = %s" % (key, exp.X[key]))

tables = NormTables(walks, exp)
rows = [compute_arx(cluster, g, x, 2 * r) for x in range(g.N)]
oracle = norm_oracle_matrix(g, q, r)
ok = all(compute_norm(cluster, tables, x, y, rows[x], rows[y]) == oracle[x, y]
         for x in range(g.N) for y in range(g.N))
print("all %d norms equal the dense oracle exactly: %s" % (g.N ** 2, ok))
print("e.g. ||B_0 - B_9||^2 =", oracle[0, 9], "~", float(oracle[0, 9]))

# the full algorithm on a larger instance
inst = generate_sbm(SbmParams(n=60, k=2, p=0.6, q=0.1, seed=0))
seq = power_iteration(inst.graph, 2, 3, 0.1)
fleet = plan_cluster(inst, "mpc-power")
out = mpc_power_iteration(fleet, inst.graph, 2, 3, 0.1)
print("power iteration:", accuracy(out.labels, inst.truth), " same as sequential:", out == seq)
print("rounds %d, peak words %d of budget %.0f" % (fleet.round, fleet.peak_total, fleet.budget))
