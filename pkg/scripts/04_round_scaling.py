"""How round counts move with machine size s and with the number of clusters k."""
import math

from mpcsbm import SbmParams, generate_sbm
from mpcsbm.evaluate import RunSettings, run_cell

prm = SbmParams(n=400, k=2, p=0.4, q=0.04, seed=3)
inst = generate_sbm(prm)
N = prm.N
print("mpc-commnbr on N=%d" % N)
for s in (2 * math.ceil(math.log2(N)), 32, 64, 256):
    rep, c = run_cell("mpc-commnbr", prm, RunSettings(s=s), inst)
    L = c.log_s(N)
    print("  s=%4d  ceil(log_s N)=%d  rounds=%3d  rounds/L=%.1f  recovered=%s"
          % (s, L, rep.rounds, rep.rounds / L, rep.recovered))

# peeling pays one pass per cluster; the parallel variant does not
print("power iteration, k=2 vs k=4 at N=240")
rounds = {}
for k, p in ((2, 0.6), (4, 0.7)):
    prm = SbmParams(240 // k, k, p, 0.1, 1)
    inst = generate_sbm(prm)
    for alg in ("mpc-power", "mpc-power-par"):
        rep, c = run_cell(alg, prm, RunSettings(r=3, s=24), inst)
        rounds[alg, k] = rep.rounds
        print("  %-14s k=%d rounds=%3d peak/budget=%.2f" % (alg, k, rep.rounds, rep.peak_words / rep.budget))
for alg in ("mpc-power", "mpc-power-par"):
    print("  %s k=4/k=2 ratio %.2f" % (alg, rounds[alg, 4] / rounds[alg, 2]))
