"""Common-neighbour clustering, once on one machine and once on a simulated fleet."""
from mpcsbm import CommNbrConfig, SbmParams, comm_nbr, generate_sbm, mpc_comm_nbr
from mpcsbm.evaluate import accuracy, plan_cluster

inst = generate_sbm(SbmParams(n=100, k=2, p=0.5, q=0.05, seed=0))
g = inst.graph

# the formula threshold is negative at this size, so fit it from the data
cfg = CommNbrConfig(threshold_mode="gap")

seq = comm_nbr(g, 2, seed=0, cfg=cfg)
print("sequential:", accuracy(seq.labels, inst.truth), seq.provenance)

cluster = plan_cluster(inst, "mpc-commnbr", s=24, seed=0, commnbr=cfg)
print("fleet: M=%d machines of s=%d words, budget %.0f words" % (cluster.M, cluster.s, cluster.budget))
out = mpc_comm_nbr(cluster, g, 2, seed=0, cfg=cfg)
print("fleet run:", accuracy(out.labels, inst.truth))
print("identical to the sequential run:", out == seq)

print("rounds", cluster.round, " peak words", cluster.peak_total)
for prim, n in sorted(cluster.ledger.rounds_by_primitive().items(), key=lambda kv: -kv[1]):
    print("  %-22s %3d" % (prim, n))
print("cap violations:", cluster.ledger.violations(cluster.s))
