"""Exact community recovery on stochastic block models, simulated on an s-space MPC fleet.

Two algorithm families are provided, each as a single-machine reference and
as a round-accounted fleet implementation:

* common-neighbour clustering (`comm_nbr`, `mpc_comm_nbr`)
* power iteration on rows of (A - qJ)^r (`power_iteration`,
  `mpc_power_iteration`, `mpc_power_iteration_parallel`)

The fleet (`ClusterState`) records a per-round, per-machine ledger of words
sent, received and resident, and rejects any round that exceeds the s-word
limits.
"""
from .errors import CapacityError, ContractError, ModelViolation, ParameterError, RecoveryFailure
from .graph import Graph
from .sbm import (RegimeReport, SbmInstance, SbmParams, distribute_edges, generate_sbm, read_edge_list,
                  regime_check, write_edge_list)
from .cluster import (ClusterState, Ledger, MPCConfig, copy_sets, default_s, index_records, init_cluster,
                      prefix_sum, sort_records, space_budget, visit_neighbors)
from .ops import (NeighborLayout, SampledSet, compare_cut, compare_grp, copy_nbr, even_cluster, random_set,
                  reorganize_nbr, reorganize_nbr_dense, representative_k)
from .sequential import (Clustering, CommNbrConfig, PowerThreshold, ThresholdDelta, comm_nbr, compcom_nbr,
                         compute_del, norm_oracle, power_iteration, walk_oracle)
from .mpc_commnbr import compute_cluster, compute_rep, compute_subcluster, mpc_comm_nbr
from .mpc_power import (WalkTable, aix_sum, compute_arx, compute_norm, expansion_coefficients, is_active,
                        mpc_power_iteration, mpc_power_iteration_parallel)
from .evaluate import (ALGORITHMS, CSV_COLUMNS, ExperimentConfig, RunReport, RunSettings, accuracy,
                       emit_plotdata, run_cell, run_experiment)

__version__ = "0.1.0"
