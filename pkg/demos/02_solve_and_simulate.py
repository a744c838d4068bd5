# %% [markdown]
# Solving the truncated belief MDP and simulating the true system
#
# Beliefs reachable within N steps of the stationary root form a finite
# graph; deeper successors are projected back onto the nearest node.

# %%
import numpy as np
import scipy.sparse as sp

from coupled_tracking import (SimConfig, SourceParams, build_graph, build_mdp, make_policy,
                              policy_evaluate, run_replications, solve)

params = SourceParams(2, 0.8, 0.5, 0.4)
graph = build_graph(params, p_s=0.8, n_steps=6)
print("nodes:", graph.n_nodes, "depths:", np.bincount([n.depth for n in graph.nodes]))

# %%
for gamma in (0.0, 0.15, 0.4):
    mdp = build_mdp(graph, gamma)
    table = solve(mdp)
    pomdp = make_policy("pomdp", table, graph)
    cfg = SimConfig(params, 0.8, gamma, 100_000)
    sim = run_replications(cfg, pomdp, range(5))
    maf = run_replications(cfg, make_policy("maf"), range(5))
    print(f"gamma={gamma:.2f} rho={table.rho:.4f} "
          f"pomdp={sim.mean['avg_cost']:.4f} (tx rate {sim.mean['avg_transmissions']:.3f}) "
          f"maf={maf.mean['avg_cost']:.4f}")

# %% [markdown]
# For large transmission costs the solved MDP settles into a cycle of deep
# idle nodes that projection keeps alive, so rho stops growing with gamma.
# On the true system the belief drifts back to the stationary root, where
# the policy transmits, so the simulated cost keeps rising.

# %%
mdp = build_mdp(graph, 0.4)
table = solve(mdp)
# rows of the policy's transition matrix: row s comes from the kernel of action a(s)
step = sum(sp.diags((table.actions == a).astype(float)) @ mdp.transitions[a]
           for a in range(mdp.n_actions)).tocsr()
occ = np.zeros(mdp.n_states)
occ[graph.root_id] = 1.0
for _ in range(2000):
    occ = step.T @ occ
occ = 0.5 * (occ + step.T @ occ)   # average out period-two oscillation
live = np.flatnonzero(occ > 1e-6)
print("recurrent nodes:", live, "depths:", [graph.nodes[i].depth for i in live])
print("actions there:", table.actions[live])
print("gain from the root:", round(policy_evaluate(mdp, table.actions), 5))
