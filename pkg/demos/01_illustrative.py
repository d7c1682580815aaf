"""
The five-chain example, end to end
==================================

Five chains share four VNF types on a four-node ring.  We solve it exactly,
look at where the delay of each accepted chain goes, and check that MLDG
lands on the same answer.
"""
from dcsm import chain_delay, derive_loads, economics, illustrative_scenario, run_mldg, solve_exact, validate

s = illustrative_scenario()
for r in s.requests:
    print(f"chain {r.id}: types {r.vnf_types}, f={r.flow_rate:g}, revenue {r.revenue:g}, "
          f"budget {r.delay_threshold * 1e3:g} ms")

# %%
# Exact branch and bound, run to a zero gap.
res = solve_exact(s, gap_limit=0.0)
d = res.deployment
print(f"\nexact: gain {res.gain:g}, accepted {d.accepted_ids}, {res.nodes_explored} nodes, {res.wall_time:.2f}s")
print("instances:", {f"type {t}#{i}": n for (t, i), n in sorted(d.instance_to_node.items())})

# %%
# Per-chain delay: hypervisor queues, instance queues, propagation.
loads = derive_loads(s, d)
for r in d.accepted_ids:
    br = chain_delay(s, d, r, loads)
    print(f"chain {r}: {br.hypervisor * 1e3:.3f} + {br.instance * 1e3:.3f} + {br.link * 1e3:.4f} ms "
          f"= {br.total * 1e3:.3f} ms of {s.request[r].delay_threshold * 1e3:g}")

econ = economics(s, d)
print(econ.as_dict())
assert not validate(s, d)

# %%
# The heuristic sizes instances from the offered load, places them, then
# rounds the fixed-placement relaxation chain by chain.
dm, em = run_mldg(s)
print(f"\nmldg: gain {em.gain:g}, accepted {dm.accepted_ids}")
