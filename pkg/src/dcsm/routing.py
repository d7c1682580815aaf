"""Flow routing once every binary decision is fixed.

With acceptance, VNF-to-instance and instance-to-node decisions known, the
queue delays are constants and what remains is a splittable multi-commodity
flow: minimise bandwidth cost subject to link capacities and each chain's
remaining delay budget.
"""
from __future__ import annotations

from collections import defaultdict

from .delay import InstabilityError, mm1_delay
from .lp import LinearProgram, solve_lp
from .model import Deployment, Scenario, derive_loads, idkey

# keeps zero-fee instances from routing around cycles
HOP_EPS = 1e-7
LP_TOL = 1e-10


def route_flows(s: Scenario, vnf_node: dict, accepted, budgets: dict):
    """Route every accepted virtual link between its endpoint nodes.

    Returns ``(flow_split, allocated_bw)`` or ``None`` when no routing meets
    the capacities and the per-chain link-delay budgets.
    """
    links = s.substrate.links
    fee = s.substrate.bandwidth_fee
    commodities = []
    for r in accepted:
        req = s.request[r]
        if budgets.get(r, 0.0) < -LP_TOL:
            return None
        for k in range(len(req) - 1):
            a, b = vnf_node[(r, k)], vnf_node[(r, k + 1)]
            if a != b:
                commodities.append((r, k, a, b, req.link_bandwidths[k]))
    if not commodities:
        return {}, {}
    lp = LinearProgram(maximize=False)
    col = {}
    for (r, k, a, b, w) in commodities:
        for l in links:
            col[(r, k, l.endpoints)] = lp.var(0.0, 1.0, fee * w + HOP_EPS)
    for (r, k, a, b, w) in commodities:
        out = defaultdict(list)
        for l in links:
            j = col[(r, k, l.endpoints)]
            out[l.endpoints[0]].append((j, 1.0))
            out[l.endpoints[1]].append((j, -1.0))
        for n in s.substrate.node_ids:
            rhs = (n == a) - (n == b)
            lp.row(out[n], rhs, rhs)
    for l in links:
        terms = [(col[(r, k, l.endpoints)], w) for (r, k, a, b, w) in commodities]
        lp.row(terms, hi=l.capacity)
    by_chain = defaultdict(list)
    for (r, k, a, b, w) in commodities:
        by_chain[r].extend((col[(r, k, l.endpoints)], l.prop_delay) for l in links if l.prop_delay)
    for r, terms in by_chain.items():
        if terms:
            lp.row(terms, hi=max(budgets.get(r, 0.0), 0.0))
    st, x, _ = solve_lp(lp, primal_feasibility_tolerance=LP_TOL, dual_feasibility_tolerance=LP_TOL)
    if st != "optimal":
        return None
    flow = {}
    bw = defaultdict(float)
    for (r, k, a, b, w) in commodities:
        for l in links:
            v = float(x[col[(r, k, l.endpoints)]])
            if v > 1e-12:
                v = min(v, 1.0)
                flow[(r, k, l.endpoints)] = v
                bw[l.endpoints] += w * v
    return flow, dict(bw)


def queue_delays(s: Scenario, d: Deployment):
    """(hypervisor, instance) delay per accepted chain, or None when a queue is unstable."""
    loads = derive_loads(s, d)
    try:
        dn = {n: mm1_delay(s.substrate.node[n].hypervisor_rate, lam, s.stability_margin)
              for n, lam in loads.node_load.items()}
        di = {inst: mm1_delay(s.type[inst[0]].service_rate, lam, s.stability_margin)
              for inst, lam in loads.instance_load.items()}
    except InstabilityError:
        return None
    out = {}
    for r in d.accepted_ids:
        req = s.request[r]
        nodes = {d.vnf_node(r, u) for u in range(len(req))}
        out[r] = (sum(dn[n] for n in nodes), sum(di[d.vnf_to_instance[(r, u)]] for u in range(len(req))))
    return out


def complete(s: Scenario, accepted, vnf_to_instance: dict, instance_to_node: dict,
             delay_model: str = "queuing") -> Deployment | None:
    """Build a full deployment from the binary decisions, or None if infeasible.

    Only instances used by an accepted chain are kept in the placement.
    """
    accepted = sorted(accepted, key=idkey)
    acc = set(accepted)
    v2i = {(r, u): inst for (r, u), inst in vnf_to_instance.items() if r in acc}
    used = set(v2i.values())
    i2n = {inst: n for inst, n in instance_to_node.items() if inst in used}
    base = Deployment({r.id: r.id in acc for r in s.requests}, v2i, i2n)
    if delay_model == "queuing":
        qd = queue_delays(s, base)
        if qd is None:
            return None
        budgets = {r: s.request[r].delay_threshold - h - i for r, (h, i) in qd.items()}
    else:
        budgets = {}
        for r in accepted:
            nodes = {i2n[v2i[(r, u)]] for u in range(len(s.request[r]))}
            budgets[r] = s.request[r].delay_threshold - s.fixed_node_delay * len(nodes)
    vnf_node = {key: i2n[inst] for key, inst in v2i.items()}
    routed = route_flows(s, vnf_node, accepted, budgets)
    if routed is None:
        return None
    flow, bw = routed
    return Deployment(base.accepted, v2i, i2n, flow, bw)
