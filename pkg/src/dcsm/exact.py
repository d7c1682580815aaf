"""Exact optimisation for desk-scale instances.

``solve_exact`` is a depth-first branch and bound over acceptance,
VNF-to-instance and instance-to-node binaries, bounded by the continuous
relaxation.  ``enumerate_exact`` is an independent brute-force oracle: it
walks every combination of the three decisions and routes flows for the
survivors.
"""
from __future__ import annotations

import itertools
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

from .delay import InstabilityError, mm1_delay
from .feasibility import economics
from .model import Deployment, Scenario, empty_deployment, idkey
from .relaxation import INT_TOL, Relaxation
from .routing import complete, route_flows

logger = logging.getLogger(__name__)


class CapExceeded(ValueError):
    pass


@dataclass
class ExactResult:
    deployment: Deployment
    gain: float
    bound: float
    gap: float
    nodes_explored: int
    wall_time: float
    timed_out: bool = False
    history: list = field(default_factory=list)  # incumbent gain after each improvement


@dataclass(frozen=True)
class EnumerationCaps:
    requests: int = 4
    chain_length: int = 3
    instances: int = 2
    nodes: int = 4


def _gap(bound, gain):
    return max(bound - gain, 0.0) / max(abs(bound), 1.0)


# ------------------------------------------------------------ enumeration

def enumeration_count(s: Scenario) -> int:
    """Number of (acceptance, VNF->instance, instance->node) combinations."""
    n_nodes = len(s.substrate.nodes)
    total = 0
    reqs = list(s.requests)
    for mask in range(1 << len(reqs)):
        vnfs = [t for k, r in enumerate(reqs) if mask >> k & 1 for t in r.vnf_types]
        for choice in itertools.product(*[range(s.instance_count(t)) for t in vnfs]):
            total += n_nodes ** len(set(zip(vnfs, choice)))
    return total


def enumerate_exact(s: Scenario, caps: EnumerationCaps = EnumerationCaps(),
                    placement: dict | None = None) -> ExactResult:
    """Certified optimum by exhaustive search.

    With ``placement`` ((type, index) -> node) only the placed instances are
    available and they stay where they are.
    """
    start = time.perf_counter()
    reqs = list(s.requests)
    if len(reqs) > caps.requests:
        raise CapExceeded(f"{len(reqs)} requests > cap {caps.requests}")
    if any(len(r) > caps.chain_length for r in reqs):
        raise CapExceeded(f"chain longer than cap {caps.chain_length}")
    if any(s.instance_count(t.id) > caps.instances for t in s.types):
        raise CapExceeded(f"more than {caps.instances} instances of a type")
    if len(s.substrate.nodes) > caps.nodes:
        raise CapExceeded(f"more than {caps.nodes} substrate nodes")

    nodes = s.substrate.node_ids
    node = s.substrate.node
    best = empty_deployment(s)
    best_gain = 0.0
    count = 0
    route_cache = {}
    if placement is None:
        avail = {t.id: range(s.instance_count(t.id)) for t in s.types}
    else:
        avail = {t.id: sorted(i for (tt, i) in placement if tt == t.id) for t in s.types}
    for mask in range(1 << len(reqs)):
        chosen = [r for k, r in enumerate(reqs) if mask >> k & 1]
        vnfs = [(r.id, u, t) for r in chosen for u, t in enumerate(r.vnf_types)]
        revenue = sum(r.revenue for r in chosen)
        for choice in itertools.product(*[avail[t] for (_, _, t) in vnfs]):
            v2i = {(r, u): (t, i) for (r, u, t), i in zip(vnfs, choice)}
            used = sorted(set(v2i.values()), key=idkey)
            n_place = len(nodes) ** len(used) if placement is None else 1
            lam = defaultdict(float)
            for (r, u), inst in v2i.items():
                lam[inst] += s.request[r].flow_rate
            try:
                di = {inst: mm1_delay(s.type[inst[0]].service_rate, lam[inst], s.stability_margin) for inst in used}
            except InstabilityError:
                count += n_place
                continue
            lic = sum(s.type[t].license_cost for (t, _) in used)
            places = (itertools.product(nodes, repeat=len(used)) if placement is None
                      else [tuple(placement[inst] for inst in used)])
            for place in places:
                count += 1
                i2n = dict(zip(used, place))
                cpu = defaultdict(float)
                mem = defaultdict(float)
                strg = defaultdict(float)
                lam_n = defaultdict(float)
                for inst, n in i2n.items():
                    vt = s.type[inst[0]]
                    cpu[n] += vt.cpu_req
                    mem[n] += vt.mem_req
                    strg[n] += vt.strg_req
                    lam_n[n] += lam[inst]
                if any(cpu[n] > node[n].cpu_capacity or mem[n] > node[n].mem_capacity
                       or strg[n] > node[n].strg_capacity for n in cpu):
                    continue
                try:
                    dn = {n: mm1_delay(node[n].hypervisor_rate, lam_n[n], s.stability_margin) for n in lam_n}
                except InstabilityError:
                    continue
                budgets = {}
                ok = True
                for r in chosen:
                    touched = {i2n[v2i[(r.id, u)]] for u in range(len(r))}
                    qd = sum(dn[n] for n in touched) + sum(di[v2i[(r.id, u)]] for u in range(len(r)))
                    budgets[r.id] = r.delay_threshold - qd
                    if budgets[r.id] < 0:
                        ok = False
                        break
                if not ok:
                    continue
                if s.node_cost_mode == "per-node":
                    ncost = sum(node[n].activation_cost for n in set(place))
                else:
                    ncost = sum(node[i2n[v2i[(r.id, u)]]].activation_cost
                                for r in chosen for u in range(len(r))
                                if i2n[v2i[(r.id, u)]] not in {i2n[v2i[(r.id, w)]] for w in range(u)})
                upper = revenue - lic - ncost
                if upper <= best_gain:
                    continue  # bandwidth cost is non-negative
                vnf_node = {key: i2n[inst] for key, inst in v2i.items()}
                key = (tuple(sorted(vnf_node.items(), key=idkey)), tuple(sorted(budgets.items(), key=idkey)))
                if key not in route_cache:
                    route_cache[key] = route_flows(s, vnf_node, [r.id for r in chosen], budgets)
                routed = route_cache[key]
                if routed is None:
                    continue
                flow, bw = routed
                gain = upper - s.substrate.bandwidth_fee * sum(bw.values())
                if gain > best_gain + 1e-9 * max(1.0, abs(best_gain)):
                    best_gain = gain
                    best = Deployment({r.id: r in chosen for r in reqs}, v2i, i2n, flow, bw)
    gain = economics(s, best).gain
    return ExactResult(best, gain, gain, 0.0, count, time.perf_counter() - start)


# ------------------------------------------------------------ branch and bound

def _frac(v):
    return min(v, 1.0 - v)


def _branch_var(s: Scenario, sol, rev_order):
    for r in rev_order:
        if _frac(sol.a_values[r]) > INT_TOL:
            return ("A", r)
    best, key = INT_TOL, None
    for (r, u, t, i), v in sorted(sol.s_values.items(), key=lambda kv: idkey(kv[0])):
        if _frac(v) > best + 1e-12:
            best, key = _frac(v), ("s", r, u, (t, i))
    if key is not None:
        return key
    used = {(t, i) for (r, u, t, i), v in sol.s_values.items() if v > 0.5}
    for (t, i, n), v in sorted(sol.p_values.items(), key=lambda kv: idkey(kv[0])):
        if (t, i) in used and _frac(v) > best + 1e-12:
            best, key = _frac(v), ("p", (t, i), n)
    return key


def _first_free(relax: Relaxation, fix, rev_order):
    """First unfixed binary in branching order; used when a node's relaxation fails."""
    keys = [("A", r) for r in rev_order]
    keys += [("s", r, u, inst) for (r, u, inst) in relax.s_keys]
    keys += [("p", inst, n) for inst in relax.instances for n in relax.s.substrate.node_ids]
    return next((k for k in keys if k not in fix), None)


def _completion(s: Scenario, sol):
    acc = [r for r, v in sol.a_values.items() if v > 0.5]
    v2i = {(r, u): (t, i) for (r, u, t, i), v in sol.s_values.items() if v > 0.5 and r in acc}
    used = set(v2i.values())
    i2n = {}
    for inst in used:
        cands = [(v, n) for (t, i, n), v in sol.p_values.items() if (t, i) == inst]
        i2n[inst] = max(cands, key=lambda c: (c[0], [-x for x in idkey(c[1])[:2]]))[1]
    return complete(s, acc, v2i, i2n)


def solve_exact(s: Scenario, gap_limit: float = 0.05, time_limit: float = 60.0,
                node_limit: int | None = None) -> ExactResult:
    """Branch and bound to within ``gap_limit`` of the optimum or until a limit hits.

    Branching: acceptance first by descending revenue, then the most
    fractional VNF mapping, then the most fractional placement of a used
    instance.  The 1-branch is explored first; ties go to the lowest id.
    """
    start = time.perf_counter()
    relax = Relaxation(s, None, symmetry_breaking=True)
    rev_order = [r.id for r in sorted(s.requests, key=lambda r: (-r.revenue, idkey(r.id)))]
    inc = empty_deployment(s)
    inc_gain = 0.0
    history = [0.0]
    stack = [({}, float("inf"))]
    explored = 0
    pruned_bound = -float("inf")
    timed_out = False

    def prunable(bound):
        if bound == float("inf"):
            return False
        slack = gap_limit * max(abs(bound), 1.0) if gap_limit > 0 else 1e-9 * max(1.0, abs(inc_gain))
        return bound <= inc_gain + slack

    while stack:
        if time.perf_counter() - start > time_limit or (node_limit is not None and explored >= node_limit):
            timed_out = True
            break
        fix, parent_bound = stack.pop()
        if prunable(parent_bound):
            pruned_bound = max(pruned_bound, min(parent_bound, inc_gain + gap_limit * max(abs(parent_bound), 1)))
            continue
        sol = relax.solve(fix)
        explored += 1
        if sol.status == "infeasible":
            continue
        if sol.status != "optimal":
            if sol.objective == -float("inf"):
                logger.warning("relaxation failed at depth %d; subtree kept by parent bound", len(fix))
                bound = parent_bound
            else:
                bound = sol.objective
        else:
            bound = min(sol.objective, parent_bound)
        if prunable(bound):
            pruned_bound = max(pruned_bound, bound)
            continue
        if sol.status == "optimal":
            var = _branch_var(s, sol, rev_order)
        else:
            var = _first_free(relax, fix, rev_order)
        if var is None and sol.status == "optimal":
            dep = _completion(s, sol)
            if dep is not None:
                g = economics(s, dep).gain
                if g > inc_gain:
                    inc, inc_gain = dep, g
                    history.append(g)
                pruned_bound = max(pruned_bound, min(bound, max(g, inc_gain)))
                continue
            logger.warning("integral relaxation point failed exact routing at depth %d", len(fix))
            continue
        if var is None:
            continue
        stack.append(({**fix, var: 0}, bound))
        stack.append(({**fix, var: 1}, bound))

    if timed_out:
        open_bound = max((b for _, b in stack), default=-float("inf"))
        bound = max(inc_gain, pruned_bound, open_bound)
    else:
        bound = max(inc_gain, pruned_bound)
    return ExactResult(inc, inc_gain, bound, _gap(bound, inc_gain), explored,
                       time.perf_counter() - start, timed_out, history)
