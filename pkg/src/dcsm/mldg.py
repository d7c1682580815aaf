"""Two-level heuristic: size and cluster-place instances, then map chains by
iterative rounding of the fixed-placement relaxation."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace

from .feasibility import EconomicReport, economics
from .model import Deployment, Scenario, empty_deployment, estimate_instances, idkey
from .relaxation import Relaxation
from .routing import complete

logger = logging.getLogger(__name__)

ONE = 1.0 - 1e-6
# outer-approximation tolerance while rounding; completion re-checks delays exactly
ROUNDING_TOL = 1e-4


class SubstrateExhausted(RuntimeError):
    """The planned instances do not fit on the substrate."""


@dataclass(frozen=True)
class SizingPlan:
    eta: dict
    theta: float


@dataclass
class ClusterState:
    current_cluster: list = field(default_factory=list)
    priorities: dict = field(default_factory=dict)
    remaining: dict = field(default_factory=dict)


def size_instances(s: Scenario, theta: float | None = None) -> SizingPlan:
    """Instance count per type from the aggregate demand, capped by any explicit limit."""
    theta = s.theta if theta is None else theta
    eta = estimate_instances(s.requests, s.types, theta)
    for t in s.types:
        if t.max_instances is not None:
            eta[t.id] = min(eta[t.id], t.max_instances)
    return SizingPlan(eta, theta)


def link_incidence(s: Scenario) -> dict:
    """Lambda^t: virtual links with at least one endpoint of type t."""
    lam = defaultdict(int)
    for r in s.requests:
        for a, b in zip(r.vnf_types, r.vnf_types[1:]):
            lam[a] += 1
            if b != a:
                lam[b] += 1
    return {t.id: lam[t.id] for t in s.types}


def adjacency(s: Scenario) -> dict:
    """adj[a][b]: virtual links joining a VNF of type a to one of type b, either direction."""
    adj = defaultdict(lambda: defaultdict(int))
    for r in s.requests:
        for a, b in zip(r.vnf_types, r.vnf_types[1:]):
            adj[a][b] += 1
            if a != b:
                adj[b][a] += 1
    return adj


def place_instances(s: Scenario, plan: SizingPlan, tie_break: str = "lowest") -> dict:
    """Most-connected cluster placement; returns (type, index) -> node."""
    lam = link_incidence(s)
    adj = adjacency(s)
    remaining = {t: n for t, n in plan.eta.items() if n > 0}
    placed = defaultdict(int)
    out = {}
    order = sorted(s.substrate.nodes, key=lambda n: idkey(n.id), reverse=tie_break == "highest")
    order.sort(key=lambda n: -n.cpu_capacity)
    state = ClusterState(remaining=remaining)

    def fits(node, used, t):
        vt = s.type[t]
        return (used[0] + vt.cpu_req <= node.cpu_capacity + 1e-9 and used[1] + vt.mem_req <= node.mem_capacity + 1e-9
                and used[2] + vt.strg_req <= node.strg_capacity + 1e-9)

    def take(node, used, t):
        vt = s.type[t]
        used[0] += vt.cpu_req
        used[1] += vt.mem_req
        used[2] += vt.strg_req
        out[(t, placed[t])] = node.id
        placed[t] += 1
        remaining[t] -= 1
        if not remaining[t]:
            del remaining[t]

    for node in order:
        if not remaining:
            break
        state.priorities = {t: remaining[t] * lam[t] for t in remaining}
        used = [0.0, 0.0, 0.0]
        seeds = [t for t in remaining if fits(node, used, t)]
        if not seeds:
            continue
        # a type with no virtual links has priority 0 but still needs a home
        seed = _argmax(seeds, lambda t: (state.priorities[t], remaining[t]), tie_break)
        take(node, used, seed)
        cluster_types = {seed}
        state.current_cluster = [seed]
        while True:
            cands = [t for t in remaining if fits(node, used, t)]
            if not cands:
                break
            t = _argmax(cands, lambda t: sum(adj[c][t] for c in cluster_types), tie_break)
            take(node, used, t)
            cluster_types.add(t)
            state.current_cluster.append(t)
    if remaining:
        raise SubstrateExhausted(f"unplaced instances: {dict(sorted(remaining.items(), key=lambda kv: idkey(kv[0])))}")
    return out


def _argmax(cands, score, tie_break):
    best = max(score(c) for c in cands)
    tied = sorted((c for c in cands if score(c) == best), key=idkey)
    return tied[0] if tie_break == "lowest" else tied[-1]


def map_chains(s: Scenario, placement: dict, *, tie_break: str = "lowest",
               max_resolve: int | None = None, retries: int = 1, prune: bool = True,
               tol: float = ROUNDING_TOL) -> Deployment:
    """Iterative rounding over the fixed-placement relaxation.

    Chains are committed one at a time in order of how integral their
    relaxed mapping already is.  A rounding that makes the relaxation
    infeasible rejects the chain; with ``retries`` > 0 that many next-best
    candidates are tried first.  ``prune`` runs a final pass that drops any
    accepted chain whose removal raises the gain.
    """
    if not s.requests:
        return empty_deployment(s)
    relax = Relaxation(s, placement)
    fix = {}
    done = set()
    accepted = []
    load = defaultdict(float)  # committed arrival rate per instance
    resolves = 0

    def budget_left():
        return max_resolve is None or resolves < max_resolve

    def reject(r):
        for key in [k for k in fix if k[0] == "s" and k[1] == r]:
            del fix[key]
        fix[("A", r)] = 0
        done.add(r)

    sol = relax.solve(fix, tol=tol)
    resolves += 1
    while len(done) < len(s.requests):
        if sol.status != "optimal":
            logger.warning("relaxation %s with %d chains committed; rejecting the rest", sol.status, len(accepted))
            for r in s.requests:
                if r.id not in done:
                    reject(r.id)
            break
        open_ = [r for r in s.requests if r.id not in done]
        best_s = defaultdict(float)
        for (r, u, t, i), v in sol.s_values.items():
            best_s[(r, u)] = max(best_s[(r, u)], v)
        score = {r.id: sum(best_s[(r.id, u)] for u in range(len(r))) / len(r) for r in open_}
        rid = _argmax(list(score), lambda r: score[r], tie_break)
        req = s.request[rid]
        fix[("A", rid)] = 1
        fixed_u = {}
        ok = True
        cur = sol
        while True:
            vals = {(u, (t, i)): v for (r, u, t, i), v in cur.s_values.items() if r == rid}
            pending = [u for u in range(len(req)) if u not in fixed_u
                       and max((v for (uu, _), v in vals.items() if uu == u), default=0.0) < ONE]
            if not pending:
                break
            cands = sorted(((v, u, inst) for (u, inst), v in vals.items() if u in pending),
                           key=lambda c: (c[1], idkey(c[2])), reverse=tie_break == "highest")
            cands.sort(key=lambda c: -c[0])
            viable = []
            for v, u, inst in cands:
                lim = s.stable_limit(s.type[inst[0]].service_rate)
                if load[inst] + sum(req.flow_rate for ii in fixed_u.values() if ii == inst) + req.flow_rate < lim:
                    viable.append((u, inst))
            nxt = None
            for u, inst in viable[:1 + retries]:
                if not budget_left():
                    break
                fix[("s", rid, u, inst)] = 1
                trial = relax.solve(fix, tol=tol)
                resolves += 1
                if trial.status == "optimal":
                    fixed_u[u] = inst
                    nxt = trial
                    break
                if trial.status != "infeasible":
                    logger.warning("relaxation %s while mapping chain %r", trial.status, rid)
                del fix[("s", rid, u, inst)]
            if nxt is None:
                ok = False
                break
            cur = nxt
        if ok:
            for (r, u, t, i), v in cur.s_values.items():
                if r == rid and v >= ONE:
                    fix[("s", rid, u, (t, i))] = 1
                    load[(t, i)] += req.flow_rate
            done.add(rid)
            accepted.append(rid)
            sol = cur
        else:
            reject(rid)
            if not budget_left():
                for r in s.requests:
                    if r.id not in done:
                        reject(r.id)
                break
            sol = relax.solve(fix, tol=tol)
            resolves += 1

    v2i = {(k[1], k[2]): k[3] for k, v in fix.items() if k[0] == "s" and v == 1 and k[1] in accepted}
    dep = complete(s, accepted, v2i, placement)
    while dep is None and accepted:
        # the relaxation's outer approximation can undershoot a delay by its tolerance
        dropped = accepted.pop()
        logger.warning("exact completion failed; dropping chain %r", dropped)
        dep = complete(s, accepted, v2i, placement)
    if dep is None:
        dep = empty_deployment(s)
    if prune:
        dep = _prune(s, dep, placement)
    return dep


def _prune(s: Scenario, dep: Deployment, placement: dict) -> Deployment:
    best = economics(s, dep).gain
    improved = True
    while improved:
        improved = False
        for r in dep.accepted_ids:
            rest = [x for x in dep.accepted_ids if x != r]
            cand = complete(s, rest, dep.vnf_to_instance, placement)
            if cand is None:
                continue
            g = economics(s, cand).gain
            if g > best + 1e-9 * max(1.0, abs(best)):
                dep, best, improved = cand, g, True
                break
    return dep


def run_mldg(s: Scenario, theta: float | None = None, *, tie_break: str = "lowest",
             max_resolve: int | None = None, retries: int = 1, prune: bool = True) -> tuple[Deployment, EconomicReport]:
    if theta is not None and theta != s.theta:
        s = replace(s, theta=theta)
    plan = size_instances(s)
    placement = place_instances(s, plan, tie_break)
    dep = map_chains(s, placement, tie_break=tie_break, max_resolve=max_resolve, retries=retries, prune=prune)
    return dep, economics(s, dep)
