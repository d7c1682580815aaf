"""Simulated-annealing baseline.

Every mapped VNF gets its own instance, so nothing is shared between
chains.  Delays use the fixed-delay model: a constant per touched node
plus the propagation delay of each link.  Virtual links follow the
fewest-hop substrate path between their endpoints (bandwidth costs are
proportional to hops), so a state is evaluated without solving an LP.
"""
from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass

import networkx as nx

from .feasibility import EconomicReport, economics
from .model import Deployment, Scenario, empty_deployment, idkey


@dataclass(frozen=True)
class AnnealConfig:
    initial_temperature: float = 1000.0
    cooling_rate: float = 0.05
    lambda_param: int = 3  # neighbours sampled per iteration
    max_iterations: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.initial_temperature < 0:
            raise ValueError("initial_temperature must be non-negative")
        if self.lambda_param < 1 or self.max_iterations < 0:
            raise ValueError("lambda_param >= 1 and max_iterations >= 0 required")


def cool(t: float, cfg: AnnealConfig) -> float:
    return t * (1.0 - cfg.cooling_rate)


class _Evaluator:
    def __init__(self, s: Scenario):
        self.s = s
        g = s.substrate.graph()
        self.paths = dict(nx.all_pairs_shortest_path(g))
        self.link = s.substrate.link
        self.node = s.substrate.node
        # a dedicated instance carries the whole chain flow
        self.stable = {r.id: all(r.flow_rate < s.stable_limit(s.type[t].service_rate) for t in r.vnf_types)
                       for r in s.requests}

    def path(self, a, b):
        p = self.paths.get(a, {}).get(b)
        return None if p is None else list(zip(p, p[1:]))

    def gain(self, accepted, where):
        """Gain of a state, or None if it breaks a capacity or a delay budget."""
        s = self.s
        use = defaultdict(lambda: [0.0, 0.0, 0.0])
        bw = defaultdict(float)
        rev = lic = 0.0
        for r in s.requests:
            if not accepted[r.id]:
                continue
            if not self.stable[r.id]:
                return None
            rev += r.revenue
            touched = set()
            for u, t in enumerate(r.vnf_types):
                n = where[(r.id, u)]
                vt = s.type[t]
                u_ = use[n]
                u_[0] += vt.cpu_req
                u_[1] += vt.mem_req
                u_[2] += vt.strg_req
                lic += vt.license_cost
                touched.add(n)
            delay = s.fixed_node_delay * len(touched)
            for k in range(len(r) - 1):
                a, b = where[(r.id, k)], where[(r.id, k + 1)]
                if a == b:
                    continue
                p = self.path(a, b)
                if p is None:
                    return None
                for l in p:
                    bw[l] += r.link_bandwidths[k]
                    delay += self.link[l].prop_delay
            if delay > r.delay_threshold:
                return None
        for n, (cpu, mem, strg) in use.items():
            node = self.node[n]
            if cpu > node.cpu_capacity or mem > node.mem_capacity or strg > node.strg_capacity:
                return None
        if any(v > self.link[l].capacity for l, v in bw.items()):
            return None
        if s.node_cost_mode == "per-node":
            ncost = sum(self.node[n].activation_cost for n in use)
        else:
            ncost = sum(self.node[n].activation_cost for r in s.requests if accepted[r.id]
                        for n in {where[(r.id, u)] for u in range(len(r))})
        return rev - lic - ncost - s.substrate.bandwidth_fee * sum(bw.values())

    def deployment(self, accepted, where) -> Deployment:
        s = self.s
        count = defaultdict(int)
        v2i, i2n, flow, bw = {}, {}, {}, defaultdict(float)
        for r in s.requests:
            if not accepted[r.id]:
                continue
            for u, t in enumerate(r.vnf_types):
                inst = (t, count[t])
                count[t] += 1
                v2i[(r.id, u)] = inst
                i2n[inst] = where[(r.id, u)]
            for k in range(len(r) - 1):
                a, b = where[(r.id, k)], where[(r.id, k + 1)]
                if a == b:
                    continue
                for l in self.path(a, b):
                    flow[(r.id, k, l)] = 1.0
                    bw[l] += r.link_bandwidths[k]
        return Deployment({r.id: bool(accepted[r.id]) for r in s.requests}, v2i, i2n, flow, dict(bw))


def run_absa(s: Scenario, cfg: AnnealConfig = AnnealConfig(), trace: list | None = None
             ) -> tuple[Deployment, EconomicReport]:
    """Anneal over (acceptance, VNF -> node) states and return the best feasible one seen.

    Each iteration samples ``lambda_param`` neighbours (move one VNF to
    another node, or flip one chain's acceptance), keeps the best feasible
    one and accepts it with the Metropolis rule.  With temperature 0 only
    non-worsening moves are accepted.  ``trace`` receives one
    ``(temperature, current_gain, best_gain)`` tuple per iteration.
    """
    if not s.requests:
        d = empty_deployment(s)
        return d, economics(s, d)
    rng = random.Random(cfg.seed)
    ev = _Evaluator(s)
    nodes = sorted(s.substrate.node_ids, key=idkey)
    vnfs = [(r.id, u) for r in s.requests for u in range(len(r))]
    rids = [r.id for r in s.requests]
    accepted = {r: False for r in rids}
    where = {v: rng.choice(nodes) for v in vnfs}
    cur = 0.0
    best, best_state = cur, (dict(accepted), dict(where))
    temp = cfg.initial_temperature
    for _ in range(cfg.max_iterations):
        pick = None
        for _ in range(cfg.lambda_param):
            acc, wh = accepted, where
            if len(nodes) > 1 and rng.random() < 0.5:
                v = rng.choice(vnfs)
                wh = dict(where)
                wh[v] = rng.choice([n for n in nodes if n != where[v]])
            else:
                r = rng.choice(rids)
                acc = dict(accepted)
                acc[r] = not acc[r]
            g = ev.gain(acc, wh)
            if g is not None and (pick is None or g > pick[0]):
                pick = (g, acc, wh)
        if pick is not None:
            delta = cur - pick[0]  # energy is -gain
            if delta <= 0 or (temp > 0 and rng.random() < math.exp(-delta / temp)):
                cur, accepted, where = pick
                if cur > best:
                    best, best_state = cur, (dict(accepted), dict(where))
        if trace is not None:
            trace.append((temp, cur, best))
        temp = cool(temp, cfg)
    d = ev.deployment(*best_state)
    return d, economics(s, d)
