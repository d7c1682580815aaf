"""Continuous relaxation of the gain-maximisation model.

All binaries (acceptance, VNF-to-instance, instance-to-node and the derived
indicators) are relaxed to [0, 1].  Products of binaries and continuous
quantities use big-M linearisations.  The queue constraints
``d >= 1/(mu - lam)`` are convex and are handled by outer approximation:
tangent cuts are added at the current load until every relevant queue is
within tolerance.  Every intermediate LP is therefore a relaxation of the
convex program, so its objective is a valid upper bound at every round.

With a fixed instance placement the model is the subproblem solved inside
the heuristic's rounding loop; with a free placement it is the bounding
relaxation of the branch-and-bound search.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import networkx as nx
import highspy
import numpy as np
import scipy.sparse as sp

from . import lp as lpmod
from .lp import INF, LinearProgram
from .model import Scenario, idkey

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
MAX_ROUNDS = 200
INT_TOL = 1e-6
PRICE_TOL = 1e-9


class PlacementInfeasible(ValueError):
    """A fixed placement exceeds node capacity before any solve."""


@dataclass
class RelaxedSolution:
    status: str  # optimal | infeasible | numerical-failure
    objective: float = -math.inf
    a_values: dict = field(default_factory=dict)
    s_values: dict = field(default_factory=dict)  # (r, u, t, i) -> value
    p_values: dict = field(default_factory=dict)  # (t, i, n) -> value, free placement only
    flows: dict = field(default_factory=dict)  # (r, k, (n, m)) -> value
    loads: dict = field(default_factory=dict)  # node id or (t, i) -> arrival rate
    delays: dict = field(default_factory=dict)  # node id or (t, i) -> 1/(mu - lam)
    rounds: int = 0
    residual: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


class _Queue:
    __slots__ = ("key", "mu", "lam", "d", "cap_lam", "cut_at")

    def __init__(self, key, mu, lam, d, cap_lam):
        self.key, self.mu, self.lam, self.d, self.cap_lam = key, mu, lam, d, cap_lam
        self.cut_at = set()


def delay_cap(s: Scenario) -> float:
    """Queue delay beyond which no chain can use the queue."""
    big = max([r.delay_threshold for r in s.requests] + [1.0 / n.hypervisor_rate for n in s.substrate.nodes]
              + [1.0 / t.service_rate for t in s.types])
    return 2.0 * big


class Relaxation:
    """Builds the relaxed model once; ``solve`` may be called repeatedly with
    different fixings, and learned tangent cuts are kept between calls.

    ``placement`` maps (type, index) -> node.  When it is None the placement
    variables are part of the model.
    """

    def __init__(self, s: Scenario, placement: dict | None = None, *,
                 symmetry_breaking: bool = False, initial_cuts: int = 12,
                 column_generation: bool | None = None):
        self.s = s
        self.free = placement is None
        self.placement = None if placement is None else dict(placement)
        if not self.free:
            self._check_placement()
        # priced-in flow columns pay off once the substrate has more than a handful of links
        if column_generation is None:
            column_generation = not self.free and len(s.substrate.links) > 16
        self.colgen = column_generation and not self.free
        self.symmetry_breaking = symmetry_breaking and self.free
        self.lp = LinearProgram(maximize=True)
        self.col = {}
        self._build()
        self._queues_init(initial_cuts)
        self.h = self.lp.to_highs()
        self._cuts = []  # learned cuts, in row order after the built model
        self.cut_limit = 4 * len(self.queues)
        self._default_bounds = {}
        self._fixed_cols: set[int] = set()
        self._fixed: dict[int, float] = {}
        self.solves = 0
        self.lp_solves = 0

    # ------------------------------------------------------------ build
    def _check_placement(self):
        s = self.s
        use = defaultdict(lambda: [0.0, 0.0, 0.0])
        for (t, i), n in self.placement.items():
            if t not in s.type or n not in s.substrate.node:
                raise PlacementInfeasible(f"placement references unknown instance/node {(t, i)!r}->{n!r}")
            vt = s.type[t]
            use[n][0] += vt.cpu_req
            use[n][1] += vt.mem_req
            use[n][2] += vt.strg_req
        for n, (c, m, g) in use.items():
            node = s.substrate.node[n]
            if c > node.cpu_capacity + 1e-9 or m > node.mem_capacity + 1e-9 or g > node.strg_capacity + 1e-9:
                raise PlacementInfeasible(f"placement exceeds capacity of node {n!r}")

    def _build(self):
        s, lp, col = self.s, self.lp, self.col
        nodes = s.substrate.node_ids
        if self.free:
            insts = list(s.instances)
        else:
            insts = sorted(self.placement, key=idkey)
        self.instances = insts
        by_type = defaultdict(list)
        for inst in insts:
            by_type[inst[0]].append(inst)
        self.by_type = by_type
        m_flow = max(s.total_traffic, 1.0)
        self.m_delay = m_delay = delay_cap(s) / 2.0
        fee = s.substrate.bandwidth_fee
        per_node = s.node_cost_mode == "per-node"

        for r in s.requests:
            col[("A", r.id)] = lp.var(0, 1, r.revenue)
        for inst in insts:
            col[("x", inst)] = lp.var(0, 1, -s.type[inst[0]].license_cost)
        if per_node:
            for n in nodes:
                col[("on", n)] = lp.var(0, 1, -s.substrate.node[n].activation_cost)
        if self.free:
            for inst in insts:
                for n in nodes:
                    col[("p", inst, n)] = lp.var(0, 1)
                lp.row([(col[("p", inst, n)], 1.0) for n in nodes], hi=1.0)
            for n in nodes:
                nd = s.substrate.node[n]
                for attr, cap in (("cpu_req", nd.cpu_capacity), ("mem_req", nd.mem_capacity),
                                  ("strg_req", nd.strg_capacity)):
                    terms = [(col[("p", inst, n)], getattr(s.type[inst[0]], attr)) for inst in insts]
                    lp.row(terms, hi=cap)

        # VNF -> instance; x_expr[(r, u, n)] = list of (col, coef)
        x_expr = defaultdict(list)
        self.s_keys = []
        for r in s.requests:
            for u, t in enumerate(r.vnf_types):
                terms = []
                for inst in by_type.get(t, []):
                    j = col[("s", r.id, u, inst)] = lp.var(0, 1)
                    self.s_keys.append((r.id, u, inst))
                    terms.append((j, 1.0))
                    lp.row([(j, 1.0), (col[("x", inst)], -1.0)], hi=0.0)
                    if self.free:
                        zs = []
                        for n in nodes:
                            zj = lp.var(0, 1)
                            pj = col[("p", inst, n)]
                            lp.row([(zj, 1.0), (j, -1.0)], hi=0.0)
                            lp.row([(zj, 1.0), (pj, -1.0)], hi=0.0)
                            lp.row([(zj, 1.0), (j, -1.0), (pj, -1.0)], lo=-1.0)
                            x_expr[(r.id, u, n)].append((zj, 1.0))
                            zs.append((zj, 1.0))
                        # an instance sits on exactly one node, so the VNF lands on exactly
                        # one node when mapped; this also implies s <= sum_n p
                        lp.row(zs + [(j, -1.0)], 0.0, 0.0)
                    else:
                        x_expr[(r.id, u, self.placement[inst])].append((j, 1.0))
                lp.row(terms + [(col[("A", r.id)], -1.0)], 0.0, 0.0)
        self.x_expr = x_expr

        # chain passes node n
        self.alpha_nodes = {}
        for r in s.requests:
            touch = sorted({n for (rr, u, n) in x_expr if rr == r.id}, key=idkey)
            self.alpha_nodes[r.id] = touch
            for n in touch:
                cost = 0.0 if per_node else -s.substrate.node[n].activation_cost
                a = col[("alpha", r.id, n)] = lp.var(0, 1, cost)
                xs = []
                for u in range(len(r)):
                    terms = x_expr.get((r.id, u, n))
                    if terms:
                        lp.row(terms + [(a, -1.0)], hi=0.0)
                        xs.extend(terms)
                lp.row([(a, 1.0)] + [(j, -c) for j, c in xs], hi=0.0)
                if per_node:
                    lp.row([(a, 1.0), (col[("on", n)], -1.0)], hi=0.0)

        # flows; with column generation only a core of links starts in the model
        links = s.substrate.links
        cand = self._initial_links() if self.colgen else None
        self.flow_keys = []
        self.cons_row = {}
        self.commodities = []
        for r in s.requests:
            for k in range(len(r) - 1):
                self.commodities.append((r.id, k))
                for l in links:
                    if cand is None or l.endpoints in cand[(r.id, k)]:
                        col[("d", r.id, k, l.endpoints)] = lp.var(0, 1, -fee * r.link_bandwidths[k])
                        self.flow_keys.append((r.id, k, l.endpoints))
        out_terms = defaultdict(list)
        cap_terms = defaultdict(list)
        link_delay_terms = defaultdict(list)
        for (r, k, e) in self.flow_keys:
            j = col[("d", r, k, e)]
            w = s.request[r].link_bandwidths[k]
            out_terms[(r, k, e[0])].append((j, 1.0))
            out_terms[(r, k, e[1])].append((j, -1.0))
            if w:
                cap_terms[e].append((j, w))
            if s.substrate.link[e].prop_delay:
                link_delay_terms[r].append((j, s.substrate.link[e].prop_delay))
        for (r, k) in self.commodities:
            for n in nodes:
                terms = list(out_terms[(r, k, n)])
                terms += [(j, -c) for j, c in x_expr.get((r, k, n), [])]
                terms += [(j, c) for j, c in x_expr.get((r, k + 1, n), [])]
                self.cons_row[(r, k, n)] = lp.row(terms, 0.0, 0.0)
        self.cap_row = {}
        for l in links:
            if cap_terms[l.endpoints] or self.colgen:
                self.cap_row[l.endpoints] = lp.row(cap_terms[l.endpoints], hi=l.capacity)

        # loads
        for inst in insts:
            mu = s.type[inst[0]].service_rate
            lj = col[("lam", inst)] = lp.var(0, s.stable_limit(mu))
            terms = [(lj, 1.0)]
            for (r, u, i2) in self.s_keys:
                if i2 == inst:
                    terms.append((col[("s", r, u, inst)], -s.request[r].flow_rate))
            lp.row(terms, 0.0, 0.0)
        node_terms = defaultdict(list)
        for inst in insts:
            if self.free:
                for n in nodes:
                    y = lp.var(0, m_flow)
                    pj = col[("p", inst, n)]
                    lp.row([(y, 1.0), (pj, -m_flow)], hi=0.0)
                    lp.row([(col[("lam", inst)], 1.0), (y, -1.0), (pj, m_flow)], hi=m_flow)
                    lp.row([(y, 1.0), (col[("lam", inst)], -1.0)], hi=0.0)
                    node_terms[n].append((y, 1.0))
            else:
                node_terms[self.placement[inst]].append((col[("lam", inst)], 1.0))
        for n in nodes:
            mu = s.substrate.node[n].hypervisor_rate
            lj = col[("lam", n)] = lp.var(0, s.stable_limit(mu))
            lp.row([(lj, 1.0)] + [(j, -c) for j, c in node_terms[n]], 0.0, 0.0)
        if self.symmetry_breaking:
            for t, lst in by_type.items():
                for a, b in zip(lst, lst[1:]):
                    lp.row([(col[("lam", a)], 1.0), (col[("lam", b)], -1.0)], lo=0.0)

        # queue delays and the per-chain delay budget
        self.delay_row = {}
        for n in nodes:
            col[("dq", n)] = lp.var(1.0 / s.substrate.node[n].hypervisor_rate, INF)
        for inst in insts:
            col[("dq", inst)] = lp.var(1.0 / s.type[inst[0]].service_rate, INF)
        for r in s.requests:
            terms = list(link_delay_terms[r.id])
            for n in self.alpha_nodes[r.id]:
                lv = lp.var(0, INF)
                lp.row([(lv, 1.0), (col[("dq", n)], -1.0), (col[("alpha", r.id, n)], -m_delay)], lo=-m_delay)
                terms.append((lv, 1.0))
            for u in range(len(r)):
                for inst in by_type.get(r.vnf_types[u], []):
                    q = lp.var(0, INF)
                    lp.row([(q, 1.0), (col[("dq", inst)], -1.0), (col[("s", r.id, u, inst)], -m_delay)],
                           lo=-m_delay)
                    terms.append((q, 1.0))
            self.delay_row[r.id] = lp.row(terms, hi=r.delay_threshold)

    def _initial_links(self) -> dict:
        """Per commodity, the links of one minimum-hop path between every pair
        of nodes that can host its two endpoint VNFs."""
        s = self.s
        g = s.substrate.graph()
        hosts = defaultdict(set)
        for (r, u, n) in self.x_expr:
            hosts[(r, u)].add(n)
        paths = {}
        out = {}
        for r in s.requests:
            for k in range(len(r) - 1):
                keep = set()
                for a in sorted(hosts[(r.id, k)], key=idkey):
                    for b in sorted(hosts[(r.id, k + 1)], key=idkey):
                        if a == b:
                            continue
                        if (a, b) not in paths:
                            try:
                                p = nx.shortest_path(g, a, b)
                            except nx.NetworkXNoPath:
                                p = []
                            paths[(a, b)] = list(zip(p, p[1:]))
                        keep.update(paths[(a, b)])
                out[(r.id, k)] = keep
        return out

    def _add_all_flows(self) -> int:
        return self._price_flows(None, force=True)

    def _price_infeasible(self) -> int:
        """Farkas pricing: add the missing flow columns that could break the
        solver's proof of infeasibility.  Returns 0 when the proof also holds
        for the full model."""
        h = self.h
        _, has_ray, ray = h.getDualRay()
        if not has_ray:
            return self._add_all_flows()
        lp = h.getLp()
        a = lp.a_matrix_
        shape = (lp.num_row_, lp.num_col_)
        data = (np.asarray(a.value_), np.asarray(a.index_), np.asarray(a.start_))
        if a.format_ == highspy.MatrixFormat.kRowwise:
            mat = sp.csr_matrix(data, shape=shape)
        else:
            mat = sp.csc_matrix(data, shape=shape)
        rl, ru = np.asarray(lp.row_lower_), np.asarray(lp.row_upper_)
        cl, cu = np.asarray(lp.col_lower_), np.asarray(lp.col_upper_)
        ray = np.asarray(ray, dtype=float)
        ray = np.where(np.abs(ray) > 1e-9 * np.abs(ray).max(initial=0.0), ray, 0.0)
        for y in (ray, -ray):
            if np.any((y > 0) & ~np.isfinite(rl)) or np.any((y < 0) & ~np.isfinite(ru)):
                continue
            b = float(np.sum(np.where(y > 0, y * np.where(np.isfinite(rl), rl, 0.0), 0.0))
                      + np.sum(np.where(y < 0, y * np.where(np.isfinite(ru), ru, 0.0), 0.0)))
            z = mat.T @ y
            z = np.where(np.abs(z) > 1e-12 * max(1.0, np.abs(z).max(initial=0.0)), z, 0.0)
            if np.any((z > 0) & ~np.isfinite(cu)) or np.any((z < 0) & ~np.isfinite(cl)):
                continue
            top = float(np.sum(np.where(z > 0, z * np.where(np.isfinite(cu), cu, 0.0), 0.0))
                        + np.sum(np.where(z < 0, z * np.where(np.isfinite(cl), cl, 0.0), 0.0)))
            if top < b - 1e-9 * max(1.0, abs(b)):
                return self._price_flows(y, farkas=True)
        return self._add_all_flows()

    def _price_flows(self, y, force: bool = False, farkas: bool = False) -> int:
        """Add every missing flow column with a positive reduced cost, or with
        a positive Farkas value when ``farkas`` is set."""
        s, col = self.s, self.col
        fee = s.substrate.bandwidth_fee
        scale = float(np.abs(y).max()) if farkas and y is not None and len(y) else 1.0
        added = 0
        for (r, k) in self.commodities:
            w = s.request[r].link_bandwidths[k]
            for l in s.substrate.links:
                e = l.endpoints
                if ("d", r, k, e) in col:
                    continue
                idx = [self.cons_row[(r, k, e[0])], self.cons_row[(r, k, e[1])], self.cap_row[e]]
                val = [1.0, -1.0, w]
                if l.prop_delay:
                    idx.append(self.delay_row[r])
                    val.append(l.prop_delay)
                if not force:
                    az = sum(y[i] * v for i, v in zip(idx, val))
                    if farkas:
                        if az <= PRICE_TOL * scale:
                            continue
                    elif -fee * w - az <= PRICE_TOL * max(1.0, fee * w):
                        continue
                self.h.addCol(-fee * w, 0.0, 1.0, len(idx), np.asarray(idx, dtype=np.int32),
                              np.asarray(val, dtype=float))
                col[("d", r, k, e)] = self.h.getNumCol() - 1
                self.flow_keys.append((r, k, e))
                added += 1
        return added

    def _queues_init(self, n_cuts):
        s = self.s
        cap = delay_cap(s)
        self.queues = []
        for n in s.substrate.node_ids:
            mu = s.substrate.node[n].hypervisor_rate
            self.queues.append(_Queue(n, mu, self.col[("lam", n)], self.col[("dq", n)], mu - 1.0 / cap))
        for inst in self.instances:
            mu = s.type[inst[0]].service_rate
            self.queues.append(_Queue(inst, mu, self.col[("lam", inst)], self.col[("dq", inst)], mu - 1.0 / cap))
        for q in self.queues:
            if q.cap_lam <= 0:
                continue
            # geometric grid of delay values between the idle delay and the cap
            lo, hi = 1.0 / q.mu, 1.0 / (q.mu - q.cap_lam)
            for k in range(1, n_cuts + 1):
                dval = lo * (hi / lo) ** (k / n_cuts)
                lam = q.mu - 1.0 / dval
                self._cut_rows(q, lam, into_lp=True)

    def _cut_rows(self, q: _Queue, lam: float, into_lp: bool = False):
        lam = min(max(lam, 0.0), q.cap_lam)
        key = round(lam, 12)
        if key in q.cut_at:
            return False
        q.cut_at.add(key)
        g = 1.0 / (q.mu - lam)
        slope = g * g
        # d >= g + slope * (lam_var - lam)  <=>  d - slope*lam_var >= g - slope*lam
        if into_lp:
            self.lp.row([(q.d, 1.0), (q.lam, -slope)], lo=g - slope * lam)
        else:
            lpmod.add_row(self.h, [q.d, q.lam], [1.0, -slope], lo=g - slope * lam)
            self._cuts.append((q, key))
        return True

    def _purge_cuts(self):
        """Drop learned cuts that were slack at the last solution.  They stay
        valid, but thousands of them slow every later simplex run."""
        if len(self._cuts) <= self.cut_limit:
            return
        sol = self.h.getSolution()
        if not sol.value_valid:
            return
        rv = np.asarray(sol.row_value)
        base = self.h.getNumRow() - len(self._cuts)
        lp = self.h.getLp()
        lo = np.asarray(lp.row_lower_)
        drop, keep = [], []
        for k, (q, key) in enumerate(self._cuts):
            row = base + k
            if rv[row] - lo[row] > 1e-9 * max(1.0, abs(lo[row])):
                drop.append(row)
                q.cut_at.discard(key)
            else:
                keep.append((q, key))
        if drop:
            self.h.deleteRows(len(drop), np.asarray(drop, dtype=np.int32))
            self._cuts = keep

    # ------------------------------------------------------------ solve
    def var_index(self, key) -> int | None:
        """Column of a fixable binary: ("A", r), ("s", r, u, (t, i)) or ("p", (t, i), n)."""
        return self.col.get(key)

    def _apply_fixings(self, fixings):
        """Change only the bounds that differ from the previous solve so the
        simplex basis stays warm."""
        want = {}
        for key, val in (fixings or {}).items():
            j = self.col.get(key)
            if j is None:
                if val:
                    # forcing a variable that does not exist to 1 cannot be satisfied
                    return False
                continue
            want[j] = float(val)
        h = self.h
        for j in self._fixed_cols - want.keys():
            lb, ub = self._default_bounds[j]
            h.changeColBounds(j, lb, ub)
        for j, val in want.items():
            if self._fixed.get(j) == val:
                continue
            if j not in self._default_bounds:
                self._default_bounds[j] = (self.lp.lb[j], self.lp.ub[j])
            h.changeColBounds(j, val, val)
        self._fixed_cols = set(want)
        self._fixed = want
        return True

    def solve(self, fixings: dict | None = None, tol: float = DEFAULT_TOL,
              max_rounds: int = MAX_ROUNDS) -> RelaxedSolution:
        self.solves += 1
        self._purge_cuts()
        if not self._apply_fixings(fixings):
            return RelaxedSolution("infeasible")
        h = self.h
        residual = math.inf
        for rnd in range(1, max_rounds + 1):
            st = lpmod.run(h)
            self.lp_solves += 1
            if st == "infeasible":
                if self.colgen and self._price_infeasible():
                    # the restricted link set may be what is infeasible
                    continue
                return RelaxedSolution("infeasible", rounds=rnd)
            if st != "optimal":
                logger.warning("LP solve failed with status %s", st)
                return RelaxedSolution("numerical-failure", rounds=rnd)
            x = np.asarray(h.getSolution().col_value)
            added = 0
            residual = 0.0
            for q in self.queues:
                lam, dv = x[q.lam], x[q.d]
                if lam > q.cap_lam:
                    if self._cut_rows(q, q.cap_lam):
                        added += 1
                    continue
                g = 1.0 / (q.mu - lam)
                gap = (g - dv) / g
                if gap > tol:
                    residual = max(residual, gap)
                    if self._cut_rows(q, lam):
                        added += 1
            if not added and self.colgen:
                added = self._price_flows(np.asarray(h.getSolution().row_dual))
            if not added:
                return self._extract(x, h.getInfo().objective_function_value, rnd, residual)
        logger.warning("outer approximation hit %d rounds (residual %.3g)", max_rounds, residual)
        sol = self._extract(x, h.getInfo().objective_function_value, max_rounds, residual)
        sol.status = "numerical-failure"
        return sol

    def _extract(self, x, obj, rounds, residual) -> RelaxedSolution:
        s, col = self.s, self.col
        sol = RelaxedSolution("optimal", float(obj), rounds=rounds, residual=residual)
        sol.a_values = {r.id: float(x[col[("A", r.id)]]) for r in s.requests}
        sol.s_values = {(r, u, inst[0], inst[1]): float(x[col[("s", r, u, inst)]]) for (r, u, inst) in self.s_keys}
        if self.free:
            sol.p_values = {(inst[0], inst[1], n): float(x[col[("p", inst, n)]])
                            for inst in self.instances for n in s.substrate.node_ids}
        sol.flows = {key: float(x[col[("d",) + key]]) for key in self.flow_keys if x[col[("d",) + key]] > 1e-12}
        for q in self.queues:
            lam = float(x[q.lam])
            sol.loads[q.key] = lam
            sol.delays[q.key] = 1.0 / (q.mu - lam)
        return sol

    def dump(self, path) -> None:
        """Write the current LP (with learned cuts) in a solver-neutral format (.lp or .mps)."""
        self.h.writeModel(str(path))


def build_sp2cv(s: Scenario, placement: dict, fixings: dict | None = None) -> "ProblemHandle":
    return ProblemHandle(Relaxation(s, placement), dict(fixings or {}))


@dataclass
class ProblemHandle:
    relaxation: Relaxation
    fixings: dict

    def solve(self, tol: float = DEFAULT_TOL) -> RelaxedSolution:
        return self.relaxation.solve(self.fixings, tol=tol)


def solve(h: ProblemHandle, tol: float = DEFAULT_TOL) -> RelaxedSolution:
    return h.solve(tol)


def is_integral(sol: RelaxedSolution, tol: float = INT_TOL) -> bool:
    vals = list(sol.a_values.values()) + list(sol.s_values.values()) + list(sol.p_values.values())
    return all(min(v, 1 - v) <= tol for v in vals)
