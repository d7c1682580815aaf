"""Constraint checking of complete deployments and the gain accounting."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .delay import DelayBreakdown, InstabilityError, chain_delay
from .model import Deployment, DerivedLoads, Scenario, ScenarioError, derive_loads, idkey

FLOW_TOL = 1e-9
DELAY_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    constraint: str
    location: str
    magnitude: float

    def __str__(self):
        return f"({self.constraint}) {self.location}: {self.magnitude:.6g}"


@dataclass
class ViolationReport:
    violations: list = field(default_factory=list)

    def add(self, constraint, location, magnitude=1.0):
        self.violations.append(Violation(str(constraint), location, float(magnitude)))

    def __bool__(self):
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def constraints(self) -> list[str]:
        return [v.constraint for v in self.violations]

    def to_text(self) -> str:
        if not self.violations:
            return "feasible: no violations\n"
        return "".join(f"{v}\n" for v in self.violations)


@dataclass(frozen=True)
class EconomicReport:
    revenue: float
    node_activation_cost: float
    license_cost: float
    bandwidth_cost: float

    @property
    def total_cost(self) -> float:
        return self.node_activation_cost + self.license_cost + self.bandwidth_cost

    @property
    def gain(self) -> float:
        return self.revenue - self.total_cost

    def as_dict(self) -> dict:
        return {"revenue": self.revenue, "node_activation_cost": self.node_activation_cost,
                "license_cost": self.license_cost, "bandwidth_cost": self.bandwidth_cost,
                "total_cost": self.total_cost, "gain": self.gain}


def _slack(x, tol):
    return tol * max(1.0, abs(x))


def validate(s: Scenario, d: Deployment, *, delay_model: str = "queuing",
             enforce_instance_limit: bool = True, tol: float = FLOW_TOL,
             delay_tol: float = DELAY_TOL) -> ViolationReport:
    """Check a deployment against every model constraint.

    Violations come back as data; nothing here raises for an infeasible
    deployment.  ``delay_model="fixed"`` swaps the queuing delays for the
    constant per-node delay and skips the queue stability checks.
    """
    rep = ViolationReport()
    nodes = s.substrate.node
    links = s.substrate.link

    # references first: later checks assume they resolve
    for r in d.accepted:
        if r not in s.request:
            rep.add("ref", f"accepted[{r!r}] unknown request")
    for (r, u), (t, i) in d.vnf_to_instance.items():
        if r not in s.request:
            rep.add("ref", f"vnf_to_instance[{r!r},{u}] unknown request")
        elif not 0 <= u < len(s.request[r]):
            rep.add("ref", f"vnf_to_instance[{r!r},{u}] position out of range")
        if t not in s.type:
            rep.add("ref", f"vnf_to_instance[{r!r},{u}] unknown type {t!r}")
    for (t, i), n in d.instance_to_node.items():
        if t not in s.type:
            rep.add("ref", f"instance_to_node[{t!r},{i}] unknown type")
        if n not in nodes:
            rep.add("ref", f"instance_to_node[{t!r},{i}] unknown node {n!r}")
        if enforce_instance_limit and t in s.type and not 0 <= i < s.instance_count(t):
            rep.add("instance-index", f"instance ({t!r},{i}) outside 0..{s.instance_count(t) - 1}")
    for (r, k, l), x in d.flow_split.items():
        if l not in links:
            rep.add("ref", f"flow_split[{r!r},{k}] unknown link {l!r}")
        if r not in s.request:
            rep.add("ref", f"flow_split[{r!r},{k}] unknown request")
    for l in d.allocated_bw:
        if l not in links:
            rep.add("ref", f"allocated_bw unknown link {l!r}")
    if rep:
        return rep

    # every VNF of an accepted chain on exactly one instance of its type
    for req in s.requests:
        acc = d.is_accepted(req.id)
        for u, t in enumerate(req.vnf_types):
            inst = d.vnf_to_instance.get((req.id, u))
            if acc and inst is None:
                rep.add("mapping", f"request {req.id!r} VNF {u} unmapped")
            elif acc and inst[0] != t:
                rep.add("mapping", f"request {req.id!r} VNF {u} mapped to type {inst[0]!r}, needs {t!r}")
            elif not acc and inst is not None:
                rep.add("mapping", f"rejected request {req.id!r} VNF {u} still mapped")
    # used instances are placed
    for (r, u), inst in d.vnf_to_instance.items():
        if d.is_accepted(r) and inst not in d.instance_to_node:
            rep.add("placement", f"instance {inst!r} used by request {r!r} VNF {u} is not placed")
    if rep:
        return rep

    # flow conservation, fractions in [0,1]
    net = defaultdict(float)
    for (r, k, (n, m)), x in d.flow_split.items():
        if x < -tol or x > 1 + tol:
            rep.add("flow", f"request {r!r} vlink {k} link {(n, m)!r} fraction {x:.6g} outside [0,1]", abs(x))
        if not d.is_accepted(r):
            if abs(x) > tol:
                rep.add("flow", f"rejected request {r!r} carries flow on {(n, m)!r}", abs(x))
            continue
        if not 0 <= k < len(s.request[r]) - 1:
            rep.add("flow", f"request {r!r} has no virtual link {k}", abs(x))
            continue
        net[(r, k, n)] += x
        net[(r, k, m)] -= x
    for r in d.accepted_ids:
        req = s.request[r]
        for k in range(len(req) - 1):
            src, dst = d.vnf_node(r, k), d.vnf_node(r, k + 1)
            for n in s.substrate.node_ids:
                want = (n == src) - (n == dst)
                err = net.get((r, k, n), 0.0) - want
                if abs(err) > tol:
                    rep.add("flow", f"request {r!r} vlink {k} node {n!r} imbalance", abs(err))

    # bandwidth
    need = defaultdict(float)
    for (r, k, l), x in d.flow_split.items():
        if d.is_accepted(r) and 0 <= k < len(s.request[r]) - 1:
            need[l] += s.request[r].link_bandwidths[k] * x
    for l in s.substrate.link_ids:
        bw = d.allocated_bw.get(l, 0.0)
        if abs(bw - need[l]) > _slack(need[l], tol):
            rep.add("bandwidth", f"link {l!r} allocated {bw:.6g} != routed {need[l]:.6g}", abs(bw - need[l]))
        cap = links[l].capacity
        if bw > cap + _slack(cap, tol):
            rep.add("link-capacity", f"link {l!r} bandwidth {bw:.6g} > capacity {cap:.6g}", bw - cap)

    # node resources for every placed instance
    use = defaultdict(lambda: [0.0, 0.0, 0.0])
    for (t, i), n in d.instance_to_node.items():
        vt = s.type[t]
        u = use[n]
        u[0] += vt.cpu_req
        u[1] += vt.strg_req
        u[2] += vt.mem_req
    for n in sorted(use, key=idkey):
        node = nodes[n]
        for cid, used, cap, what in (("cpu", use[n][0], node.cpu_capacity, "CPU"),
                                     ("storage", use[n][1], node.strg_capacity, "storage"),
                                     ("memory", use[n][2], node.mem_capacity, "memory")):
            if used > cap + _slack(cap, tol):
                rep.add(cid, f"node {n!r} {what} {used:.6g} > {cap:.6g}", used - cap)

    loads = derive_loads(s, d)
    if delay_model == "queuing":
        for (t, i), lam in sorted(loads.instance_load.items(), key=lambda kv: idkey(kv[0])):
            lim = s.stable_limit(s.type[t].service_rate)
            if lam >= lim:
                rep.add("instance-stability", f"instance ({t!r},{i}) load {lam:.6g} >= stable limit {lim:.6g}", lam - lim)
        for n, lam in loads.node_load.items():
            lim = s.stable_limit(nodes[n].hypervisor_rate)
            if lam >= lim:
                rep.add("node-stability", f"node {n!r} load {lam:.6g} >= stable limit {lim:.6g}", lam - lim)
        if rep:
            return rep

    # end-to-end delay
    for r in d.accepted_ids:
        try:
            br = chain_delay(s, d, r, loads, mode=delay_model)
        except InstabilityError as e:
            rep.add("node-stability", f"request {r!r}: {e}")
            continue
        check_delay(r, br, s.request[r].delay_threshold, rep, delay_tol)
    return rep


def check_delay(r, br: DelayBreakdown, threshold: float, rep: ViolationReport | None = None,
                tol: float = DELAY_TOL) -> ViolationReport:
    """End-to-end delay check of one chain; appends to ``rep`` when given."""
    rep = ViolationReport() if rep is None else rep
    if br.total > threshold + tol:
        rep.add("delay", f"request {r!r} delay {br.total:.6g} > threshold {threshold:.6g}", br.total - threshold)
    return rep


def active_nodes(d: Deployment, loads: DerivedLoads) -> set:
    return {d.instance_to_node[inst] for inst, on in loads.instance_active.items() if on}


def economics(s: Scenario, d: Deployment, loads: DerivedLoads | None = None) -> EconomicReport:
    """Revenue, the three cost terms, and gain of a deployment."""
    for r in d.accepted:
        if r not in s.request:
            raise ScenarioError(f"unknown request {r!r}", "accepted")
    for l in d.allocated_bw:
        if l not in s.substrate.link:
            raise ScenarioError(f"unknown link {l!r}", "allocated_bw")
    if loads is None:
        loads = derive_loads(s, d)
    rev = sum(s.request[r].revenue for r in d.accepted_ids)
    nodes = s.substrate.node
    if s.node_cost_mode == "per-node":
        node_cost = sum(nodes[n].activation_cost for n in active_nodes(d, loads))
    else:
        # literal per-chain charging: sigma_n once per accepted chain touching n
        node_cost = sum(nodes[n].activation_cost for (_r, n) in loads.node_touched)
    lic = sum(s.type[t].license_cost for (t, _i), on in loads.instance_active.items() if on)
    bw = s.substrate.bandwidth_fee * sum(d.allocated_bw.values())
    return EconomicReport(rev, node_cost, lic, bw)
