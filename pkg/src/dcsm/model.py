"""Problem-instance and decision data types, scenario files, derived loads.

Units are seconds for every delay and traffic-units per second for every
rate.  Scenario files may declare another time unit in their ``units``
block; values are converted on load and always written back in seconds.
"""
from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping

import networkx as nx
import yaml

logger = logging.getLogger(__name__)

NodeId = Hashable
TypeId = Hashable
RequestId = Hashable
Instance = tuple  # (type id, instance index)
Link = tuple  # (tail node, head node)

TIME_UNITS = {"s": 1.0, "seconds": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6}
NODE_COST_MODES = ("per-node", "per-chain")


class ScenarioError(ValueError):
    """A scenario or deployment violates a structural invariant.

    ``path`` names the offending field, e.g. ``requests[2].flow_rate``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ScenarioParseError(ScenarioError):
    pass


def idkey(x) -> tuple:
    """Sort key that orders mixed int/str identifiers deterministically."""
    if isinstance(x, bool):
        return (0, int(x), "")
    if isinstance(x, (int, float)):
        return (0, x, "")
    if isinstance(x, tuple):
        return (2, 0, tuple(idkey(y) for y in x))
    return (1, 0, str(x))


@dataclass(frozen=True)
class PhysicalNode:
    id: NodeId
    cpu_capacity: float
    mem_capacity: float
    strg_capacity: float
    hypervisor_rate: float
    activation_cost: float = 0.0

    def __post_init__(self):
        for name in ("cpu_capacity", "mem_capacity", "strg_capacity", "hypervisor_rate"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"must be > 0, got {getattr(self, name)!r}", name)
        if self.activation_cost < 0:
            raise ScenarioError("must be >= 0", "activation_cost")


@dataclass(frozen=True)
class PhysicalLink:
    endpoints: Link
    capacity: float
    prop_delay: float

    def __post_init__(self):
        if len(self.endpoints) != 2 or self.endpoints[0] == self.endpoints[1]:
            raise ScenarioError("endpoints must be two distinct nodes", "endpoints")
        if not self.capacity > 0:
            raise ScenarioError("must be > 0", "capacity")
        if self.prop_delay < 0:
            raise ScenarioError("must be >= 0", "prop_delay")


@dataclass(frozen=True)
class SubstrateNetwork:
    nodes: tuple[PhysicalNode, ...]
    links: tuple[PhysicalLink, ...]
    bandwidth_fee: float = 0.0

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate node id", "substrate.nodes")
        known = set(ids)
        seen = set()
        for k, link in enumerate(self.links):
            for end in link.endpoints:
                if end not in known:
                    raise ScenarioError(f"unknown node {end!r}", f"substrate.links[{k}].endpoints")
            if link.endpoints in seen:
                raise ScenarioError(f"duplicate directed link {link.endpoints!r}", f"substrate.links[{k}]")
            seen.add(link.endpoints)
        if self.bandwidth_fee < 0:
            raise ScenarioError("must be >= 0", "economics.bandwidth_fee")

    @cached_property
    def node(self) -> dict:
        return {n.id: n for n in self.nodes}

    @cached_property
    def link(self) -> dict:
        return {l.endpoints: l for l in self.links}

    @cached_property
    def node_ids(self) -> list:
        return [n.id for n in self.nodes]

    @cached_property
    def link_ids(self) -> list:
        return [l.endpoints for l in self.links]

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        for l in self.links:
            g.add_edge(*l.endpoints, capacity=l.capacity, delay=l.prop_delay)
        return g


@dataclass(frozen=True)
class VnfType:
    id: TypeId
    cpu_req: float
    mem_req: float
    strg_req: float
    service_rate: float
    license_cost: float
    max_instances: int | None = None

    def __post_init__(self):
        if not self.service_rate > 0:
            raise ScenarioError("must be > 0", "service_rate")
        for name in ("cpu_req", "mem_req", "strg_req", "license_cost"):
            if getattr(self, name) < 0:
                raise ScenarioError("must be >= 0", name)
        if self.max_instances is not None and self.max_instances < 1:
            raise ScenarioError("must be >= 1", "max_instances")


@dataclass(frozen=True)
class SfcRequest:
    id: RequestId
    vnf_types: tuple
    flow_rate: float
    link_bandwidths: tuple
    revenue: float
    delay_threshold: float

    def __post_init__(self):
        if len(self.vnf_types) < 1:
            raise ScenarioError("chain needs at least one VNF", "vnf_types")
        if len(self.link_bandwidths) != len(self.vnf_types) - 1:
            raise ScenarioError("need one bandwidth per consecutive VNF pair", "link_bandwidths")
        if not self.flow_rate > 0:
            raise ScenarioError("must be > 0", "flow_rate")
        if not self.delay_threshold > 0:
            raise ScenarioError("must be > 0", "delay_threshold")
        if any(w < 0 for w in self.link_bandwidths):
            raise ScenarioError("must be >= 0", "link_bandwidths")

    def __len__(self):
        return len(self.vnf_types)

    @property
    def virtual_links(self) -> list[tuple[int, int]]:
        return [(u, u + 1) for u in range(len(self.vnf_types) - 1)]


def estimate_instances(requests: Iterable[SfcRequest], types: Iterable[VnfType], theta: float) -> dict:
    """Per-type instance count ceil(sum of offered flow / (theta * mu_t))."""
    load = defaultdict(float)
    for r in requests:
        for t in r.vnf_types:
            load[t] += r.flow_rate
    out = {}
    for t in types:
        # the small guard keeps exact multiples (70/70) from rounding up on float noise
        out[t.id] = int(math.ceil(load[t.id] / (theta * t.service_rate) - 1e-9)) if load[t.id] > 0 else 0
    return out


@dataclass(frozen=True)
class Scenario:
    substrate: SubstrateNetwork
    types: tuple[VnfType, ...]
    requests: tuple[SfcRequest, ...]
    theta: float = 0.7
    node_cost_mode: str = "per-node"
    fixed_node_delay: float = 3e-6
    stability_margin: float = 1e-6
    name: str = ""

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ScenarioError("theta out of (0,1)", "params.theta")
        if self.node_cost_mode not in NODE_COST_MODES:
            raise ScenarioError(f"expected one of {NODE_COST_MODES}", "economics.node_cost_mode")
        tids = [t.id for t in self.types]
        if len(set(tids)) != len(tids):
            raise ScenarioError("duplicate type id", "types")
        rids = [r.id for r in self.requests]
        if len(set(rids)) != len(rids):
            raise ScenarioError("duplicate request id", "requests")
        known = set(tids)
        for k, r in enumerate(self.requests):
            for u, t in enumerate(r.vnf_types):
                if t not in known:
                    raise ScenarioError(f"unknown VNF type {t!r}", f"requests[{k}].vnf_types[{u}]")

    @cached_property
    def type(self) -> dict:
        return {t.id: t for t in self.types}

    @cached_property
    def request(self) -> dict:
        return {r.id: r for r in self.requests}

    @cached_property
    def estimated_instances(self) -> dict:
        return estimate_instances(self.requests, self.types, self.theta)

    def instance_count(self, t: TypeId) -> int:
        """|I_t|: explicit ``max_instances`` or the sizing estimate."""
        vt = self.type[t]
        if vt.max_instances is not None:
            return vt.max_instances
        return self.estimated_instances[t]

    @cached_property
    def instances(self) -> list:
        return [(t.id, i) for t in self.types for i in range(self.instance_count(t.id))]

    def mu(self, key) -> float:
        """Service rate of a node id, or of an instance given as (type, index)."""
        if isinstance(key, tuple):
            return self.type[key[0]].service_rate
        return self.substrate.node[key].hypervisor_rate

    def stable_limit(self, mu: float) -> float:
        """Largest admissible arrival rate for a queue with rate ``mu``."""
        return mu - self.stability_margin * mu

    def with_requests(self, requests) -> "Scenario":
        return replace(self, requests=tuple(requests))

    @property
    def total_traffic(self) -> float:
        return sum(r.flow_rate * len(r.vnf_types) for r in self.requests)


@dataclass(frozen=True)
class Deployment:
    """A complete decision.

    accepted         request id -> bool
    vnf_to_instance  (request id, position) -> (type id, instance index)
    instance_to_node (type id, instance index) -> node id
    flow_split       (request id, virtual-link index, (n, m)) -> fraction
    allocated_bw     (n, m) -> traffic units
    """

    accepted: dict = field(default_factory=dict)
    vnf_to_instance: dict = field(default_factory=dict)
    instance_to_node: dict = field(default_factory=dict)
    flow_split: dict = field(default_factory=dict)
    allocated_bw: dict = field(default_factory=dict)

    def is_accepted(self, r) -> bool:
        return bool(self.accepted.get(r, False))

    @property
    def accepted_ids(self) -> list:
        return sorted((r for r, a in self.accepted.items() if a), key=idkey)

    def vnf_node(self, r, u):
        return self.instance_to_node[self.vnf_to_instance[(r, u)]]

    def acceptance_rate(self, n_offered: int) -> float:
        return len(self.accepted_ids) / n_offered if n_offered else 0.0


def empty_deployment(s: Scenario) -> Deployment:
    return Deployment(accepted={r.id: False for r in s.requests})


@dataclass(frozen=True)
class DerivedLoads:
    instance_load: dict
    node_load: dict
    node_instance_flow: dict
    node_touched: dict
    vnf_on_node: dict
    instance_active: dict


def derive_loads(s: Scenario, d: Deployment) -> DerivedLoads:
    """Instance and hypervisor arrival rates implied by a deployment."""
    nodes = s.substrate.node
    inst_load = {}
    active = {}
    for (t, i), n in d.instance_to_node.items():
        if t not in s.type:
            raise ScenarioError(f"unknown type {t!r}", "instance_to_node")
        if n not in nodes:
            raise ScenarioError(f"unknown node {n!r}", "instance_to_node")
        inst_load[(t, i)] = 0.0
        active[(t, i)] = False
    vnf_on_node = {}
    touched = {}
    for (r, u), inst in d.vnf_to_instance.items():
        if r not in s.request:
            raise ScenarioError(f"unknown request {r!r}", "vnf_to_instance")
        if not d.is_accepted(r):
            continue
        if inst not in d.instance_to_node:
            raise ScenarioError(f"instance {inst!r} is not placed", "vnf_to_instance")
        inst_load[inst] += s.request[r].flow_rate
        active[inst] = True
        n = d.instance_to_node[inst]
        vnf_on_node[(r, u, n)] = True
        touched[(r, n)] = True
    node_load = {n: 0.0 for n in nodes}
    y = {}
    for inst, n in d.instance_to_node.items():
        y[(n,) + tuple(inst)] = inst_load[inst]
        node_load[n] += inst_load[inst]
    return DerivedLoads(inst_load, node_load, y, touched, vnf_on_node, active)


# ---------------------------------------------------------------- files

def _time_scale(units: Mapping | None) -> float:
    unit = (units or {}).get("time", "s")
    if unit not in TIME_UNITS:
        raise ScenarioParseError(f"unknown time unit {unit!r}", "units.time")
    return TIME_UNITS[unit]


def _get(d: Mapping, key: str, path: str, default=...):
    if key in d:
        return d[key]
    if default is ...:
        raise ScenarioError("missing field", f"{path}.{key}")
    return default


def _node_id(x):
    return str(x)


def scenario_from_dict(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioParseError("top level must be a mapping")
    scale = _time_scale(data.get("units"))
    sub = _get(data, "substrate", "")
    econ = data.get("economics") or {}
    params = data.get("params") or {}
    nodes = []
    for k, nd in enumerate(_get(sub, "nodes", "substrate")):
        p = f"substrate.nodes[{k}]"
        try:
            nodes.append(PhysicalNode(
                id=_node_id(_get(nd, "id", p)),
                cpu_capacity=float(_get(nd, "cpu_capacity", p)),
                mem_capacity=float(_get(nd, "mem_capacity", p)),
                strg_capacity=float(_get(nd, "strg_capacity", p)),
                hypervisor_rate=float(_get(nd, "hypervisor_rate", p)),
                activation_cost=float(nd.get("activation_cost", 0.0)),
            ))
        except ScenarioError as e:
            raise ScenarioError(str(e).split(": ", 1)[-1], f"{p}.{e.path}" if not e.path.startswith(p) else e.path) from None
    links = []
    for k, ld in enumerate(sub.get("links") or []):
        p = f"substrate.links[{k}]"
        ends = tuple(_node_id(x) for x in _get(ld, "endpoints", p))
        kw = dict(capacity=float(_get(ld, "capacity", p)), prop_delay=float(_get(ld, "prop_delay", p)) * scale)
        try:
            links.append(PhysicalLink(ends, **kw))
            if not ld.get("directed", False):
                links.append(PhysicalLink(ends[::-1], **kw))
        except ScenarioError as e:
            raise ScenarioError(str(e).split(": ", 1)[-1], f"{p}.{e.path}") from None
    substrate = SubstrateNetwork(tuple(nodes), tuple(links), float(econ.get("bandwidth_fee", 0.0)))
    types = []
    for k, td in enumerate(_get(data, "types", "")):
        p = f"types[{k}]"
        try:
            mi = td.get("max_instances")
            types.append(VnfType(
                id=_get(td, "id", p),
                cpu_req=float(_get(td, "cpu_req", p)),
                mem_req=float(_get(td, "mem_req", p)),
                strg_req=float(_get(td, "strg_req", p)),
                service_rate=float(_get(td, "service_rate", p)),
                license_cost=float(_get(td, "license_cost", p)),
                max_instances=None if mi is None else int(mi),
            ))
        except ScenarioError as e:
            raise ScenarioError(str(e).split(": ", 1)[-1], f"{p}.{e.path}" if not e.path.startswith(p) else e.path) from None
    requests = []
    for k, rd in enumerate(data.get("requests") or []):
        p = f"requests[{k}]"
        try:
            vt = tuple(_get(rd, "vnf_types", p))
            f = float(_get(rd, "flow_rate", p))
            bws = rd.get("link_bandwidths")
            if bws is None:
                bws = [f] * max(len(vt) - 1, 0)
            requests.append(SfcRequest(
                id=_get(rd, "id", p),
                vnf_types=vt,
                flow_rate=f,
                link_bandwidths=tuple(float(w) for w in bws),
                revenue=float(_get(rd, "revenue", p)),
                delay_threshold=float(_get(rd, "delay_threshold", p)) * scale,
            ))
        except ScenarioError as e:
            raise ScenarioError(str(e).split(": ", 1)[-1], f"{p}.{e.path}" if not e.path.startswith(p) else e.path) from None
    return Scenario(
        substrate=substrate,
        types=tuple(types),
        requests=tuple(requests),
        theta=float(params.get("theta", 0.7)),
        node_cost_mode=econ.get("node_cost_mode", "per-node"),
        fixed_node_delay=float(params.get("fixed_node_delay", 3e-6 / scale)) * scale,
        stability_margin=float(params.get("stability_margin", 1e-6)),
        name=str(data.get("name", "")),
    )


def scenario_to_dict(s: Scenario) -> dict:
    """Plain-data form of a scenario; directed links are written explicitly."""
    return {
        "name": s.name,
        "units": {"time": "s", "rate": "traffic-units/s", "cpu": "cores", "mem": "GB", "strg": "GB"},
        "substrate": {
            "nodes": [
                {"id": n.id, "cpu_capacity": n.cpu_capacity, "mem_capacity": n.mem_capacity,
                 "strg_capacity": n.strg_capacity, "hypervisor_rate": n.hypervisor_rate,
                 "activation_cost": n.activation_cost}
                for n in s.substrate.nodes
            ],
            "links": [
                {"endpoints": list(l.endpoints), "capacity": l.capacity, "prop_delay": l.prop_delay, "directed": True}
                for l in s.substrate.links
            ],
        },
        "types": [
            {"id": t.id, "cpu_req": t.cpu_req, "mem_req": t.mem_req, "strg_req": t.strg_req,
             "service_rate": t.service_rate, "license_cost": t.license_cost,
             **({"max_instances": t.max_instances} if t.max_instances is not None else {})}
            for t in s.types
        ],
        "requests": [
            {"id": r.id, "vnf_types": list(r.vnf_types), "flow_rate": r.flow_rate,
             "link_bandwidths": list(r.link_bandwidths), "revenue": r.revenue,
             "delay_threshold": r.delay_threshold}
            for r in s.requests
        ],
        "economics": {"bandwidth_fee": s.substrate.bandwidth_fee, "node_cost_mode": s.node_cost_mode},
        "params": {"theta": s.theta, "fixed_node_delay": s.fixed_node_delay, "stability_margin": s.stability_margin},
    }


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"malformed scenario file {path}: {e}") from None
    return scenario_from_dict(data)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))


def deployment_to_dict(d: Deployment) -> dict:
    return {
        "accepted": [{"request": r, "accepted": bool(a)} for r, a in d.accepted.items()],
        "vnf_to_instance": [
            {"request": r, "position": u, "type": t, "instance": i}
            for (r, u), (t, i) in d.vnf_to_instance.items()
        ],
        "instance_to_node": [{"type": t, "instance": i, "node": n} for (t, i), n in d.instance_to_node.items()],
        "flow_split": [
            {"request": r, "vlink": k, "link": list(l), "fraction": float(x)}
            for (r, k, l), x in d.flow_split.items()
        ],
        "allocated_bw": [{"link": list(l), "bw": float(b)} for l, b in d.allocated_bw.items()],
    }


def deployment_from_dict(data: Mapping) -> Deployment:
    try:
        return Deployment(
            accepted={e["request"]: bool(e["accepted"]) for e in data.get("accepted", [])},
            vnf_to_instance={(e["request"], int(e["position"])): (e["type"], int(e["instance"]))
                             for e in data.get("vnf_to_instance", [])},
            instance_to_node={(e["type"], int(e["instance"])): _node_id(e["node"])
                              for e in data.get("instance_to_node", [])},
            flow_split={(e["request"], int(e["vlink"]), tuple(_node_id(x) for x in e["link"])): float(e["fraction"])
                        for e in data.get("flow_split", [])},
            allocated_bw={tuple(_node_id(x) for x in e["link"]): float(e["bw"]) for e in data.get("allocated_bw", [])},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioParseError(f"malformed deployment: {e!r}") from None


def load_deployment(path) -> Deployment:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"malformed deployment file {path}: {e}") from None
    return deployment_from_dict(data or {})


def save_deployment(d: Deployment, path) -> None:
    Path(path).write_text(yaml.safe_dump(deployment_to_dict(d), sort_keys=False))


# ---------------------------------------------------------------- GraphML

@dataclass(frozen=True)
class ResourceProfile:
    """Fallback attributes for topologies that carry no NFVI data."""

    cpu: float = 24.0
    mem: float = 256.0
    strg: float = 10000.0
    mu_n: float = 2000.0
    activation_cost: float = 1000.0
    link_capacity: float = 10000.0
    link_delay: float = 0.5e-6
    bandwidth_fee: float = 10.0


BTEUROPE_PROFILE = ResourceProfile()

_GML = "{http://graphml.graphdrawing.org/xmlns}"


def import_graphml(path, defaults: ResourceProfile = BTEUROPE_PROFILE) -> SubstrateNetwork:
    """Read a GraphML topology; every undirected edge becomes two directed links.

    Optional node attributes ``cpu``, ``mem``, ``strg``, ``mu_n``, ``sigma`` and
    edge attributes ``capacity``, ``delay`` (seconds) override ``defaults``.
    """
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise ScenarioParseError(f"malformed GraphML {path}: {e}") from None
    declared = {el.get("id") for el in root.iter(f"{_GML}node")} | {el.get("id") for el in root.iter("node")}
    declared.discard(None)
    for el in list(root.iter(f"{_GML}edge")) + list(root.iter("edge")):
        for end in (el.get("source"), el.get("target")):
            if end not in declared:
                raise ScenarioParseError(f"edge references undeclared node {end!r}", "graphml.edge")
    try:
        g = nx.read_graphml(path)
    except Exception as e:  # networkx raises several unrelated types here
        raise ScenarioParseError(f"cannot read GraphML {path}: {e}") from None
    ug = nx.Graph(g.to_undirected()) if g.is_directed() else nx.Graph(g)
    if ug.number_of_nodes() and not nx.is_connected(ug):
        logger.warning("topology %s is disconnected", path)
    nodes = tuple(
        PhysicalNode(
            id=str(n),
            cpu_capacity=float(a.get("cpu", defaults.cpu)),
            mem_capacity=float(a.get("mem", defaults.mem)),
            strg_capacity=float(a.get("strg", defaults.strg)),
            hypervisor_rate=float(a.get("mu_n", defaults.mu_n)),
            activation_cost=float(a.get("sigma", defaults.activation_cost)),
        )
        for n, a in g.nodes(data=True)
    )
    links = []
    seen = set()
    for u, v, a in g.edges(data=True):
        if u == v:
            continue
        cap = float(a.get("capacity", defaults.link_capacity))
        dl = float(a.get("delay", defaults.link_delay))
        pairs = [(str(u), str(v))] if g.is_directed() else [(str(u), str(v)), (str(v), str(u))]
        for e in pairs:
            if e not in seen:
                seen.add(e)
                links.append(PhysicalLink(e, cap, dl))
    return SubstrateNetwork(nodes, tuple(links), defaults.bandwidth_fee)
