"""Seeded scenario generators.

Three templates ship with the package:

``small``      the 6-node built-in topology with the small-scale catalog
               (CPU 220..260 per node, length-3 chains, flat revenue 9000).
``bteurope``   the BtEurope topology with its NFVI profile and the
               large-scale catalog; revenue 3000|N| + 15 f (|N| - 1).
``tiny``       2..4 nodes and 1..3 short chains with the small-scale
               catalog, sized so that exhaustive enumeration finishes in
               well under a second.
``stress``     tiny-sized, but with slow hypervisors, costly links, tight
               thresholds and revenues that may not cover costs.

Delay thresholds are in seconds.  With service rates in the hundreds the
queue delays 1/(mu - lam) are tens of milliseconds, so thresholds quoted in
microseconds would admit nothing.  Each template carries its own threshold
default, chosen so that delay binds when instances are loaded near the
sizing target (see ``DEFAULT_THRESHOLDS``).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from importlib import resources

from .model import (BTEUROPE_PROFILE, PhysicalLink, PhysicalNode, Scenario, ScenarioError,
                    SfcRequest, SubstrateNetwork, VnfType, import_graphml)

# edge list of the built-in 6-node topology: a ring with two chords
SMALL_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3), (1, 4)]
SMALL_LINK_DELAY = 0.5e-6
SMALL_MU_N = 2000.0
SMALL_SIGMA = 1000.0
SMALL_FEE = 10.0

# (id, cpu, strg, mem, mu, license)
SMALL_TYPES = [(1, 80, 200, 160, 100, 500), (2, 50, 250, 100, 100, 600),
               (3, 50, 250, 100, 100, 700), (4, 60, 300, 120, 100, 500)]
BTEUROPE_TYPES = [(1, 4, 90, 16, 450, 2000), (2, 7, 90, 24, 500, 2200),
                  (3, 6, 120, 32, 400, 1800), (4, 5, 100, 24, 450, 2500)]

DEFAULT_THRESHOLDS = {"small": 0.1, "bteurope": 0.04}


def _catalog(rows, max_instances=None):
    return tuple(VnfType(t, cpu, mem, strg, mu, c, max_instances)
                 for (t, cpu, strg, mem, mu, c) in rows)


def bteurope_revenue(length: int, flow: float) -> float:
    return 3000.0 * length + 15.0 * flow * (length - 1)


def small_substrate(rng: random.Random) -> SubstrateNetwork:
    nodes = tuple(PhysicalNode(n, float(rng.randint(220, 260)), 1000.0, 4000.0, SMALL_MU_N, SMALL_SIGMA)
                  for n in range(6))
    links = []
    for a, b in SMALL_EDGES:
        links.append(PhysicalLink((a, b), 1000.0, SMALL_LINK_DELAY))
        links.append(PhysicalLink((b, a), 1000.0, SMALL_LINK_DELAY))
    return SubstrateNetwork(nodes, tuple(links), SMALL_FEE)


def bteurope_substrate() -> SubstrateNetwork:
    path = resources.files("dcsm") / "data" / "bteurope.graphml"
    with resources.as_file(path) as p:
        return import_graphml(p, BTEUROPE_PROFILE)


@dataclass
class Template:
    """Generator parameters; ``None`` fields take the topology's default."""

    topology: str = "bteurope"
    num_sfcs: int = 10
    sfc_length: int = 4
    flow_rate: float = 100.0
    revenue: float | None = None
    delay_threshold: float | None = None
    theta: float = 0.7
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Template":
        if "topology" not in d:
            raise ScenarioError("template needs a topology", "template.topology")
        base = PRESETS.get(d["topology"], cls(d["topology"]))
        return replace(base, **{k: d[k] for k in ("num_sfcs", "sfc_length", "flow_rate", "revenue",
                                                  "delay_threshold", "theta") if k in d})

    def as_dict(self) -> dict:
        return {"topology": self.topology, "num_sfcs": self.num_sfcs, "sfc_length": self.sfc_length,
                "flow_rate": self.flow_rate, "revenue": self.revenue,
                "delay_threshold": self.delay_threshold, "theta": self.theta}


PRESETS = {
    "small": Template("small", num_sfcs=10, sfc_length=3, flow_rate=30.0),
    "bteurope": Template("bteurope", num_sfcs=10, sfc_length=4, flow_rate=100.0),
    "tiny": Template("tiny"),
    "stress": Template("stress"),
}


def generate_scenario(template, seed: int) -> Scenario:
    """Deterministic scenario for ``template`` (a Template, a dict or a preset name)."""
    if isinstance(template, str):
        if template not in PRESETS:
            raise ScenarioError(f"unknown template {template!r}", "template")
        template = PRESETS[template]
    elif isinstance(template, dict):
        template = Template.from_dict(template)
    rng = random.Random(seed)
    if template.topology == "tiny":
        return _tiny(rng, seed)
    if template.topology == "stress":
        return _stress(rng, seed)
    if template.topology == "small":
        sub = small_substrate(rng)
        types = _catalog(SMALL_TYPES)
        rev = template.revenue if template.revenue is not None else (lambda n, f: 9000.0)
    elif template.topology == "bteurope":
        sub = bteurope_substrate()
        types = _catalog(BTEUROPE_TYPES)
        rev = template.revenue if template.revenue is not None else bteurope_revenue
    else:
        raise ScenarioError(f"unknown topology {template.topology!r}", "template.topology")
    th = template.delay_threshold
    if th is None:
        th = DEFAULT_THRESHOLDS[template.topology]
    tids = [t.id for t in types]
    reqs = []
    for r in range(template.num_sfcs):
        seq = tuple(rng.choice(tids) for _ in range(template.sfc_length))
        f = float(template.flow_rate)
        value = rev(len(seq), f) if callable(rev) else float(rev)
        reqs.append(SfcRequest(r, seq, f, tuple([f] * (len(seq) - 1)), value, th))
    name = f"{template.topology}-n{template.num_sfcs}-l{template.sfc_length}-s{seed}"
    return Scenario(sub, types, tuple(reqs), theta=template.theta, name=name)


def _fits(s: Scenario) -> bool:
    from .exact import enumeration_count
    from .mldg import SubstrateExhausted, place_instances, size_instances

    if enumeration_count(s) > 20000:
        return False
    try:
        # keep the corpus comparable across solvers: the sized instances must fit
        place_instances(s, size_instances(s))
    except SubstrateExhausted:
        return False
    return True


def _tiny(rng: random.Random, seed: int) -> Scenario:
    """A scaled-down small-topology scenario: 2..4 nodes, up to 3 chains of
    length 1..3 with the small-scale catalog, at most 2 instances per type.

    Draws are repeated until the enumeration is small and the sized
    instances fit on the substrate.
    """
    for _ in range(100):
        n_nodes = rng.randint(2, 4)
        nodes = tuple(PhysicalNode(n, float(rng.randint(120, 260)), 1000.0, 4000.0, SMALL_MU_N, SMALL_SIGMA)
                      for n in range(n_nodes))
        edges = [(rng.randrange(k), k) for k in range(1, n_nodes)]
        for a in range(n_nodes):
            for b in range(a + 1, n_nodes):
                if (a, b) not in edges and rng.random() < 0.3:
                    edges.append((a, b))
        links = []
        for a, b in edges:
            links += [PhysicalLink((a, b), 1000.0, SMALL_LINK_DELAY), PhysicalLink((b, a), 1000.0, SMALL_LINK_DELAY)]
        sub = SubstrateNetwork(nodes, tuple(links), SMALL_FEE)
        rows = rng.sample(SMALL_TYPES, rng.randint(1, 3))
        types = tuple(VnfType(t, cpu, mem, strg, mu, c, rng.randint(1, 2)) for (t, cpu, strg, mem, mu, c) in rows)
        tids = sorted(t.id for t in types)
        reqs = []
        for r in range(rng.randint(1, 3)):
            seq = tuple(rng.choice(tids) for _ in range(rng.randint(1, 3)))
            reqs.append(SfcRequest(r, seq, 30.0, tuple([30.0] * (len(seq) - 1)), 9000.0,
                                   rng.choice([0.05, 0.1, 0.15])))
        s = Scenario(sub, types, tuple(reqs), name=f"tiny-s{seed}")
        if _fits(s):
            return s
    raise RuntimeError("could not draw a tiny scenario within the enumeration budget")


def _stress(rng: random.Random, seed: int) -> Scenario:
    """Like ``tiny`` but with slow hypervisors, costly links, tight thresholds
    and revenues that do not always cover the costs."""
    for _ in range(100):
        n_nodes = rng.randint(2, 4)
        nodes = tuple(PhysicalNode(n, float(rng.choice([100, 150, 200, 250])), 100.0, 100.0,
                                   float(rng.choice([150, 300, 1000])), float(rng.choice([0, 100, 300])))
                      for n in range(n_nodes))
        edges = [(rng.randrange(k), k) for k in range(1, n_nodes)]
        for a in range(n_nodes):
            for b in range(a + 1, n_nodes):
                if (a, b) not in edges and rng.random() < 0.3:
                    edges.append((a, b))
        links = []
        for a, b in edges:
            cap = float(rng.choice([40, 60, 100]))
            dl = rng.choice([0.001, 0.005, 0.02])
            links += [PhysicalLink((a, b), cap, dl), PhysicalLink((b, a), cap, dl)]
        sub = SubstrateNetwork(nodes, tuple(links), float(rng.choice([0.5, 1.0, 2.0])))
        n_types = rng.randint(1, 3)
        types = tuple(VnfType(t, float(rng.choice([50, 80, 100])), 10.0, 10.0, 100.0,
                              float(rng.choice([100, 200, 400])), rng.randint(1, 2))
                      for t in range(1, n_types + 1))
        reqs = []
        for r in range(rng.randint(1, 3)):
            length = rng.randint(1, 3)
            seq = tuple(rng.randint(1, n_types) for _ in range(length))
            f = float(rng.choice([20, 30, 40]))
            reqs.append(SfcRequest(r, seq, f, tuple([f] * (length - 1)),
                                   float(rng.choice([400, 800, 1500])),
                                   rng.choice([0.03, 0.05, 0.08, 0.15])))
        s = Scenario(sub, types, tuple(reqs), name=f"stress-s{seed}")
        if _fits(s):
            return s
    raise RuntimeError("could not draw a tiny scenario within the enumeration budget")
