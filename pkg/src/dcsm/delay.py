"""M/M/1 delay model of a physical node and per-chain delay aggregation.

Every server (hypervisor or VNF instance) is an M/M/1 queue with mean
sojourn time 1/(mu - lambda).  A chain pays the hypervisor delay once for
each node it touches, the instance delay once per VNF, and the propagation
delay of every physical link weighted by the fraction of traffic routed on it.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import Deployment, DerivedLoads, Scenario, ScenarioError, derive_loads

DEFAULT_MARGIN = 1e-6


class InstabilityError(ArithmeticError):
    """Arrival rate at or above the (margin-reduced) service rate."""


def mm1_delay(mu: float, lam: float, margin: float = DEFAULT_MARGIN) -> float:
    """Mean M/M/1 delay 1/(mu - lam).

    ``margin`` is the relative stability margin: lam must stay strictly
    below mu * (1 - margin).
    """
    if not mu > 0:
        raise ValueError(f"service rate must be positive, got {mu}")
    if lam < 0:
        raise ValueError(f"arrival rate must be non-negative, got {lam}")
    if lam >= mu - margin * mu:
        raise InstabilityError(f"unstable queue: lambda={lam} >= mu={mu} (margin {margin})")
    return 1.0 / (mu - lam)


def node_delay(s: Scenario, n, loads: DerivedLoads) -> float:
    return mm1_delay(s.substrate.node[n].hypervisor_rate, loads.node_load.get(n, 0.0), s.stability_margin)


def instance_delay(s: Scenario, t, i, loads: DerivedLoads) -> float:
    return mm1_delay(s.type[t].service_rate, loads.instance_load.get((t, i), 0.0), s.stability_margin)


@dataclass(frozen=True)
class DelayBreakdown:
    hypervisor: float
    instance: float
    link: float

    def __post_init__(self):
        if min(self.hypervisor, self.instance, self.link) < 0:
            raise ValueError("delay components must be non-negative")

    @property
    def total(self) -> float:
        return self.hypervisor + self.instance + self.link

    def within(self, threshold: float, slack: float = 0.0) -> bool:
        return self.total <= threshold + slack


def link_delay(s: Scenario, d: Deployment, r) -> float:
    links = s.substrate.link
    total = 0.0
    for (rr, _k, l), x in d.flow_split.items():
        if rr == r and x:
            total += links[l].prop_delay * x
    return total


def chain_delay(s: Scenario, d: Deployment, r, loads: DerivedLoads | None = None,
                mode: str = "queuing") -> DelayBreakdown:
    """Delay components of accepted chain ``r``.

    ``mode="fixed"`` replaces both queue terms by the scenario's constant
    per-node delay, charged once per touched node.
    """
    req = s.request[r]
    if not d.is_accepted(r):
        raise ScenarioError(f"request {r!r} is not accepted", "accepted")
    if loads is None:
        loads = derive_loads(s, d)
    touched = set()
    ins = 0.0
    for u in range(len(req)):
        if (r, u) not in d.vnf_to_instance:
            raise ScenarioError(f"VNF {u} of request {r!r} is unmapped", "vnf_to_instance")
        t, i = d.vnf_to_instance[(r, u)]
        touched.add(d.instance_to_node[(t, i)])
        if mode == "queuing":
            ins += instance_delay(s, t, i, loads)
    if mode == "queuing":
        hyp = sum(node_delay(s, n, loads) for n in sorted(touched, key=str))
    elif mode == "fixed":
        hyp = s.fixed_node_delay * len(touched)
    else:
        raise ValueError(f"unknown delay mode {mode!r}")
    return DelayBreakdown(hyp, ins, link_delay(s, d, r))
