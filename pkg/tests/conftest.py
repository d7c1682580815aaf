import pytest

from dcsm import (Deployment, PhysicalLink, PhysicalNode, Scenario, SfcRequest, SubstrateNetwork, VnfType,
                  illustrative_scenario)


def line_substrate(n_nodes=2, cpu=500.0, mu_n=2000.0, sigma=0.0, cap=1000.0, delay=1e-6, fee=1.0):
    nodes = tuple(PhysicalNode(k, cpu, 1000.0, 1000.0, mu_n, sigma) for k in range(n_nodes))
    links = []
    for k in range(n_nodes - 1):
        links += [PhysicalLink((k, k + 1), cap, delay), PhysicalLink((k + 1, k), cap, delay)]
    return SubstrateNetwork(nodes, tuple(links), fee)


def chain(rid, types, f=20.0, rev=1000.0, th=0.5):
    return SfcRequest(rid, tuple(types), f, tuple([f] * (len(types) - 1)), rev, th)


def scenario(substrate=None, types=None, requests=(), **kw):
    substrate = substrate or line_substrate()
    types = types or (VnfType(1, 100, 100, 100, 100, 100, 1), VnfType(2, 100, 100, 100, 100, 150, 1))
    return Scenario(substrate, tuple(types), tuple(requests), **kw)


def single_link_deployment(s, placement):
    """Accept every chain of ``s`` with instance 0 of each type and route adjacent hops directly."""
    acc = {r.id: True for r in s.requests}
    v2i = {(r.id, u): (t, 0) for r in s.requests for u, t in enumerate(r.vnf_types)}
    flow, bw = {}, {}
    for r in s.requests:
        for k in range(len(r) - 1):
            a, b = placement[(r.vnf_types[k], 0)], placement[(r.vnf_types[k + 1], 0)]
            if a != b:
                flow[(r.id, k, (a, b))] = 1.0
                bw[(a, b)] = bw.get((a, b), 0.0) + r.link_bandwidths[k]
    return Deployment(acc, v2i, dict(placement), flow, bw)


@pytest.fixture
def illustrative():
    return illustrative_scenario()


VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the session summary prints them all."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
