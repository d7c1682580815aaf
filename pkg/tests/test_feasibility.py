from decimal import Decimal

import pytest

from dcsm import (DelayBreakdown, Deployment, VnfType, check_delay, economics, empty_deployment, validate)
from dcsm.generate import SMALL_TYPES

from conftest import chain, line_substrate, scenario, single_link_deployment


def test_empty_deployment_is_feasible(illustrative):
    assert validate(illustrative, empty_deployment(illustrative)).feasible
    e = economics(illustrative, empty_deployment(illustrative))
    assert (e.revenue, e.total_cost, e.gain) == (0, 0, 0)


def test_unmapped_vnf():
    s = scenario(requests=[chain(0, [1, 2])])
    d = Deployment({0: True}, {(0, 0): (1, 0)}, {(1, 0): 0})
    rep = validate(s, d)
    assert rep.constraints() == ["mapping"]


def test_cpu_overload_magnitude():
    t1 = SMALL_TYPES[0]
    types = (VnfType(1, t1[1], t1[3], t1[2], t1[4], t1[5], 2),)
    s = scenario(substrate=line_substrate(1, cpu=150), types=types)
    d = Deployment({}, {}, {(1, 0): 0, (1, 1): 0})
    rep = validate(s, d)
    (v,) = [v for v in rep if v.constraint == "cpu"]
    assert v.magnitude == pytest.approx(10)


def test_flow_imbalance_and_bandwidth():
    s = scenario(requests=[chain(0, [1, 2])])
    good = single_link_deployment(s, {(1, 0): 0, (2, 0): 1})
    assert validate(s, good).feasible
    bad = Deployment(good.accepted, good.vnf_to_instance, good.instance_to_node, {}, good.allocated_bw)
    assert "flow" in validate(s, bad).constraints()
    short = Deployment(good.accepted, good.vnf_to_instance, good.instance_to_node, good.flow_split, {})
    assert validate(s, short).constraints() == ["bandwidth"]


def test_link_capacity():
    s = scenario(substrate=line_substrate(2, cap=10), requests=[chain(0, [1, 2], f=20)])
    d = single_link_deployment(s, {(1, 0): 0, (2, 0): 1})
    assert "link-capacity" in validate(s, d).constraints()


def test_rejected_chain_consumes_nothing():
    s = scenario(requests=[chain(0, [1, 2])])
    d = Deployment({0: False}, {(0, 0): (1, 0)}, {})
    assert validate(s, d).constraints() == ["mapping"]


def test_unstable_instance():
    s = scenario(requests=[chain(0, [1], f=100)])
    d = Deployment({0: True}, {(0, 0): (1, 0)}, {(1, 0): 0})
    assert validate(s, d).constraints() == ["instance-stability"]
    # the fixed-delay model has no queues to overload
    assert validate(s, d, delay_model="fixed").feasible


def test_delay_threshold():
    s = scenario(requests=[chain(0, [1], f=20, th=0.01)])
    d = Deployment({0: True}, {(0, 0): (1, 0)}, {(1, 0): 0})
    assert validate(s, d).constraints() == ["delay"]


def test_instance_index_limit():
    s = scenario(requests=[chain(0, [1])])
    d = Deployment({0: True}, {(0, 0): (1, 3)}, {(1, 3): 0})
    assert validate(s, d).constraints() == ["instance-index"]
    assert validate(s, d, enforce_instance_limit=False).feasible


def test_dangling_reference():
    s = scenario(requests=[chain(0, [1])])
    d = Deployment({0: True}, {(0, 0): (1, 0)}, {(1, 0): 99})
    assert validate(s, d).constraints() == ["ref"]


def test_reference_delay_triples():
    rows = {0: ("0.004547", "0.053332", "0.000001", "0.3"),
            2: ("0.004597", "0.058333", "0.000002", "0.2"),
            3: ("0.006578", "0.057499", "0.000002", "0.2")}
    assert sum(Decimal(x) for x in rows[0][:3]) == Decimal("0.057880")
    for r, (h, i, l, th) in rows.items():
        br = DelayBreakdown(float(h), float(i), float(l))
        assert check_delay(r, br, float(th)).feasible
        total = sum(Decimal(x) for x in (h, i, l))
        lowered = float(total - Decimal("0.000001"))
        assert check_delay(r, br, lowered).constraints() == ["delay"]


def test_single_chain_gain(illustrative):
    from dataclasses import replace
    s = replace(illustrative, substrate=replace(illustrative.substrate, nodes=tuple(
        replace(n, activation_cost=0.0) for n in illustrative.substrate.nodes)))
    d = Deployment({2: True}, {(2, 0): (2, 0), (2, 1): (4, 0)}, {(2, 0): "A", (4, 0): "A"})
    assert validate(s, d).feasible
    e = economics(s, d)
    assert (e.revenue, e.license_cost, e.gain) == (700, 290, 410)


def test_revenue_of_three_chains(illustrative):
    d = Deployment({0: True, 2: True, 3: True}, {}, {})
    assert economics(illustrative, d).revenue == 1050 + 700 + 700


def test_gain_identity(illustrative):
    from dcsm import solve_exact
    d = solve_exact(illustrative, gap_limit=0).deployment
    e = economics(illustrative, d)
    assert e.gain == e.revenue - e.total_cost
    assert e.total_cost == e.node_activation_cost + e.license_cost + e.bandwidth_cost


def test_per_chain_node_charging():
    s = scenario(substrate=line_substrate(1, sigma=100), requests=[chain(0, [1]), chain(1, [2])])
    d = Deployment({0: True, 1: True}, {(0, 0): (1, 0), (1, 0): (2, 0)}, {(1, 0): 0, (2, 0): 0})
    assert economics(s, d).node_activation_cost == 100
    from dataclasses import replace
    assert economics(replace(s, node_cost_mode="per-chain"), d).node_activation_cost == 200
