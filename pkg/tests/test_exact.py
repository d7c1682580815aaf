import pytest

from dcsm import (CapExceeded, EnumerationCaps, VnfType, enumerate_exact, generate_scenario, run_mldg, solve_exact,
                  validate)
from dcsm.exact import enumeration_count

from conftest import chain, line_substrate, scenario


def one_vnf(rev, sigma=300.0, license_=500.0):
    types = (VnfType(1, 100, 100, 100, 100, license_, 1),)
    return scenario(substrate=line_substrate(1, sigma=sigma), types=types, requests=[chain(0, [1], rev=rev)])


def test_single_vnf_accepted():
    s = one_vnf(2000)
    for res in (solve_exact(s, gap_limit=0), enumerate_exact(s)):
        assert res.deployment.accepted_ids == [0]
        assert res.gain == pytest.approx(2000 - 500 - 300)


def test_unprofitable_rejected():
    s = one_vnf(700)
    for res in (solve_exact(s, gap_limit=0), enumerate_exact(s)):
        assert res.deployment.accepted_ids == [] and res.gain == 0


def test_enumeration_counts():
    s = scenario(requests=[])
    res = enumerate_exact(s)
    assert res.gain == 0 and res.nodes_explored == 1
    types = (VnfType(1, 100, 100, 100, 100, 10, 1),)
    s = scenario(substrate=line_substrate(2), types=types, requests=[chain(0, [1])])
    assert enumeration_count(s) == 3  # reject, or accept on either node
    assert enumerate_exact(s).nodes_explored == 3


def test_caps():
    s = generate_scenario({"topology": "small", "num_sfcs": 5}, 0)
    with pytest.raises(CapExceeded):
        enumerate_exact(s)
    with pytest.raises(CapExceeded):
        enumerate_exact(generate_scenario("tiny", 0), EnumerationCaps(nodes=1))


@pytest.mark.parametrize("seed", range(8))
def test_matches_enumeration(seed):
    s = generate_scenario("tiny", seed)
    a, b = solve_exact(s, gap_limit=0), enumerate_exact(s)
    assert a.gain == pytest.approx(b.gain, rel=1e-6, abs=1e-6)
    assert validate(s, a.deployment).feasible and validate(s, b.deployment).feasible


@pytest.mark.parametrize("seed", [0, 2, 6])
def test_positive_gap_keeps_searching(seed):
    s = generate_scenario("tiny", seed)
    opt = enumerate_exact(s).gain
    res = solve_exact(s, gap_limit=0.05)
    assert res.nodes_explored >= 1
    assert res.bound >= opt - 1e-6
    assert res.gain >= opt - 0.05 * max(res.bound, 1) - 1e-6


def test_result_invariants(illustrative):
    res = solve_exact(illustrative, gap_limit=0)
    assert res.gap >= 0 and res.bound >= res.gain - 1e-9
    assert res.history == sorted(res.history)
    assert validate(illustrative, res.deployment).feasible
    assert res.deployment.acceptance_rate(5) == pytest.approx(0.6)


def test_node_limit_reports_honest_gap(illustrative):
    res = solve_exact(illustrative, gap_limit=0, node_limit=2)
    assert res.timed_out
    assert res.bound >= solve_exact(illustrative, gap_limit=0).gain - 1e-6
    assert validate(illustrative, res.deployment).feasible


def test_dominates_mldg(illustrative):
    assert solve_exact(illustrative, gap_limit=0).gain >= run_mldg(illustrative)[1].gain - 1e-6


def test_appending_request_never_hurts():
    s = generate_scenario("tiny", 11)
    base = solve_exact(s, gap_limit=0).gain
    extra = chain(99, [s.types[0].id], f=30, rev=9000, th=0.1)
    assert solve_exact(s.with_requests(s.requests + (extra,)), gap_limit=0).gain >= base - 1e-9


def test_reproducible():
    s = generate_scenario("tiny", 3)
    a, b = solve_exact(s, gap_limit=0), solve_exact(s, gap_limit=0)
    assert a.deployment == b.deployment and a.nodes_explored == b.nodes_explored


def test_fixed_placement_enumeration():
    s = generate_scenario("tiny", 2)
    res = solve_exact(s, gap_limit=0)
    pinned = enumerate_exact(s, placement=res.deployment.instance_to_node)
    assert pinned.gain == pytest.approx(res.gain)
    assert set(pinned.deployment.instance_to_node.items()) <= set(res.deployment.instance_to_node.items())
