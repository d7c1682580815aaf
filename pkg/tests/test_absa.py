import pytest

from dcsm import AnnealConfig, generate_scenario, run_absa, validate
from dcsm.absa import cool

from conftest import scenario


def valid(s, d):
    return validate(s, d, delay_model="fixed", enforce_instance_limit=False).feasible


def test_cooling_step():
    cfg = AnnealConfig()
    assert cool(1000.0, cfg) == pytest.approx(950.0)


def test_config_checks():
    with pytest.raises(ValueError):
        AnnealConfig(cooling_rate=1.0)
    with pytest.raises(ValueError):
        AnnealConfig(initial_temperature=-1)


def test_no_chains():
    d, e = run_absa(scenario(), AnnealConfig(max_iterations=10))
    assert e.gain == 0 and d.accepted_ids == []


def test_same_seed_same_trajectory():
    s = generate_scenario({"topology": "small", "num_sfcs": 5}, 3)
    cfg = AnnealConfig(max_iterations=300, seed=7)
    ta, tb = [], []
    a, b = run_absa(s, cfg, ta), run_absa(s, cfg, tb)
    assert ta == tb and a[0] == b[0]
    tc = []
    run_absa(s, AnnealConfig(max_iterations=300, seed=8), tc)
    assert tc != ta


def test_best_is_monotone_and_feasible():
    s = generate_scenario({"topology": "small", "num_sfcs": 5}, 1)
    trace = []
    d, e = run_absa(s, AnnealConfig(max_iterations=500, seed=1), trace)
    best = [b for _, _, b in trace]
    assert best == sorted(best)
    assert e.gain == pytest.approx(best[-1])
    assert valid(s, d)


def test_zero_temperature_is_a_hill_climber():
    s = generate_scenario({"topology": "small", "num_sfcs": 5}, 2)
    trace = []
    run_absa(s, AnnealConfig(initial_temperature=0.0, max_iterations=400, seed=3), trace)
    cur = [c for _, c, _ in trace]
    assert all(b >= a for a, b in zip(cur, cur[1:]))


def test_hot_start_accepts_worse_moves():
    s = generate_scenario({"topology": "small", "num_sfcs": 5}, 2)
    trace = []
    run_absa(s, AnnealConfig(initial_temperature=1e7, cooling_rate=0.001, max_iterations=400, seed=3), trace)
    cur = [c for _, c, _ in trace]
    assert any(b < a for a, b in zip(cur, cur[1:]))


def test_no_sharing():
    s = generate_scenario({"topology": "bteurope", "num_sfcs": 6}, 0)
    d, _ = run_absa(s, AnnealConfig(max_iterations=800))
    insts = list(d.vnf_to_instance.values())
    assert len(insts) == len(set(insts))
    assert valid(s, d)


@pytest.mark.parametrize("seed", range(5))
def test_stress_scenarios_validate(seed):
    s = generate_scenario("stress", seed)
    d, _ = run_absa(s, AnnealConfig(max_iterations=300, seed=seed))
    assert valid(s, d)
