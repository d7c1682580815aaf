"""
MLDG against simulated annealing on BtEurope
============================================

The annealing baseline gives every VNF its own instance and routes along
fewest-hop paths.  MLDG shares instances between chains, so its advantage
grows with the batch size.  A few seeds per size keep this under a few
minutes; the acceptance suite runs 20.
"""
import statistics
import time

from dcsm import AnnealConfig, generate_scenario, run_absa, run_mldg

for n in (10, 15, 20):
    ml, ab, tm = [], [], []
    for seed in range(3):
        s = generate_scenario({"topology": "bteurope", "num_sfcs": n}, seed)
        t0 = time.perf_counter()
        d, e = run_mldg(s)
        tm.append(time.perf_counter() - t0)
        ml.append(e.gain)
        ab.append(run_absa(s, AnnealConfig(seed=seed))[1].gain)
    print(f"n={n:2d}  mldg {statistics.fmean(ml):9.0f}  absa {statistics.fmean(ab):9.0f}  "
          f"gap {statistics.fmean(ml) - statistics.fmean(ab):8.0f}  mldg time {statistics.median(tm):.1f}s")
