"""
How far is MLDG from the optimum?
=================================

On tiny generated scenarios the exact solver is certified by exhaustive
enumeration, so the heuristic's loss can be measured directly.
"""
import statistics

from dcsm import enumerate_exact, generate_scenario, run_mldg, solve_exact

rows = []
for seed in range(15):
    s = generate_scenario("tiny", seed)
    ex = solve_exact(s, gap_limit=0.0)
    assert abs(ex.gain - enumerate_exact(s).gain) < 1e-6 * max(1.0, abs(ex.gain))
    rows.append((seed, ex.gain, run_mldg(s)[1].gain))

print(" seed   exact    mldg")
for seed, ex, ml in rows:
    flag = "  <-- loses a chain" if ml < ex else ""
    print(f"{seed:5d} {ex:7.0f} {ml:7.0f}{flag}")

# %%
# MLDG never beats the optimum; on average it comes very close.
print("mean ratio", statistics.fmean(r[2] for r in rows) / statistics.fmean(r[1] for r in rows))
