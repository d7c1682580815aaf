"""
The command-line front end
==========================

Everything here is also reachable from a shell as ``dcsm <command>``; the
script drives ``main`` directly so it runs anywhere the package imports.
"""
import tempfile
from pathlib import Path

from dcsm.cli import main

work = Path(tempfile.mkdtemp())

# %%
# Generate a scenario, solve it with MLDG, and check the saved deployment.
main(["gen", "small", "--seed", "3", "--out", str(work / "small.yaml")])
main(["solve", str(work / "small.yaml"), "--solver", "mldg", "--out", str(work / "dep.yaml")])
rc = main(["validate", str(work / "small.yaml"), str(work / "dep.yaml")])
print("validate exit code", rc)

# %%
# A sweep spec is a small YAML file.  Rerunning it reuses the records on disk.
(work / "sweep.yaml").write_text(
    "axis: num_sfcs\nvalues: [1, 2, 3]\nseeds: [0, 1]\nsolvers: [mldg, exact]\n"
    "template: {topology: illustrative}\n")
main(["sweep", str(work / "sweep.yaml")])
print((work / "sweep_aggregate.csv").read_text())
