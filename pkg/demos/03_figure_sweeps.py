# %% [markdown]
# Figure sweeps and the command line
#
# Each figure is a grid of ExperimentSpec points. Graphs and policies are
# cached on disk by a hash of the parameters that determine them.

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

from coupled_tracking.experiments import ExperimentSpec, csv_text, figure_specs, run_figure

base = ExperimentSpec(horizon=20_000, seeds=(0, 1, 2))
for spec in figure_specs("fig5", base)[:4]:
    print(spec.policy, "p_s", spec.p_s, "p", spec.p)

# %%
cache = Path(tempfile.mkdtemp())
rows = run_figure("fig5", ExperimentSpec(horizon=20_000, seeds=(0, 1, 2), cache_dir=cache))
print(csv_text([r.row for r in rows]))

# %% [markdown]
# The same runs are available from the shell. A sweep varies one parameter
# of a base configuration; explicit flags override a JSON config file.

# %%
cmd = [sys.executable, "-m", "coupled_tracking", "--policy", "maf", "--sweep", "gamma",
       "--values", "0,0.25,0.5", "--horizon", "20000", "--seeds", "3"]
print(subprocess.run(cmd, capture_output=True, text=True, check=True).stdout)
