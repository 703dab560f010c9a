"""Temporal convergence tables for the creep and heat-diffusion scenarios."""
import argparse

from thermovisc.convergence import convergence_study
from thermovisc.scenarios import scenario_config

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--levels", type=int, default=4)
args = ap.parse_args()
for name in ("uniform_creep", "heat_bump"):
    print(f"== {name}")
    print(convergence_study(scenario_config(name), args.levels).format())
