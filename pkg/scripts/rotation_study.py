"""Eigenvalue drift of the stored strain under rigid rotation, for halving tau."""
import argparse

from thermovisc.convergence import measure_study, rotation_drift
from thermovisc.scenarios import scenario_config

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--levels", type=int, default=3)
args = ap.parse_args()
taus, drift, orders = measure_study(scenario_config("rigid_rotation"), args.levels, rotation_drift)
for k, (t, d) in enumerate(zip(taus, drift)):
    order = f"{orders[k - 1]:.3f}" if k else "-"
    print(f"tau={t:.6g}  drift={d:.3e}  order={order}")
