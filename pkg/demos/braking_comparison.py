"""Track a braking car with radar and with lidar and compare the velocity estimates.

Run:  python demos/braking_comparison.py
"""

import math

import dogm
from dogm.scenarios import braking

runs = {mode: dogm.run_scenario(braking(), mode) for mode in ("radar", "lidar")}

print(" time   v_ref   radar   lidar")
for radar, lidar in zip(runs["radar"].frames, runs["lidar"].frames):
    if radar.index % 5:
        continue
    cell = lambda v: "    --" if math.isnan(v) else f"{v:6.2f}"
    print(f"{radar.time:5.1f}  {radar.v_ref:6.2f}  {cell(radar.v_x_mean)}  {cell(lidar.v_x_mean)}")

for mode, run in runs.items():
    s = run.summary()
    print(f"{mode}: rms {s['rms']:.3f} m/s, NEES-consistent on {s['consistency_fraction']:.0%} of "
          f"{s['defined_frames']} frames")
