"""A car crossing in front of the radar: Doppler is near zero, yet the mover is found.

Run:  python demos/crossing_clusters.py
"""

import dogm
from dogm.scenarios import crossing

run = dogm.run_scenario(crossing(), "radar", n_frames=15)
for f in run.frames:
    desc = ", ".join(f"({c.centroid[0]:.1f}, {c.centroid[1]:.1f}) m moving ({c.velocity[0]:.1f}, {c.velocity[1]:.1f}) m/s"
                     for c in f.clusters)
    print(f"frame {f.index:2d}: {len(f.clusters)} cluster(s) {desc}")
