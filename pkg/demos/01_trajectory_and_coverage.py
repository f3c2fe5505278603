"""Walk through the zigzag target trajectory and its frame coverage.

The capture protocol animates a target box along a constant-speed
boustrophedon sweep. This script samples one sweep, prints waypoints, checks
the Lipschitz speed bound, and reports the swept-area fraction for each of
the default session box sizes.
"""

import numpy as np

from gesturedet.trajectory import (DEFAULT_SESSION_SIZES, TrajectoryConfig,
                                   coverage, path_length, plan_session, target_at)

traj = TrajectoryConfig(box_w=0.32, box_h=0.32, duration_s=30.0)
print(f"box 0.32x0.32 -> {traj.n_rows} sweep rows, "
      f"path length {path_length(traj):.2f} frame units")

print("\n t(s)   center            box stays inside the unit frame")
for t in np.linspace(0, traj.duration_s, 9):
    b = target_at(traj, float(t))
    bar = " " * int(b.cx * 40) + "#"
    print(f"{t:5.1f}   ({b.cx:.3f}, {b.cy:.3f})   {bar}")

speed = path_length(traj) / traj.duration_s
steps = np.linspace(0, traj.duration_s, 1200)
pts = np.array([(b.cx, b.cy) for b in (target_at(traj, float(t)) for t in steps)])
max_step = np.hypot(*np.diff(pts, axis=0).T).max()
print(f"\nconstant speed: max per-sample movement {max_step:.5f} "
      f"<= v*dt = {speed * (steps[1] - steps[0]):.5f}")

print("\ncoverage of the unit frame (union of sampled box footprints):")
for w, h in DEFAULT_SESSION_SIZES:
    c = coverage(TrajectoryConfig(box_w=w, box_h=h), n_samples=2048)
    print(f"  box {w:.2f}x{h:.2f}: {c * 100:6.2f}%")

plan = plan_session("demo-subject", "demo-scene")
print(f"\nsession plan: {len(plan.sequences)} sequences "
      f"(4 gestures x 2 hands x 3 sizes), gesture-major:")
for seq in plan.sequences[:6]:
    print(f"  #{seq.sequence_index}: {seq.gesture.value}/{seq.hand.value} "
          f"box {seq.trajectory.box_w:.2f}")
print("  ...")
