"""Two particles, one kernel: how fast does alignment happen?

Start the pair a distance eps apart with opposite velocities and watch the
relative speed decay.  For two bodies the relative velocity obeys
w' = -psi(r) w, so the half-life is controlled by the kernel strength at
the separations actually visited.  Halving eps doubles psi and halves the
half-life; the kernel integral up to t_half lands on ln 2 regardless.
"""

import math

from flocklab.meanfield import pair_alignment_study

EPS = [0.5, 0.25, 0.125, 0.0625]

study = pair_alignment_study(
    EPS, v1=[0.5], v2=[-0.5], alpha=1.0, horizon=2.0, grid_points=8192
)

print("eps      t_half   kernel integral (ln 2 = %.6f)   min distance" % math.log(2))
for row in study.rows:
    print(
        f"{row.eps:<8g} {row.t_half:<8.4f} {row.kernel_integral:<33.6f} "
        f"{row.min_distance:.4f}"
    )

halves = [row.t_half for row in study.rows]
ratios = [a / b for a, b in zip(halves, halves[1:])]
print("half-life ratios between consecutive eps:", ["%.3f" % r for r in ratios])
print("particles never collide; the kernel is strong enough to align them first")
