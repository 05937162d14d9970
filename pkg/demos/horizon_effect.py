"""How the prediction horizon shapes the oscillator's control.

With a horizon that reaches tf the MPC staircase tracks the minimum-energy
control. With a horizon of 1 s the final-state condition is invisible to the
early windows, so nothing happens until the horizon first reaches tf, and the
remaining second has to do all the work at a much higher cost.

    python3 demos/horizon_effect.py
"""
import numpy as np

from radau_mpc import MeshConfig, MpcConfig, load, run

problem, analytic = load("ex1")
mesh = MeshConfig(dt_segment=0.5, nodes_per_segment=5)

print(f"minimum-energy objective: {analytic.objective_star:.5f}")
for p in (10, 5):
    rec = run(problem, MpcConfig(Ts=0.2, p=p, m=p), mesh)
    print(f"\nhorizon {p * 0.2:.1f} s: objective {rec.total_cost:.5f}, "
          f"final state {np.round(rec.states[-1], 6)}")
    print("   t     u_mpc     u*")
    for t, u in zip(rec.knot_times, rec.knot_values[:, 0]):
        print(f"  {t:.1f}  {u:+8.4f}  {analytic.u_star(np.array([t]))[0, 0]:+8.4f}")
