"""Active suspension over a road bump, and what the force weight does.

Runs the quarter-car model over a 2 cm bump, then again with the actuator
weight raised tenfold: the controller spends less force and lets more of
the bump through to the tire deflection. Writes results and SVG plots to
``results/suspension_bump``.

    python3 demos/suspension_bump.py
"""
import numpy as np

from radau_mpc import MeshConfig, MpcConfig, load, run

mesh = MeshConfig(dt_segment=0.05, nodes_per_segment=5)
mpc = MpcConfig(Ts=0.02, p=10, m=10, plot_flag=True, file_name="bump")

for w3 in (1e-5, 1e-4):
    problem, _ = load("suspension", tf=1.0, w3=w3)
    out = "results/suspension_bump" if w3 == 1e-5 else None
    rec = run(problem, mpc, mesh, output_dir=out)
    F = rec.knot_values[:, 0]
    print(f"w3={w3:g}: objective {rec.total_cost:.5f}, int F^2 dt {np.sum(F ** 2) * mpc.Ts:.1f}, "
          f"max|tire deflection| {np.max(np.abs(rec.states[:, 0])) * 1e3:.2f} mm, "
          f"max|rattle| {np.max(np.abs(rec.states[:, 2])) * 1e3:.2f} mm")
