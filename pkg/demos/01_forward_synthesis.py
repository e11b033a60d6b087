"""Forward synthesis walkthrough.

Builds the Case (1.1) preset model, solves the four coupled elliptic
problems (excitation u0, emission w0, auxiliary v and p) and assembles the
two internal data fields Q and S that the reconstruction stages consume.
Run from the repository root:

    python demos/01_forward_synthesis.py
"""

import numpy as np

from fluotomo import fem, forward, harness, internal_data

cfg = harness.preset_config("case11", n=64, k=2, noise_levels=[])
print("preset: %s   (theta = %.6f, mu = %.6f)"
      % (cfg.name, cfg.elasto.theta, cfg.elasto.mu))

mesh = fem.build_structured_mesh(cfg.half_width, cfg.n, cfg.k)
print("mesh: %d triangles, %d degrees of freedom (order %d elements)"
      % (mesh.n_triangles, mesh.n_dofs, mesh.k))

state = forward.solve_forward(cfg.model, mesh)
for name, f in (("u0", state.u0), ("w0", state.w0),
                ("v", state.v), ("p", state.p)):
    print("%-3s range [%.4f, %.4f], L2 norm %.4f"
          % (name, np.min(f.coeffs), np.max(f.coeffs), fem.norms(f)["L2"]))

Q = internal_data.compute_Q(state.u0, cfg.model, cfg.elasto)
S = internal_data.compute_S(state, cfg.model, cfg.elasto)
print("Q range [%.4f, %.4f]" % (np.min(Q.coeffs), np.max(Q.coeffs)))
print("S range [%.4f, %.4f]" % (np.min(S.coeffs), np.max(S.coeffs)))

# the first-order measurement probe integrates Q against a modulation wave
for q, phi in (((0.0, 0.0), 0.0), ((np.pi, 0.0), 0.0), ((np.pi, np.pi), 0.5)):
    print("J1(q=%s, phi=%.1f) = %.6f"
          % (q, phi, internal_data.compute_J1(Q, q, phi)))

out = "out/demo_forward"
import os
os.makedirs(out, exist_ok=True)
fem.export_field_csv(Q, os.path.join(out, "Q.csv"), 101)
fem.export_field_csv(S, os.path.join(out, "S.csv"), 101)
print("wrote %s/Q.csv and %s/S.csv (x,y,value grid samples)" % (out, out))
