"""Noise robustness study.

Adds multiplicative uniform noise (value * (1 + level * xi), xi ~ U[-1,1],
seeded) to both internal data fields and tracks how the reconstruction
errors of sigma_xf and eta grow with the noise level.  The same study at
full resolution (n = 128) is what the `experiment` command runs and what
the report.txt / errors.csv artifacts record.

    python demos/04_noise_study.py
"""

import numpy as np

from fluotomo import eta as eta_mod, harness, internal_data
from fluotomo.harness import compare_fields
from fluotomo.sigma import reconstruct_sigma

for name in harness.PRESET_NAMES:
    cfg = harness.preset_config(name, n=64, k=2, noise_levels=[])
    mesh, state, data = harness.synthesize(cfg)
    print("\n%s  (seed %d)" % (name, cfg.seed))
    print("  noise   sigma rel L1   eta rel L2")
    for level in (0.0, 0.01, 0.02):
        Qn = internal_data.add_noise(data.Q, level, cfg.seed)
        Sn = internal_data.add_noise(data.S, level, cfg.seed + 1)
        sigma_rec, u0_rec, _ = reconstruct_sigma(Qn, cfg.model, cfg.elasto)
        op = eta_mod.EtaOperator(mesh, cfg.model, cfg.elasto, u0_rec,
                                 state.v, sigma_xf=sigma_rec)
        eta_rec, _ = eta_mod.solve_eta(Sn, op)
        s_err = compare_fields(sigma_rec, cfg.model.sigma_xf)["L1"]
        e_err = compare_fields(eta_rec, cfg.model.eta)["L2"]
        print("  %4.0f%%   %10.3g%%  %10.3g%%"
              % (100 * level, 100 * s_err, 100 * e_err))
