"""2D diffusion-model toolkit for modulated fluorescence tomography:
synthesizes the two internal data fields and reconstructs the fluorophore
absorption coefficient and quantum efficiency."""

from .config import (CaseKind, CaseTag, DegenerateConstantsError,
                     ElastoOpticalConstants, OpticalModel, classify_case,
                     derive_constants, load_config)
from .fem import (Mesh, NonConvergenceError, PositivityViolationError,
                  ScalarField, SingularSystemError, build_structured_mesh,
                  gradient_at, norms)
from .forward import ForwardState, solve_forward
from .internal_data import InternalData, add_noise, compute_J1, compute_Q, compute_S
from .sigma import (DegenerateKappaError, SemilinearProblem,
                    UnsupportedCaseError, build_problem, reconstruct_sigma,
                    recover_sigma, recover_u0, solve_psi)
from .eta import EtaOperator, NearSingularError, solve_eta
from .harness import compare_fields, preset_config, run_pipeline

__version__ = "0.1.0"
