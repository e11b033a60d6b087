"""Model configuration: optical coefficients, elasto-optical constants,
case classification and config-file parsing.

Coefficients are closed-form expressions over (x, y) so configurations stay
mesh independent; they are evaluated at interpolation nodes on demand.
"""

import configparser
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np


class DegenerateConstantsError(Exception):
    """Elasto-optical constants outside the supported parameter range."""


@dataclass(frozen=True)
class ElastoOpticalConstants:
    """Dimensionless elasto-optical constants and derived parameters."""
    n_x: float
    n_m: float
    n_f: float
    gamma_x: float
    gamma_m: float
    beta_x: float
    beta_m: float
    beta_f: float
    tau_ratio: float
    mu: float
    theta: float


def derive_constants(n_x, n_m, n_f):
    """Derive gamma/beta modulation constants and the exponents tau, mu, theta.

    gamma = 2n - 1 and beta = 2n + 1 for each material constant; then
    tau = gamma_x / beta_f, mu = beta_x / beta_f - 1 and
    theta = (beta_f - gamma_x) / (beta_f + gamma_x).
    """
    gamma_x = 2.0 * n_x - 1.0
    gamma_m = 2.0 * n_m - 1.0
    beta_x = 2.0 * n_x + 1.0
    beta_m = 2.0 * n_m + 1.0
    beta_f = 2.0 * n_f + 1.0
    if beta_f == 0.0:
        raise DegenerateConstantsError(
            "beta_f = 0: the fluorophore absorption does not enter the "
            "first internal datum")
    if beta_f + gamma_x == 0.0:
        raise DegenerateConstantsError(
            "beta_f + gamma_x = 0: theta is infinite")
    tau = gamma_x / beta_f
    mu = beta_x / beta_f - 1.0
    theta = (beta_f - gamma_x) / (beta_f + gamma_x)
    return ElastoOpticalConstants(n_x, n_m, n_f, gamma_x, gamma_m,
                                  beta_x, beta_m, beta_f, tau, mu, theta)


class CaseKind(Enum):
    CASE11 = "case11"        # -1 < theta < 0, b >= 0, c >= 0
    CASE12 = "case12"        # theta < -1, b >= 0, c >= 0
    CASE2 = "case2"          # theta >= 0, b >= 0, c <= 0
    LINEAR_THETA0 = "linear_theta0"
    UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class CaseTag:
    kind: CaseKind
    reason: str = ""


#: relative band inside which a nodal value counts as both-sign-compatible;
#: FEM projection of a signed function can produce tiny sign noise
SIGN_TOLERANCE = 1e-12


def _sign_status(values, tol_rel=SIGN_TOLERANCE):
    v = np.asarray(values, dtype=float)
    band = tol_rel * max(np.max(np.abs(v)), 1.0) if v.size else 0.0
    nonneg = bool(np.all(v >= -band))
    nonpos = bool(np.all(v <= band))
    return nonneg, nonpos


def classify_case(theta, b_values, c_values, tol_rel=SIGN_TOLERANCE):
    """Classify (theta, b, c) into the supported solve regimes.

    Total: every input yields exactly one tag; unsupported sign patterns
    come back as a tag with a human-readable reason, not an error.
    """
    b_nonneg, _ = _sign_status(b_values, tol_rel)
    c_nonneg, c_nonpos = _sign_status(c_values, tol_rel)
    if theta == 0.0:
        return CaseTag(CaseKind.LINEAR_THETA0)
    if not b_nonneg:
        return CaseTag(CaseKind.UNSUPPORTED, "b changes sign or is negative")
    if -1.0 < theta < 0.0:
        if c_nonneg:
            return CaseTag(CaseKind.CASE11)
        return CaseTag(CaseKind.UNSUPPORTED,
                       "c not nonnegative with -1 < theta < 0")
    if theta < -1.0:
        if c_nonneg:
            return CaseTag(CaseKind.CASE12)
        return CaseTag(CaseKind.UNSUPPORTED,
                       "c not nonnegative with theta < -1")
    if theta == -1.0:
        return CaseTag(CaseKind.UNSUPPORTED, "theta = -1 is degenerate")
    # theta > 0
    if c_nonpos:
        return CaseTag(CaseKind.CASE2)
    return CaseTag(CaseKind.UNSUPPORTED, "c changes sign with theta > 0")


@dataclass(frozen=True)
class OpticalModel:
    """Background and fluorophore coefficients plus boundary data.

    All coefficient entries are vectorized callables of (x, y); ``g`` and
    ``h`` are evaluated on the boundary only.
    """
    D_x: object
    D_m: object
    sigma_xa: object
    sigma_ma: object
    sigma_xf: object
    eta: object
    g: object
    h: object = field(default=lambda x, y: np.ones_like(np.asarray(x, dtype=float)))
    K0: float = 1e-4
    K1: float = 1e4

    def validate(self, half_width=0.5, samples=64):
        """Check the standing boundedness assumptions on a sample grid."""
        gpts = np.linspace(-half_width, half_width, samples)
        X, Y = np.meshgrid(gpts, gpts)
        x, y = X.ravel(), Y.ravel()
        for name in ("D_x", "D_m", "sigma_xa", "sigma_ma", "sigma_xf", "g"):
            vals = np.broadcast_to(np.asarray(getattr(self, name)(x, y),
                                              dtype=float), x.shape)
            if np.min(vals) <= self.K0 or np.max(vals) >= self.K1:
                raise ValueError(
                    "%s violates K0 < . < K1 bounds: range [%g, %g]"
                    % (name, np.min(vals), np.max(vals)))
        ev = np.broadcast_to(np.asarray(self.eta(x, y), dtype=float), x.shape)
        if np.min(ev) < 0.0 or np.max(ev) > 1.0:
            raise ValueError("eta must take values in [0, 1]")
        # h only matters on the boundary
        xb = np.concatenate([gpts, gpts, np.full(samples, -half_width),
                             np.full(samples, half_width)])
        yb = np.concatenate([np.full(samples, -half_width),
                             np.full(samples, half_width), gpts, gpts])
        hv = np.broadcast_to(np.asarray(self.h(xb, yb), dtype=float), xb.shape)
        if np.min(hv) <= 0.0:
            raise ValueError("h must be strictly positive on the boundary")
        return self


_EXPR_NAMES = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "exp", "log", "sqrt", "abs",
                "arctan", "tanh", "cosh", "sinh", "minimum", "maximum",
                "pi", "e")}


def expression(expr):
    """Compile a closed-form coefficient expression over (x, y)."""
    code = compile(expr, "<coefficient>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in ("x", "y"):
            raise ValueError("unknown name %r in expression %r" % (name, expr))

    def f(x, y):
        out = eval(code, {"__builtins__": {}},
                   dict(_EXPR_NAMES, x=np.asarray(x, dtype=float),
                        y=np.asarray(y, dtype=float)))
        return np.broadcast_to(np.asarray(out, dtype=float),
                               np.asarray(x, dtype=float).shape)

    f.expression = expr
    return f


@dataclass
class SolverOptions:
    psi_tol: float = 1e-8
    psi_max_iter: int = 200
    gmres_tol: float = 1e-10
    gmres_restart: int = 30
    gmres_max_iter: int = 500
    positivity_floor: float = 1e-12


@dataclass
class ExperimentConfig:
    """Fully parsed experiment configuration."""
    half_width: float
    n: int
    k: int
    model: OpticalModel
    elasto: ElastoOpticalConstants
    solver: SolverOptions
    noise_levels: list
    seed: int
    output_dir: str
    output_grid: int
    coefficient_expressions: dict = field(default_factory=dict)
    name: str = "experiment"


_COEF_KEYS = ("D_x", "D_m", "sigma_xa", "sigma_ma", "sigma_xf", "eta", "g", "h")


def config_from_sections(sections, name="experiment"):
    """Build an ExperimentConfig from a nested dict of config sections."""
    dom = sections.get("domain", {})
    mesh = sections.get("mesh", {})
    coeffs = sections["coefficients"]
    elasto = sections["elasto"]
    solver = sections.get("solver", {})
    noise = sections.get("noise", {})
    output = sections.get("output", {})

    exprs = {key: coeffs.get(key, "1" if key == "h" else None)
             for key in _COEF_KEYS}
    missing = [k for k, v in exprs.items() if v is None]
    if missing:
        raise ValueError("missing coefficient expressions: %s" % missing)
    funcs = {k: expression(v) for k, v in exprs.items()}
    model = OpticalModel(D_x=funcs["D_x"], D_m=funcs["D_m"],
                         sigma_xa=funcs["sigma_xa"], sigma_ma=funcs["sigma_ma"],
                         sigma_xf=funcs["sigma_xf"], eta=funcs["eta"],
                         g=funcs["g"], h=funcs["h"])
    constants = derive_constants(float(elasto["n_x"]), float(elasto["n_m"]),
                                 float(elasto["n_f"]))
    opts = SolverOptions(
        psi_tol=float(solver.get("psi_tol", 1e-8)),
        psi_max_iter=int(solver.get("psi_max_iter", 200)),
        gmres_tol=float(solver.get("gmres_tol", 1e-10)),
        gmres_restart=int(solver.get("gmres_restart", 30)),
        gmres_max_iter=int(solver.get("gmres_max_iter", 500)),
        positivity_floor=float(solver.get("positivity_floor", 1e-12)))
    levels_raw = str(noise.get("levels", "")).strip()
    levels = [float(t) for t in levels_raw.split(",") if t.strip() != ""]
    return ExperimentConfig(
        half_width=float(dom.get("half_width", 0.5)),
        n=int(mesh.get("n", 128)),
        k=int(mesh.get("k", 2)),
        model=model,
        elasto=constants,
        solver=opts,
        noise_levels=levels,
        seed=int(noise.get("seed", 0)),
        output_dir=str(output.get("directory", "out")),
        output_grid=int(output.get("grid", 101)),
        coefficient_expressions=exprs,
        name=name)


def load_config(path):
    """Parse a structured-text (INI-style) experiment config file."""
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    # configparser lowercases keys; restore the coefficient names
    if "coefficients" in sections:
        fixed = {}
        lower_map = {key.lower(): key for key in _COEF_KEYS}
        for k, v in sections["coefficients"].items():
            fixed[lower_map.get(k, k)] = v
        sections["coefficients"] = fixed
    if "elasto" in sections:
        sections["elasto"] = {k.lower(): v for k, v in sections["elasto"].items()}
    import os
    return config_from_sections(sections,
                                name=os.path.splitext(os.path.basename(path))[0])


def exact_theta(n_x, n_f):
    """theta as an exact fraction, handy for reporting."""
    gamma_x = Fraction(2) * Fraction(str(n_x)) - 1
    beta_f = Fraction(2) * Fraction(str(n_f)) + 1
    return Fraction(beta_f - gamma_x, 1) / (beta_f + gamma_x)
