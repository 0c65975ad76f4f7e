"""Classical reference solvers: shifted Poisson solves by sine diagonalisation,
the assembled rational solution, the discrete spectral-fractional oracle and
the convergence / conditioning studies built on them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import GridFunction, GridSpec, eigenvalue_sums, laplacian_dd, sample_rhs, sine_matrix
from .grid import discrete_l2_norm
from .ratapprox import RationalModel, fit_rational, spectrum_interval
from ._parallel import pmap

__all__ = [
    "NormBoundViolation",
    "SolveReport",
    "condition_number_Htilde",
    "convergence_study",
    "norm_bounds_check",
    "rational_solution",
    "sine_transform",
    "solve_shifted",
    "spectral_fractional_reference",
    "builtin_field",
]

RESIDUAL_TOL = 1e-10


class NormBoundViolation(AssertionError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    s: float
    d: int
    M: list[int] = field(default_factory=list)
    h: list[float] = field(default_factory=list)
    N_r: list[int] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    pairwise_order: list[float | None] = field(default_factory=list)
    observed_order: float = math.nan
    condition_number: float = math.nan
    norms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("observed_order", "condition_number"):
            if math.isnan(out[key]):
                out[key] = None
        return out


def sine_transform(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Apply P along every direction (P is its own inverse)."""
    P = sine_matrix(spec.M)
    t = np.asarray(values).reshape(spec.shape)
    for axis in range(spec.d):
        t = np.moveaxis(np.tensordot(P, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def _spectral_apply(spec: GridSpec, f: GridFunction, symbol) -> GridFunction:
    coeffs = sine_transform(f.values, spec)
    lam = eigenvalue_sums(spec).reshape(-1)
    return GridFunction(sine_transform(coeffs * symbol(lam), spec), spec)


def solve_shifted(spec: GridSpec, b_shift: float, f: GridFunction, check: bool = True) -> GridFunction:
    """Solve (A_{h,d} + b I) v = f in the sine basis."""
    if b_shift < 0:
        raise ValueError("shift must be nonnegative")
    v = _spectral_apply(spec, f, lambda lam: 1.0 / (lam + b_shift))
    if check:
        res = laplacian_dd(spec).apply(v.values) + b_shift * v.values - f.values
        fn = np.linalg.norm(f.values)
        if np.linalg.norm(res) > RESIDUAL_TOL * max(fn, np.finfo(float).tiny):
            raise ArithmeticError(f"shifted solve residual {np.linalg.norm(res):.3e} too large")
    return v


def rational_solution(model: RationalModel, spec: GridSpec, f: GridFunction) -> GridFunction:
    """u_h = sum_l c_l (A_{h,d} + b_l I)^(-1) f + c_inf f."""
    terms = [(b, c) for b, c, on in zip(model.poles, model.residues, model.active) if on]
    solves = pmap(lambda bc: bc[1] * solve_shifted(spec, bc[0], f).values, terms)
    u = model.c_inf * f.values.astype(float)
    for v in solves:
        u = u + v
    return GridFunction(u, spec)


def spectral_fractional_reference(spec: GridSpec, s: float, f: GridFunction) -> GridFunction:
    """Discrete spectral fractional inverse: sum over sine modes of lambda^(-s) <f, e> e."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    return _spectral_apply(spec, f, lambda lam: lam**-s)


def builtin_field(name: str, spec: GridSpec):
    """Built-in right-hand sides as callables of (x_1, ..., x_d)."""
    L = spec.b - spec.a
    if name == "sin":
        return lambda *xs: np.prod([np.sin(np.pi * (x - spec.a) / L) for x in xs], axis=0)
    if name == "ones":
        return lambda *xs: np.ones_like(xs[0])
    if name == "zero":
        return lambda *xs: np.zeros_like(xs[0])
    if name == "gaussian-bump":
        mid = 0.5 * (spec.a + spec.b)
        return lambda *xs: np.exp(-sum(((x - mid) / (0.15 * L)) ** 2 for x in xs))
    raise ValueError(f"unknown test field {name!r}")


def _exact_sin_solution(spec: GridSpec, s: float) -> GridFunction:
    # (-Delta)^s of the product of first sine modes is (d (pi/L)^2)^s times itself
    lam = spec.d * (math.pi / (spec.b - spec.a)) ** 2
    f = sample_rhs(builtin_field("sin", spec), spec)
    return f * lam**-s


def _fine_grid_reference(spec: GridSpec, s: float, f, refine: int = 4) -> GridFunction:
    fine = GridSpec(spec.a, spec.b, refine * spec.M, spec.d)
    uf = spectral_fractional_reference(fine, s, sample_rhs(f, fine)).values.reshape(fine.shape)
    idx = np.arange(refine - 1, fine.n, refine)
    sub = uf[np.ix_(*([idx] * spec.d))]
    return GridFunction(sub.reshape(-1), spec)


def convergence_study(s: float, d: int, f="sin", M_list=(8, 16, 32, 64, 128), tol: float = 1e-10,
                      a: float = 0.0, b: float = 1.0, max_order: int = 64) -> SolveReport:
    """Discrete-L2 error of the rational solution on a sequence of grids.

    ``f="sin"`` uses the analytic eigenfunction solution; any other field
    (name or callable) is compared with a 4x finer discrete reference.
    The observed order is the least-squares slope of log error vs log h.
    """
    M_list = sorted(int(m) for m in M_list)
    if len(M_list) < 3:
        raise ValueError("a convergence study needs at least three grid levels")
    report = SolveReport(s=s, d=d)
    for M in M_list:
        spec = GridSpec(a, b, M, d)
        field_fn = builtin_field(f, spec) if isinstance(f, str) else f
        model = fit_rational(s, spectrum_interval(d, spec.h), tol=tol, max_order=max_order)
        fh = sample_rhs(field_fn, spec)
        uh = rational_solution(model, spec, fh)
        if isinstance(f, str) and f == "sin":
            exact = _exact_sin_solution(spec, s)
        else:
            exact = _fine_grid_reference(spec, s, field_fn)
        report.M.append(M)
        report.h.append(spec.h)
        report.N_r.append(model.n_active)
        report.errors.append(discrete_l2_norm(exact - uh))
    logh, loge = np.log(report.h), np.log(report.errors)
    report.pairwise_order = [None] + [
        float((loge[i] - loge[i - 1]) / (logh[i] - logh[i - 1])) for i in range(1, len(logh))
    ]
    report.observed_order = float(np.polyfit(logh, loge, 1)[0])
    return report


def condition_number_Htilde(spec: GridSpec, model: RationalModel) -> tuple[float, float]:
    """kappa of diag(H, I) from its known spectrum, and the bound ||b||_max + 4d/h^2.

    The spectrum of H is {d*_i + b_l}; the identity block adds eigenvalue 1.
    """
    lam = eigenvalue_sums(spec).reshape(-1)
    b = np.asarray(model.poles)
    lo = min(lam.min() + b.min(), 1.0) if b.size else 1.0
    hi = max(lam.max() + b.max(), 1.0) if b.size else 1.0
    bound = (float(np.abs(b).max()) if b.size else 0.0) + 4.0 * spec.d / spec.h**2
    return hi / lo, bound


def norm_bounds_check(model: RationalModel, spec: GridSpec, f: GridFunction, raise_on_violation: bool = True) -> dict:
    """Evaluate both sides of

        ||U~_h|| <= ||c||_2 ||f||     and     ||u_h|| >= c_1 / (b_1 + 8d) ||f||,

    where U~_h = H~^(-1) F~ and u_h is the rational solution. Euclidean norms.
    """
    on = model.active
    if not np.all(model.residues[on] > 0):
        raise ValueError("norm bounds need c_l > 0")
    fn = float(np.linalg.norm(f.values))
    blocks = [c * solve_shifted(spec, b, f).values for b, c, a in zip(model.poles, model.residues, on) if a]
    blocks.append(model.c_inf * f.values)
    U_norm = float(np.sqrt(sum(np.linalg.norm(v) ** 2 for v in blocks)))
    uh = np.sum(blocks, axis=0)
    uh_norm = float(np.linalg.norm(uh))
    if on.any():
        c1, b1 = float(model.residues[on][0]), float(model.poles[on][0])
        lower = c1 / (b1 + 8 * spec.d) * fn
    else:
        lower = 0.0
    upper = model.c_norm2 * fn
    report = {
        "U_tilde_norm": U_norm,
        "upper_bound": upper,
        "upper_slack": upper - U_norm,
        "u_h_norm": uh_norm,
        "lower_bound": lower,
        "lower_slack": uh_norm - lower,
        "f_norm": fn,
    }
    tol = 1e-12 * max(fn, 1.0)
    if raise_on_violation and (report["upper_slack"] < -tol or report["lower_slack"] < -tol):
        raise NormBoundViolation(
            f"norm bound violated: upper slack {report['upper_slack']:.3e}, "
            f"lower slack {report['lower_slack']:.3e}",
            report,
        )
    return report
