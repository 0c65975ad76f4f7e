"""Rational approximation of x^(-s) on a positive interval.

The fit is done with the AAA algorithm in barycentric form and then
converted to the Stieltjes-type partial-fraction form

    r(x) = sum_l c_l / (x + b_l) + c_inf,    b_l >= 0, c_l > 0, c_inf >= 0,

which is what the resolvent-sum solvers downstream consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

__all__ = [
    "AAAConvergenceError",
    "BarycentricForm",
    "PoleStructureError",
    "RationalModel",
    "aaa_fit",
    "aaa_sequence",
    "evaluate_rational",
    "fit_rational",
    "fit_rational_order",
    "sample_grid",
    "spectrum_interval",
    "sup_error",
    "to_partial_fractions",
]

DEFAULT_SAMPLES = 10_000
IMAG_TOL = 1e-10
SPURIOUS_TOL = 1e-13
_NEWTON_STEPS = 4


class AAAConvergenceError(RuntimeError):
    """AAA stopped at ``max_order`` without reaching the tolerance.

    The best form found is kept on the exception so callers can still use it.
    """

    def __init__(self, residual: float, order: int, form: "BarycentricForm"):
        super().__init__(
            f"AAA did not converge: residual {residual:.3e} at degree {order}"
        )
        self.residual = residual
        self.order = order
        self.form = form


class PoleStructureError(ValueError):
    """The fitted rational function is not of nonnegative partial-fraction type."""


@dataclass(frozen=True)
class BarycentricForm:
    """r(z) = sum_j w_j f_j / (z - z_j)  /  sum_j w_j / (z - z_j)."""

    support_points: np.ndarray
    support_values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.support_points, dtype=float)
        f = np.asarray(self.support_values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if z.ndim != 1 or z.size == 0 or z.shape != f.shape or z.shape != w.shape:
            raise ValueError("support points, values and weights must be 1-D of equal length >= 1")
        if np.unique(z).size != z.size:
            raise ValueError("support points must be distinct")
        object.__setattr__(self, "support_points", z)
        object.__setattr__(self, "support_values", f)
        object.__setattr__(self, "weights", w)

    @property
    def order(self) -> int:
        """Number of support points m."""
        return self.support_points.size

    @property
    def degree(self) -> int:
        """Number of poles of the (m-1, m-1) rational function."""
        return self.order - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        diff = flat[:, None] - self.support_points[None, :]
        exact = diff == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            cauchy = 1.0 / diff
            num = cauchy @ (self.weights * self.support_values)
            den = cauchy @ self.weights
            out = num / den
        hit_rows, hit_cols = np.nonzero(exact)
        out[hit_rows] = self.support_values[hit_cols]
        return out.reshape(x.shape)


@dataclass(frozen=True)
class RationalModel:
    """Partial-fraction model sum_l c_l/(x + b_l) + c_inf of x^(-s).

    ``active`` flags real terms; padding terms added to reach a power-of-two
    order carry ``c = 0`` and ``active = False``.
    """

    poles: np.ndarray
    residues: np.ndarray
    c_inf: float = 0.0
    s: float | None = None
    interval: tuple[float, float] | None = None
    sup_error: float = math.nan
    active: np.ndarray | None = field(default=None)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.poles, dtype=float))
        c = np.atleast_1d(np.asarray(self.residues, dtype=float))
        if b.shape != c.shape or b.ndim != 1:
            raise ValueError("poles and residues must be 1-D arrays of equal length")
        active = np.ones(b.shape, dtype=bool) if self.active is None else np.asarray(self.active, dtype=bool)
        if active.shape != b.shape:
            raise ValueError("active mask has wrong length")
        if np.any(np.diff(b) < 0):
            raise PoleStructureError("poles b_l must be sorted ascending")
        if np.any(b < 0):
            raise PoleStructureError("Stieltjes structure violated: negative pole shift b_l")
        if np.any(c[active] <= 0):
            raise PoleStructureError("Stieltjes structure violated: nonpositive residue c_l")
        if np.any(c[~active] != 0):
            raise ValueError("inactive padding terms must have zero residue")
        if self.c_inf < 0:
            raise PoleStructureError("Stieltjes structure violated: negative c_inf")
        if self.s is not None and not 0 < self.s <= 1:
            raise ValueError("exponent s must lie in (0, 1]")
        if self.interval is not None:
            lo, hi = map(float, self.interval)
            if not 0 < lo <= hi:
                raise ValueError("fit interval must be positive with lo <= hi")
            object.__setattr__(self, "interval", (lo, hi))
        object.__setattr__(self, "poles", b)
        object.__setattr__(self, "residues", c)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "c_inf", float(self.c_inf))

    @property
    def order(self) -> int:
        """N_r, the number of terms including padding."""
        return self.poles.size

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def n_r(self) -> int:
        """log2 of the order; only defined once padded to a power of two."""
        n = self.order
        if n < 1 or n & (n - 1):
            raise ValueError(f"order {n} is not a power of two; call padded() first")
        return n.bit_length() - 1

    @property
    def c_tilde(self) -> np.ndarray:
        """[c_1, ..., c_Nr, c_inf, 0, ..., 0] of length 2 N_r."""
        out = np.zeros(2 * self.order)
        out[: self.order] = self.residues
        out[self.order] = self.c_inf
        return out

    @property
    def c_norm1(self) -> float:
        return float(np.abs(self.residues).sum() + abs(self.c_inf))

    @property
    def c_norm2(self) -> float:
        return float(np.sqrt(np.sum(self.residues**2) + self.c_inf**2))

    def padded(self) -> "RationalModel":
        """Copy padded to the next power-of-two order with inert terms."""
        n = self.order
        target = 1 if n == 0 else 1 << (n - 1).bit_length()
        if target == n:
            return self
        fill = self.poles[-1] if n else 0.0
        extra = target - n
        return replace(
            self,
            poles=np.concatenate([self.poles, np.full(extra, fill)]),
            residues=np.concatenate([self.residues, np.zeros(extra)]),
            active=np.concatenate([self.active, np.zeros(extra, dtype=bool)]),
        )

    def __call__(self, x):
        return evaluate_rational(self, x)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "interval": list(self.interval) if self.interval is not None else None,
            "poles": self.poles.tolist(),
            "residues": self.residues.tolist(),
            "active": self.active.tolist(),
            "c_inf": self.c_inf,
            "sup_error": None if math.isnan(self.sup_error) else self.sup_error,
            "n_r": self.n_r if self.order and not self.order & (self.order - 1) else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RationalModel":
        interval = data.get("interval")
        sup = data.get("sup_error")
        return cls(
            poles=np.asarray(data["poles"], dtype=float),
            residues=np.asarray(data["residues"], dtype=float),
            c_inf=float(data.get("c_inf", 0.0)),
            s=data.get("s"),
            interval=tuple(interval) if interval is not None else None,
            sup_error=math.nan if sup is None else float(sup),
            active=data.get("active"),
        )


def sample_grid(interval, n_samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Log-uniform samples over a positive interval (endpoints included)."""
    lo, hi = map(float, interval)
    if not 0 < lo <= hi:
        raise ValueError("interval must be positive with lo <= hi")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if lo == hi:
        return np.array([lo])
    x = np.geomspace(lo, hi, n_samples)
    x[0], x[-1] = lo, hi
    return x


def spectrum_interval(d: int, h: float) -> tuple[float, float]:
    """[8d, 4d/h^2], an enclosure of the finite-difference Laplacian spectrum."""
    return 8.0 * d, 4.0 * d / h**2


def _check_fit_args(s, interval, tol):
    if not 0 < s < 1:
        raise ValueError(f"exponent s must lie in (0, 1), got {s}")
    lo, hi = map(float, interval)
    if not 0 < lo <= hi:
        raise ValueError("interval endpoints must be positive with lo <= hi")
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")


def _aaa(Z, F, tol, max_support):
    """Core AAA loop; returns one BarycentricForm per greedy step and residuals."""
    Z = np.asarray(Z, dtype=float)
    F = np.asarray(F, dtype=float)
    mask = np.ones(Z.size, dtype=bool)
    idx: list[int] = []
    cols = []
    R = np.full(F.shape, F.mean())
    forms, errors = [], []
    for _ in range(max_support):
        j = int(np.argmax(np.where(mask, np.abs(F - R), -1.0)))
        idx.append(j)
        mask[j] = False
        cols.append(1.0 / np.where(mask, Z - Z[j], np.inf))
        z, f = Z[idx], F[idx]
        C = np.column_stack(cols)[mask]
        if C.shape[0] == 0:
            w = np.ones(1) if len(idx) == 1 else _null_weights(np.zeros((1, len(idx))))
        else:
            loewner = F[mask, None] * C - C * f[None, :]
            w = _null_weights(loewner)
        R = F.copy()
        R[mask] = (C @ (w * f)) / (C @ w)
        err = float(np.max(np.abs(F - R)))
        forms.append(BarycentricForm(z.copy(), f.copy(), w))
        errors.append(err)
        if err <= tol or not mask.any():
            break
    return forms, errors


def _null_weights(loewner):
    _, _, vh = np.linalg.svd(loewner, full_matrices=False)
    w = vh[-1].conj()
    # fix the sign so weights are reproducible
    k = int(np.argmax(np.abs(w)))
    return w / np.linalg.norm(w) * np.sign(w[k])


def aaa_fit(s: float, interval, tol: float, max_order: int = 32, n_samples: int = DEFAULT_SAMPLES) -> BarycentricForm:
    """Fit x^(-s) on ``interval`` with AAA until the sample residual is <= tol.

    Parameters
    ----------
    s : float
        Exponent in (0, 1).
    interval : (float, float)
        Positive fit interval.
    tol : float
        Absolute tolerance on the max residual over the log-uniform sample grid.
    max_order : int
        Maximum degree (number of poles); at most ``max_order + 1`` support points.

    Raises
    ------
    AAAConvergenceError
        If the tolerance is not met at ``max_order``.
    """
    _check_fit_args(s, interval, tol)
    Z = sample_grid(interval, n_samples)
    forms, errors = _aaa(Z, Z**-s, tol, max_order + 1)
    if errors[-1] > tol:
        raise AAAConvergenceError(errors[-1], forms[-1].degree, forms[-1])
    return forms[-1]


def aaa_sequence(s: float, interval, max_order: int, n_samples: int = DEFAULT_SAMPLES) -> list[BarycentricForm]:
    """Greedy AAA forms of degree 0, 1, ..., max_order (fewer if samples run out)."""
    _check_fit_args(s, interval, None)
    Z = sample_grid(interval, n_samples)
    forms, _ = _aaa(Z, Z**-s, 0.0, max_order + 1)
    return forms


def _poles_residues(form: BarycentricForm):
    z, f, w = form.support_points, form.support_values, form.weights
    m = form.order
    if m == 1:
        return np.empty(0, dtype=complex), np.empty(0, dtype=complex)
    E = np.zeros((m + 1, m + 1))
    E[0, 1:] = w
    E[1:, 0] = 1.0
    E[1:, 1:] = np.diag(z)
    B = np.eye(m + 1)
    B[0, 0] = 0.0
    ev = scipy.linalg.eigvals(E, B)
    poles = ev[np.isfinite(ev)]
    poles = poles[np.abs(poles) < 1e200]
    # the pencil loses relative accuracy on poles much smaller than max|z|;
    # a few Newton steps on the denominator restore it
    for _ in range(_NEWTON_STEPS):
        dz = poles[:, None] - z[None, :]
        den = (1.0 / dz) @ w
        dden = -(1.0 / dz**2) @ w
        step = den / dden
        poles = poles - np.where(np.isfinite(step), step, 0.0)
    dz = poles[:, None] - z[None, :]
    num = (1.0 / dz) @ (w * f)
    dden = -(1.0 / dz**2) @ w
    return poles, num / dden


def to_partial_fractions(form: BarycentricForm, s: float | None = None, interval=None,
                         pad: bool = True) -> RationalModel:
    """Convert a barycentric form to the sorted, nonnegative partial-fraction model.

    Poles are the finite eigenvalues of the arrowhead pencil; residues use
    N(p)/D'(p). Spurious terms (|c| < 1e-13 ||c||) and zero-residue terms are
    dropped, and the result is padded to a power-of-two order unless ``pad``
    is false.

    Raises
    ------
    PoleStructureError
        On complex poles beyond round-off, or negative b_l / c_l / c_inf.
    """
    poles, res = _poles_residues(form)
    wsum = form.weights.sum()
    scale = np.abs(form.weights).sum()
    if abs(wsum) <= 1e-14 * scale:
        raise PoleStructureError("rational function is unbounded at infinity")
    c_inf = float(form.weights @ form.support_values / wsum)

    bad = np.abs(poles.imag) > IMAG_TOL * np.maximum(np.abs(poles), 1.0)
    if np.any(bad):
        raise PoleStructureError(f"complex poles in fit: {poles[bad]}")
    b = -poles.real
    c = res.real
    if c.size:
        keep = np.abs(c) > SPURIOUS_TOL * max(np.linalg.norm(c), abs(c_inf))
        b, c = b[keep], c[keep]
    if np.any(b < 0):
        raise PoleStructureError(f"Stieltjes structure violated: b = {b[b < 0]}")
    if np.any(c < 0):
        raise PoleStructureError(f"Stieltjes structure violated: c = {c[c < 0]}")
    if c_inf < 0:
        if c_inf > -1e-13 * max(1.0, np.abs(form.support_values).max()):
            c_inf = 0.0
        else:
            raise PoleStructureError(f"Stieltjes structure violated: c_inf = {c_inf}")
    order = np.argsort(b, kind="stable")
    model = RationalModel(
        poles=b[order],
        residues=c[order],
        c_inf=c_inf,
        s=s,
        interval=None if interval is None else tuple(interval),
    )
    if s is not None and interval is not None:
        model = replace(model, sup_error=sup_error(model))
    return model.padded() if pad else model


def evaluate_rational(model: RationalModel, x):
    """sum_l c_l / (x + b_l) + c_inf, vectorised over x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("evaluate_rational requires x > 0")
    terms = model.residues / (x[..., None] + model.poles)
    return terms.sum(axis=-1) + model.c_inf


def sup_error(model: RationalModel, n_samples: int = DEFAULT_SAMPLES) -> float:
    """Max |x^(-s) - r(x)| over a log-uniform grid on the model's fit interval."""
    if model.s is None or model.interval is None:
        raise ValueError("model has no exponent / fit interval attached")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    lo, hi = model.interval
    x = np.array([lo, hi]) if n_samples == 2 else sample_grid(model.interval, n_samples)
    return float(np.max(np.abs(x**-model.s - evaluate_rational(model, x))))


def fit_rational(s: float, interval, tol: float = 1e-8, max_order: int = 32,
                 n_samples: int = DEFAULT_SAMPLES) -> RationalModel:
    """AAA fit to tolerance followed by conversion to partial fractions."""
    form = aaa_fit(s, interval, tol, max_order, n_samples)
    return to_partial_fractions(form, s=s, interval=interval)


def fit_rational_order(s: float, interval, n_terms: int, n_samples: int = DEFAULT_SAMPLES) -> RationalModel:
    """Fit with exactly ``n_terms`` poles (degree fixed, no tolerance)."""
    if n_terms < 0:
        raise ValueError("n_terms must be >= 0")
    forms = aaa_sequence(s, interval, n_terms, n_samples)
    return to_partial_fractions(forms[-1], s=s, interval=interval)
