"""Schrödingerization of the steady-state system H~ x = F~.

The solution is the large-time limit of dv/dt = -H~ v + F~. Augmenting with a
constant block gives the homogeneous system d v_f/dt = H_f v_f with

    H_f = [[-H~, I/T], [0, 0]],        v_f(0) = [0; T F~],

which is split as H_f = H_1 + i H_2 into Hermitian parts. The warped variable
w(t, p) = e^{-p} v_f(t) obeys a Hamiltonian equation in (p, system). On the
periodic grid p_k = -pi R + k dp it is diagonal in the Fourier modes
mu_l = (l - N_p/2)/R, each evolving under exp(-i (mu_l H_1 - H_2) t).
v_f is read back as e^{p} w(t, p) for p above the threshold p* = 1/2.

Amplitude arrays have shape (N_p, 2 n) with n = dim H~: row k is the p-grid
point, and within a row the augmentation qubit is the most significant index.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh

from .grid import GridFunction, GridSpec, discrete_l2_norm, eigenvalue_sums, sine_eigenpairs
from .ratapprox import RationalModel
from .refsolve import rational_solution
from .system import CombinedSystem, build_combined, recover_hadamard, solve_combined
from ._parallel import pmap

__all__ = [
    "DENSE_SCHROD_LIMIT",
    "HamiltonianFactors",
    "RecoveryError",
    "SchrodConfig",
    "WarpedState",
    "build_augmented",
    "default_T",
    "evolve_exact",
    "evolve_trotter",
    "fourier_matrix",
    "init_warped",
    "recover_vf",
    "run_pipeline",
    "select_oracle",
    "trotter_order_study",
    "wrap_safe_R",
]

DENSE_SCHROD_LIMIT = 2**11
R_MIN = 12.0 * math.log(10) / math.pi  # e^{-pi R} <= 1e-12


class RecoveryError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SchrodConfig:
    """Discretization of the warped problem.

    ``window`` is the width above p* over which candidate recoveries are
    compared; ``floor`` is the relative amplitude below which a grid point
    is not trusted for recovery.
    """

    T: float
    R: float = 9.0
    N_p: int = 64
    N_t: int = 64
    p_star: float = 0.5
    delta: float | None = None
    window: float = 2.0
    floor: float = 1e-13

    def __post_init__(self):
        if not self.T >= 0:
            raise ValueError("T must be nonnegative")
        if self.R < R_MIN - 1e-12:
            raise ValueError(f"R = {self.R} violates e^(-pi R) <= 1e-12 (needs R >= {R_MIN:.3f})")
        if self.N_p < 2 or self.N_p & (self.N_p - 1):
            raise ValueError("N_p must be a power of two >= 2")
        if self.N_t < 1:
            raise ValueError("N_t must be positive")

    @property
    def dp(self) -> float:
        return 2 * math.pi * self.R / self.N_p

    @property
    def n_p(self) -> int:
        return self.N_p.bit_length() - 1

    @property
    def p(self) -> np.ndarray:
        return -math.pi * self.R + self.dp * np.arange(self.N_p)

    @property
    def mu(self) -> np.ndarray:
        return (np.arange(self.N_p) - self.N_p / 2) / self.R

    def to_dict(self) -> dict:
        return {"T": self.T, "R": self.R, "N_p": self.N_p, "N_t": self.N_t, "p_star": self.p_star,
                "delta": self.delta, "window": self.window, "floor": self.floor}


def _htilde_extremes(system: CombinedSystem) -> tuple[float, float]:
    lam = eigenvalue_sums(system.spec).reshape(-1)
    b = system.B
    lo = min(lam.min() + b.min(), 1.0)
    hi = max(lam.max() + b.max(), 1.0)
    return float(lo), float(hi)


def default_T(system: CombinedSystem, delta: float) -> float:
    """(kappa / ||H~||) log(1/delta), i.e. ||H~^{-1}|| log(1/delta)."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    lo, hi = _htilde_extremes(system)
    kappa = hi / lo
    return kappa / hi * math.log(1.0 / delta)


def wrap_safe_R(system: CombinedSystem, T: float, p_star: float = 0.5, margin: float = 30.0) -> float:
    """Radius whose period 2 pi R exceeds the drift ||H~|| T of the warped profile plus a margin.

    Components of w move through p with speed given by the eigenvalues of
    -H_1, of order ||H~||; on a periodic p-grid the profile must not wrap
    back into the recovery region before time T.
    """
    _, hi = _htilde_extremes(system)
    return max(9.0, (hi * T + p_star + margin) / (2 * math.pi))


def fourier_matrix(cfg: SchrodConfig) -> np.ndarray:
    """Phi_{jl} = exp(i mu_l (p_j + pi R)); its inverse is Phi^dag / N_p."""
    return np.exp(1j * np.outer(cfg.p + math.pi * cfg.R, cfg.mu))


@dataclass(frozen=True)
class HamiltonianFactors:
    H_f: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    mu: np.ndarray
    T: float
    Htilde: np.ndarray
    system: CombinedSystem | None = None

    @property
    def n(self) -> int:
        return self.Htilde.shape[0]


@dataclass
class WarpedState:
    amplitudes: np.ndarray  # (N_p, 2n)
    t: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def flat(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def copy(self) -> "WarpedState":
        return WarpedState(self.amplitudes.copy(), self.t, self.p)


def build_augmented(system, T: float) -> HamiltonianFactors:
    """H_f and its Hermitian split for a CombinedSystem (or a dense H~)."""
    if not T > 0:
        raise ValueError("T must be positive")
    if isinstance(system, CombinedSystem):
        n = system.Htilde.shape[0]
        if n > DENSE_SCHROD_LIMIT:
            raise OverflowError(f"dense Schrödingerization limited to dim H~ <= {DENSE_SCHROD_LIMIT}")
        Ht = system.Htilde.toarray()
        sys_ref = system
    else:
        Ht = np.atleast_2d(np.asarray(system, dtype=float))
        n = Ht.shape[0]
        sys_ref = None
    eye = np.eye(n)
    zero = np.zeros((n, n))
    H_f = np.block([[-Ht, eye / T], [zero, zero]])
    H1 = 0.5 * (H_f + H_f.conj().T)
    H2 = (H_f - H_f.conj().T) / 2j
    return HamiltonianFactors(H_f=H_f, H1=H1, H2=H2, mu=np.zeros(0), T=T, Htilde=Ht, system=sys_ref)


def init_warped(factors: HamiltonianFactors, cfg: SchrodConfig, F_tilde) -> WarpedState:
    """W(0) = psi (x) v_f(0) with psi(p) = e^{-|p|} and v_f(0) = [0; T F~]."""
    F_tilde = np.asarray(F_tilde)
    vf0 = np.concatenate([np.zeros(factors.n), factors.T * F_tilde]).astype(complex)
    psi = np.exp(-np.abs(cfg.p))
    return WarpedState(np.outer(psi, vf0), 0.0, cfg.p)


def _alternating(N: int) -> np.ndarray:
    return np.where(np.arange(N) % 2 == 0, 1.0, -1.0)[:, None]


# Phi_{jl} = (-1)^j exp(2 pi i j l / N_p), so both transforms are FFTs.

def _to_modes(W: np.ndarray, cfg: SchrodConfig) -> np.ndarray:
    return np.fft.fft(_alternating(cfg.N_p) * W, axis=0) / cfg.N_p


def _from_modes(C: np.ndarray, cfg: SchrodConfig) -> np.ndarray:
    return _alternating(cfg.N_p) * np.fft.ifft(C, axis=0) * cfg.N_p


def _hermitian_exp(G: np.ndarray, t: float) -> np.ndarray:
    """exp(-i G t) for Hermitian G via its eigendecomposition."""
    lam, V = eigh(G)
    return (V * np.exp(-1j * lam * t)) @ V.conj().T


def evolve_exact(state: WarpedState, factors: HamiltonianFactors, cfg: SchrodConfig,
                 t: float | None = None) -> WarpedState:
    """Per-mode exact evolution exp(-i (mu_l H_1 - H_2) t), default t = cfg.T."""
    t = cfg.T if t is None else t
    C = _to_modes(state.amplitudes, cfg)
    mu = cfg.mu

    def step(l):
        G = mu[l] * factors.H1 - factors.H2
        return _hermitian_exp(G, t) @ C[l]

    C = np.array(pmap(step, range(cfg.N_p)))
    return WarpedState(_from_modes(C, cfg), state.t + t, cfg.p)


def select_oracle(C: np.ndarray, W: np.ndarray, n_p: int) -> np.ndarray:
    """(I (x) W^{-2^{n_p-1}}) SEL(W): row k of ``C`` is mapped to W^{k - N_p/2} C[k].

    SEL is realized with controlled powers W^{2^j}, one per bit of k,
    obtained by repeated squaring.
    """
    N_p = 1 << n_p
    if C.shape[0] != N_p:
        raise ValueError("row count must equal 2^n_p")
    k = np.arange(N_p)
    out = C.copy()
    P = W
    for j in range(n_p):
        rows = (k >> j) & 1 == 1
        out[rows] = out[rows] @ P.T
        if j < n_p - 1:
            P = P @ P
    # P is now W^{2^{n_p-1}}; its inverse is its adjoint
    return out @ P.conj()


def _v2(C: np.ndarray, a: float) -> np.ndarray:
    """I (x) exp(i a sigma_y) (x) I on the augmentation qubit."""
    n = C.shape[1] // 2
    top, bot = C[:, :n], C[:, n:]
    ca, sa = math.cos(a), math.sin(a)
    return np.concatenate([ca * top + sa * bot, -sa * top + ca * bot], axis=1)


def _exp_Htilde_chain(system: CombinedSystem, r: float) -> np.ndarray:
    """exp(-i r H~) assembled from the circuit factors.

    (|0><0| (x) exp(-i r H) + |1><1| (x) I)(Ph(-r) (x) I), with
    exp(-i r H) = (I (x) exp(-i r A_{h,d})) (exp(-i r B) (x) I) and
    exp(-i r A_{h,d}) the product of the d one-directional exponentials.
    """
    spec = system.spec
    dj, P = sine_eigenpairs(spec)
    e1 = (P * np.exp(-1j * r * dj)) @ P
    n = spec.n
    factors_A = []
    for k in range(1, spec.d + 1):
        term = np.kron(np.kron(np.eye(n ** (spec.d - k)), e1), np.eye(n ** (k - 1)))
        factors_A.append(term)
    eA = factors_A[0]
    for term in factors_A[1:]:
        eA = eA @ term
    N_r = system.N_r
    eB = np.exp(-1j * r * system.B)
    eH = np.kron(np.eye(N_r), eA) @ np.kron(np.diag(eB), np.eye(n ** spec.d))
    m = eH.shape[0]
    ctrl = np.zeros((2 * m, 2 * m), dtype=complex)
    ctrl[:m, :m] = eH
    ctrl[m:, m:] = np.eye(m)
    phase = np.kron(np.diag([1.0, np.exp(-1j * r)]), np.eye(m))
    return ctrl @ phase


def _step_unitary(factors: HamiltonianFactors, r: float, depth: str) -> np.ndarray:
    """W = exp(i r H_1), exactly or through the inner factorization U_2 U_1."""
    if depth == "outer":
        return _hermitian_exp(factors.H1, -r)
    n = factors.n
    rp = r / (2 * factors.T)
    U1 = np.kron(np.array([[math.cos(rp), 1j * math.sin(rp)], [1j * math.sin(rp), math.cos(rp)]]), np.eye(n))
    if depth == "inner":
        eHt = _hermitian_exp(factors.Htilde, r)
    elif depth == "full":
        if factors.system is None:
            raise ValueError("depth='full' needs factors built from a CombinedSystem")
        eHt = _exp_Htilde_chain(factors.system, r)
    else:
        raise ValueError(f"unknown Trotter depth {depth!r}")
    U2 = np.eye(2 * n, dtype=complex)
    U2[:n, :n] = eHt
    return U2 @ U1


def evolve_trotter(state: WarpedState, factors: HamiltonianFactors, cfg: SchrodConfig,
                   depth: str = "outer", t: float | None = None) -> WarpedState:
    """prod_{N_t} V_2 V_1 with step dt = t / N_t (first-order splitting)."""
    t = cfg.T if t is None else t
    dt = t / cfg.N_t
    r = -dt / cfg.R
    a = dt / (2 * factors.T)
    W = _step_unitary(factors, r, depth)
    C = _to_modes(state.amplitudes, cfg)
    for _ in range(cfg.N_t):
        C = select_oracle(C, W, cfg.n_p)
        C = _v2(C, a)
    return WarpedState(_from_modes(C, cfg), state.t + t, cfg.p)


@dataclass
class Recovery:
    candidates: np.ndarray  # (n_candidates, 2n) estimates of v_f
    p_candidates: np.ndarray
    consensus: np.ndarray
    p_consensus: float
    spread: float
    boundary_ratio: float


def recover_vf(state: WarpedState, cfg: SchrodConfig) -> Recovery:
    """Read v_f back as e^{p_k} w(t, p_k) for p_k > p*.

    The consensus value is taken at the smallest p_k >= p* + dp; the spread
    is the largest relative deviation from it among trusted candidates with
    p* < p_k <= p* + window.
    """
    W = state.amplitudes
    p = cfg.p
    wmax = np.abs(W).max()
    if wmax == 0:
        raise RecoveryError("warped state is identically zero")
    rows = np.abs(W).max(axis=1)
    above = p > cfg.p_star
    trusted = above & (rows > cfg.floor * wmax)
    if not trusted.any():
        raise RecoveryError("all recovery candidates are below the numerical floor")
    idx = np.flatnonzero(trusted)
    cands = np.exp(p[idx])[:, None] * W[idx]
    pick = np.flatnonzero(trusted & (p >= cfg.p_star + cfg.dp - 1e-12))
    k0 = pick[0] if pick.size else idx[0]
    consensus = np.exp(p[k0]) * W[k0]
    cn = np.linalg.norm(consensus)
    win = idx[(p[idx] <= cfg.p_star + cfg.window)]
    if cn > 0 and win.size:
        dev = np.linalg.norm(np.exp(p[win])[:, None] * W[win] - consensus, axis=1)
        spread = float(dev.max() / cn)
    else:
        spread = 0.0
    boundary = float(np.abs(W[0]).max() / wmax)
    return Recovery(cands, p[idx], consensus, float(p[k0]), spread, boundary)


def _relative(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a - b))


def run_pipeline(spec: GridSpec, model: RationalModel, f: GridFunction, cfg: SchrodConfig | None = None,
                 mode: str = "exact", delta: float = 1e-2, depth: str = "outer",
                 auto_R: bool = False, dp_max: float | None = None) -> tuple[GridFunction, dict]:
    """Classical emulation of the full Schrödingerization solve.

    ``cfg=None`` builds a default configuration with T from ``delta``; with
    ``auto_R`` the radius is enlarged to a wrap-safe value and N_p scaled to
    keep the grid spacing, or to reach a spacing of at most ``dp_max`` when
    given. Returns the recovered u_h and a report.
    """
    t0 = time.perf_counter()
    system = build_combined(spec, model, f)
    if cfg is None:
        cfg = SchrodConfig(T=default_T(system, delta), delta=delta)
    if auto_R:
        R = wrap_safe_R(system, cfg.T, cfg.p_star)
        if R > cfg.R:
            n_p = max(cfg.N_p, 1 << math.ceil(math.log2(cfg.N_p * R / cfg.R)))
            cfg = replace(cfg, R=R, N_p=n_p)
    if dp_max is not None and cfg.dp > dp_max:
        cfg = replace(cfg, N_p=1 << math.ceil(math.log2(2 * math.pi * cfg.R / dp_max)))
    if cfg.T == 0:
        raise ValueError("pipeline needs T > 0")
    factors = build_augmented(system, cfg.T)
    state0 = init_warped(factors, cfg, system.F_tilde)
    # resolution guard: the t = 0 recovery identity must hold
    for _ in range(4):
        rec0 = recover_vf(state0, cfg) if np.any(system.F_tilde) else None
        vf0 = np.concatenate([np.zeros(factors.n), cfg.T * system.F_tilde])
        if rec0 is None or _relative(rec0.consensus, vf0) <= 1e-8:
            break
        cfg = replace(cfg, N_p=2 * cfg.N_p)
        state0 = init_warped(factors, cfg, system.F_tilde)
    exact = solve_combined(system)
    uh = rational_solution(system.model, spec, f)
    if not np.any(system.F_tilde):
        zero = GridFunction(np.zeros(spec.size), spec)
        report = {"config": cfg.to_dict(), "mode": mode, "steady_state_error": 0.0,
                  "solution_error_h": 0.0, "spread": 0.0, "boundary_ratio": 0.0,
                  "runtime_s": time.perf_counter() - t0}
        return zero, report
    if mode == "exact":
        final = evolve_exact(state0, factors, cfg)
    elif mode == "trotter":
        final = evolve_trotter(state0, factors, cfg, depth=depth)
    else:
        raise ValueError(f"unknown evolution mode {mode!r}")
    rec = recover_vf(final, cfg)
    vT = rec.consensus[: factors.n]
    vT = vT.real if np.abs(vT.imag).max() < 1e-9 * max(np.abs(vT).max(), 1e-300) else vT
    uq = recover_hadamard(np.real_if_close(vT, tol=1e9), system.n_r)
    uq = GridFunction(np.real(uq), spec)
    _, hi = _htilde_extremes(system)
    report = {
        "config": cfg.to_dict(),
        "mode": mode,
        "depth": depth if mode == "trotter" else None,
        "n_htilde": factors.n,
        "steady_state_error": _relative(vT, exact),
        "ode_limit_error": float(math.exp(-cfg.T * _htilde_extremes(system)[0])),
        "solution_error_h": discrete_l2_norm(uq - uh),
        "spread": rec.spread,
        "boundary_ratio": rec.boundary_ratio,
        "p_consensus": rec.p_consensus,
        "wrap_margin": 2 * math.pi * cfg.R - (hi * cfg.T + cfg.p_star),
        "runtime_s": time.perf_counter() - t0,
    }
    if report["wrap_margin"] < 0:
        warnings.warn(
            f"p-domain period {2 * math.pi * cfg.R:.3g} is shorter than the drift {hi * cfg.T:.3g}; "
            "recovered values are polluted by wrap-around (use auto_R)",
            RuntimeWarning,
            stacklevel=2,
        )
    return uq, report


def trotter_order_study(factors: HamiltonianFactors, cfg: SchrodConfig, F_tilde, N_t_list=(4, 8, 16, 32, 64),
                        depth: str = "outer", reference: str = "exact") -> dict:
    """Gap between Trotterized and reference evolution over a sequence of step counts.

    ``reference`` is "exact" or "outer" (the latter isolates the inner split).
    Returns the gaps and the least-squares slope of log gap vs log dt.
    """
    state0 = init_warped(factors, cfg, F_tilde)
    ref_exact = evolve_exact(state0, factors, cfg) if reference == "exact" else None
    gaps, dts = [], []
    for N_t in N_t_list:
        c = replace(cfg, N_t=int(N_t))
        out = evolve_trotter(state0, factors, c, depth=depth)
        ref = ref_exact if ref_exact is not None else evolve_trotter(state0, factors, c, depth="outer")
        gaps.append(float(np.linalg.norm(out.amplitudes - ref.amplitudes) / np.linalg.norm(ref.amplitudes)))
        dts.append(cfg.T / N_t)
    slope = float(np.polyfit(np.log(dts), np.log(gaps), 1)[0])
    return {"N_t": [int(n) for n in N_t_list], "dt": dts, "gap": gaps, "slope": slope,
            "depth": depth, "reference": reference}
