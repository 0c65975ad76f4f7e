"""The combined shifted system, its modified form and the Hadamard recovery.

For a model with N_r = 2^{n_r} poles the shifted problems
(A_{h,d} + b_l I) u^(l) = f are stacked into

    H = I_{N_r} (x) A_{h,d} + B (x) I,        B = diag(b_1, ..., b_{N_r}),

and padded to H~ = diag(H, I) with right-hand side F~ = c~ (x) f, where
c~ = [c_1, ..., c_{N_r}, c_inf, 0, ..., 0]. The solution of H~ x = F~ has
blocks [c_1 u^(1); ...; c_{N_r} u^(N_r); c_inf f; 0; ...; 0] and their sum is
the rational solution u_h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import hadamard
from scipy.sparse.linalg import splu

from .grid import GridFunction, GridSpec, laplacian_dd
from .ratapprox import RationalModel
from .blockencoding import (  # re-exported as part of the system layer
    BlockEncoding,
    be_arith,
    be_diagonal_B,
    be_Htilde,
    be_laplacian_1d,
    be_laplacian_dd,
    verify_block_encoding,
)

__all__ = [
    "BlockEncoding",
    "CombinedSystem",
    "be_arith",
    "be_diagonal_B",
    "be_Htilde",
    "be_laplacian_1d",
    "be_laplacian_dd",
    "build_combined",
    "eta1_estimate",
    "recover_hadamard",
    "solve_combined",
    "verify_block_encoding",
]


@dataclass(frozen=True)
class CombinedSystem:
    H: sp.csr_matrix
    Htilde: sp.csr_matrix
    F: np.ndarray
    F_tilde: np.ndarray
    c_tilde: np.ndarray
    B: np.ndarray
    n_r: int
    n_x: int | None
    d: int
    spec: GridSpec
    model: RationalModel

    @property
    def block_size(self) -> int:
        return self.spec.size

    @property
    def N_r(self) -> int:
        return 1 << self.n_r

    def blocks(self, x: np.ndarray) -> np.ndarray:
        """View a length 2 N_r (M-1)^d vector as (2 N_r, (M-1)^d)."""
        return np.asarray(x).reshape(2 * self.N_r, self.block_size)


def build_combined(spec: GridSpec, model: RationalModel, f: GridFunction) -> CombinedSystem:
    """Assemble H, H~, F and F~ for ``model`` padded to a power-of-two order."""
    if f.spec != spec:
        raise ValueError("right-hand side lives on a different grid")
    if model.order & (model.order - 1):
        model = model.padded()
    n_r = model.n_r
    N_r = 1 << n_r
    A = laplacian_dd(spec).sparse()
    n = A.shape[0]
    b = np.asarray(model.poles, dtype=float)
    H = (sp.kron(sp.identity(N_r), A) + sp.kron(sp.diags(b), sp.identity(n))).tocsr()
    Ht = sp.block_diag([H, sp.identity(N_r * n)], format="csr")
    c_tilde = model.c_tilde
    F_tilde = np.kron(c_tilde, f.values)
    if F_tilde.size != Ht.shape[0]:
        raise ValueError("size mismatch between H~ and F~")
    n_x = spec.n_x if spec.is_qubit_grid else None
    return CombinedSystem(H=H, Htilde=Ht, F=np.tile(f.values, N_r), F_tilde=F_tilde,
                          c_tilde=c_tilde, B=b, n_r=n_r, n_x=n_x, d=spec.d, spec=spec, model=model)


def solve_combined(system: CombinedSystem) -> np.ndarray:
    """Direct sparse LU solve of H~ x = F~ (independent of the sine route)."""
    return splu(system.Htilde.tocsc()).solve(system.F_tilde)


def recover_hadamard(U_tilde: np.ndarray, n_r: int, spec: GridSpec | None = None):
    """Apply sqrt(2N_r) Had^{(x)(n_r+1)} (x) I and keep the first block.

    With Sylvester ordering the first row of the normalized Hadamard is
    constant, so the first block is the plain sum of all blocks.
    """
    U_tilde = np.asarray(U_tilde)
    n_blocks = 2 << n_r
    if U_tilde.size % n_blocks:
        raise ValueError(f"length {U_tilde.size} is not a multiple of 2^(n_r+1) = {n_blocks}")
    blocks = U_tilde.reshape(n_blocks, -1)
    had = hadamard(n_blocks) / math.sqrt(n_blocks)
    out = (math.sqrt(n_blocks) * had @ blocks)[0]
    if np.isrealobj(U_tilde) or np.abs(out.imag).max(initial=0.0) == 0:
        out = out.real
    return GridFunction(out, spec) if spec is not None else out


def eta1_estimate(U_tilde: np.ndarray, u_h, model: RationalModel, d: int) -> tuple[float, float]:
    """Repetition factor sqrt(2N_r) ||U~|| / ||u_h|| and its a priori bound

        sqrt(2N_r) ||c||_2 (b_1 + 8d) / c_1.
    """
    u = u_h.values if isinstance(u_h, GridFunction) else np.asarray(u_h)
    un = float(np.linalg.norm(u))
    if un == 0.0:
        raise ZeroDivisionError("eta1 is undefined for a zero solution")
    N_r = model.order
    measured = math.sqrt(2 * N_r) * float(np.linalg.norm(U_tilde)) / un
    on = model.active
    c1, b1 = float(model.residues[on][0]), float(model.poles[on][0])
    bound = math.sqrt(2 * N_r) * model.c_norm2 * (b1 + 8 * d) / c1
    if measured > bound * (1 + 1e-6):
        raise AssertionError(f"eta1 {measured:.6g} exceeds its bound {bound:.6g}")
    return measured, bound
