"""Exact, matrix-free block-encodings and their arithmetic.

A block-encoding of an N x N matrix A is a unitary U on (ancilla (x) system)
with ``alpha * (<0^m| (x) I) U (|0^m> (x) I) = A``. Unitaries are stored as a
pair of callables acting on column stacks of shape (2^m * N, K), ancilla
index most significant, so that large compositions never need the dense U.
Every encoding carries a tally of how many times each primitive oracle was
used in building it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec

__all__ = [
    "BlockEncoding",
    "DENSE_UNITARY_LIMIT",
    "be_add",
    "be_controlled_diag",
    "be_dagger",
    "be_Htilde",
    "be_diagonal",
    "be_diagonal_B",
    "be_laplacian_1d",
    "be_laplacian_dd",
    "be_identity",
    "be_multiply",
    "be_shift",
    "be_tensor",
    "be_arith",
    "from_unitary",
    "phase_flip",
    "prepare_unitary",
    "verify_block_encoding",
]

DENSE_UNITARY_LIMIT = 2**13
_CHUNK = 64


@dataclass(frozen=True)
class BlockEncoding:
    apply: Callable[[np.ndarray], np.ndarray]
    apply_adj: Callable[[np.ndarray], np.ndarray]
    alpha: float
    m: int
    dim: int
    eps: float = 0.0
    tally: Counter = field(default_factory=Counter)
    label: str = ""

    @property
    def total_dim(self) -> int:
        return (1 << self.m) * self.dim

    def __call__(self, x):
        return self.apply(x)

    def scaled(self, factor: float) -> "BlockEncoding":
        """Same unitary, read as an encoding of ``factor * A``."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return BlockEncoding(self.apply, self.apply_adj, self.alpha * factor, self.m, self.dim,
                             self.eps * factor, Counter(self.tally), self.label)

    def block(self) -> np.ndarray:
        """(<0^m| (x) I) U (|0^m> (x) I), without the alpha factor."""
        out = np.empty((self.dim, self.dim), dtype=complex)
        for start in range(0, self.dim, _CHUNK):
            cols = np.arange(start, min(start + _CHUNK, self.dim))
            x = np.zeros((self.total_dim, cols.size), dtype=complex)
            x[cols, np.arange(cols.size)] = 1.0
            out[:, cols] = self.apply(x)[: self.dim]
        return out

    def matrix(self) -> np.ndarray:
        """Dense U; only for total dimension up to ``DENSE_UNITARY_LIMIT``."""
        if self.total_dim > DENSE_UNITARY_LIMIT:
            raise OverflowError(f"dense unitary of size {self.total_dim} exceeds {DENSE_UNITARY_LIMIT}")
        return self.apply(np.eye(self.total_dim, dtype=complex))

    def unitarity_defect(self, n_probe: int = 4, seed: int = 0) -> float:
        """max |U^dag U - I| (dense) or max over random probes of |U^dag U x - x|."""
        if self.total_dim <= 2**11:
            U = self.matrix()
            return float(np.abs(U.conj().T @ U - np.eye(self.total_dim)).max())
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((self.total_dim, n_probe)) + 1j * rng.standard_normal((self.total_dim, n_probe))
        x /= np.linalg.norm(x, axis=0)
        back = self.apply_adj(self.apply(x))
        fwd = self.apply(self.apply_adj(x))
        return float(max(np.abs(back - x).max(), np.abs(fwd - x).max()))

    def summary(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "m": self.m,
            "dim": self.dim,
            "eps": self.eps,
            "tally": dict(sorted(self.tally.items())),
        }


def verify_block_encoding(be: BlockEncoding, target) -> float:
    """Spectral norm || target - alpha * block(U) ||."""
    target = np.asarray(target.toarray() if hasattr(target, "toarray") else target)
    if target.shape != (be.dim, be.dim):
        raise ValueError(f"target shape {target.shape} does not match encoding dim {be.dim}")
    return float(np.linalg.norm(target - be.alpha * be.block(), 2))


# -- reshaping helper --------------------------------------------------------

def _on_axes(fn, t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply ``fn`` (acting on flattened ``axes`` as rows) with all other axes batched."""
    axes = list(axes)
    rest = [i for i in range(t.ndim) if i not in axes]
    perm = axes + rest
    moved = np.transpose(t, perm)
    lead = moved.shape[: len(axes)]
    flat = moved.reshape(int(np.prod(lead)), -1)
    res = fn(flat).reshape(moved.shape)
    return np.transpose(res, np.argsort(perm))


def _as_cols(x):
    x = np.asarray(x)
    return (x[:, None], True) if x.ndim == 1 else (x, False)


def _wrap(core):
    def fn(x):
        cols, vec = _as_cols(x)
        out = core(cols.astype(complex, copy=False))
        return out[:, 0] if vec else out
    return fn


# -- primitives ----------------------------------------------------------------

def from_unitary(U: np.ndarray, alpha: float = 1.0, m: int = 0, label: str = "", tally=None) -> BlockEncoding:
    U = np.asarray(U, dtype=complex)
    if U.shape[0] != U.shape[1] or U.shape[0] % (1 << m):
        raise ValueError("unitary must be square with 2^m * N rows")
    Uh = U.conj().T
    return BlockEncoding(_wrap(lambda x: U @ x), _wrap(lambda x: Uh @ x), alpha, m,
                         U.shape[0] >> m, 0.0, Counter(tally or {}), label)


def be_identity(dim: int) -> BlockEncoding:
    """Trivial (1, 0, 0) encoding of the identity."""
    ident = _wrap(lambda x: x.copy())
    return BlockEncoding(ident, ident, 1.0, 0, dim, 0.0, Counter(), f"I[{dim}]")


def prepare_unitary(amplitudes: np.ndarray) -> np.ndarray:
    """Real orthogonal matrix whose first column is ``amplitudes`` (unit norm)."""
    a = np.asarray(amplitudes, dtype=float)
    a = a / np.linalg.norm(a)
    n = a.size
    # Householder reflection mapping e_0 to a
    e0 = np.zeros(n)
    e0[0] = 1.0
    v = e0 - a
    if np.linalg.norm(v) < 1e-15:
        return np.eye(n)
    v /= np.linalg.norm(v)
    return np.eye(n) - 2.0 * np.outer(v, v)


def be_shift(N: int) -> BlockEncoding:
    """One-flag encoding of S+ on N states (ones on the subdiagonal).

    U = CX_{sys=0 -> flag} (I (x) C), with C the cyclic increment; the
    controlled flip moves the wrap-around term |N-1> -> |0> out of the
    flag-0 block, leaving (I - |0><0|) C = S+ there. On a qubit register
    N = 2^n, but any N >= 1 gives a valid unitary.
    """

    def core(x):
        t = x.reshape(2, N, -1)
        t = np.roll(t, 1, axis=1)
        t[:, 0] = t[::-1, 0].copy()
        return t.reshape(x.shape)

    def core_adj(x):
        t = x.reshape(2, N, -1).copy()
        t[:, 0] = t[::-1, 0].copy()
        t = np.roll(t, -1, axis=1)
        return t.reshape(x.shape)

    return BlockEncoding(_wrap(core), _wrap(core_adj), 1.0, 1, N, 0.0, Counter(), "S+")


def be_diagonal(diag, label: str = "diag", tally_key: str | None = None) -> BlockEncoding:
    """One-ancilla reflection encoding of diag(v):

        U = [[D, S], [S, -D]],  D = diag(v)/alpha,  S = sqrt(I - D^2),

    with alpha = max|v| (alpha = 1 for the zero matrix).
    """
    v = np.asarray(diag, dtype=float)
    vmax = float(np.abs(v).max()) if v.size else 0.0
    alpha = vmax if vmax > 0 else 1.0
    D = v / alpha
    S = np.sqrt(np.clip(1.0 - D**2, 0.0, None))
    N = v.size

    def core(x):
        t = x.reshape(2, N, -1)
        out = np.empty_like(t)
        out[0] = D[:, None] * t[0] + S[:, None] * t[1]
        out[1] = S[:, None] * t[0] - D[:, None] * t[1]
        return out.reshape(x.shape)

    tally = Counter({tally_key: 1}) if tally_key else Counter()
    return BlockEncoding(_wrap(core), _wrap(core), alpha, 1, N, 0.0, tally, label)


# -- arithmetic ------------------------------------------------------------------

def be_add(encodings: Sequence[BlockEncoding], coeffs: Sequence[float] | None = None,
           label: str = "sum") -> BlockEncoding:
    """LCU encoding of sum_i coeffs_i A_i.

    alpha = sum |c_i| alpha_i. The selector has ceil(log2 k) qubits and the
    sub-encodings share one register of max m_i qubits; idle qubits pad the
    ancilla count up to sum m_i so the count matches the usual pairwise
    bookkeeping whenever that is at least as large.
    """
    encodings = list(encodings)
    k = len(encodings)
    if k == 0:
        raise ValueError("need at least one encoding")
    coeffs = np.ones(k) if coeffs is None else np.asarray(coeffs, dtype=float)
    if coeffs.shape != (k,):
        raise ValueError("one coefficient per encoding")
    dim = encodings[0].dim
    if any(e.dim != dim for e in encodings):
        raise ValueError("incompatible dimensions in sum")
    if k == 1:
        e = encodings[0]
        if coeffs[0] < 0:
            raise ValueError("single negative term not supported")
        return e.scaled(coeffs[0])
    weights = np.abs(coeffs) * np.array([e.alpha for e in encodings])
    alpha = float(weights.sum())
    n_sel = max(1, math.ceil(math.log2(k)))
    n_shared = max(e.m for e in encodings)
    m_min = n_sel + n_shared
    m = max(m_min, sum(e.m for e in encodings))
    n_idle = m - m_min
    amps = np.zeros(1 << n_sel)
    amps[:k] = np.sqrt(weights / alpha)
    V = prepare_unitary(amps)
    signs = np.sign(coeffs)
    eps = float(sum(abs(c) * e.eps for c, e in zip(coeffs, encodings)))

    def select(t, adjoint):
        # t: (idle, sel, hi, lo*dim, K) for each branch
        out = t.copy()
        for i, e in enumerate(encodings):
            hi = 1 << (n_shared - e.m)
            sub = t[:, i].reshape(t.shape[0], hi, (1 << e.m) * dim, -1)
            fn = e.apply_adj if adjoint else e.apply
            res = _on_axes(fn, sub, [2])
            out[:, i] = signs[i] * res.reshape(out[:, i].shape)
        return out

    def run(x, adjoint):
        t = x.reshape(1 << n_idle, 1 << n_sel, (1 << n_shared) * dim, -1)
        # U = V^T SEL V with real V, so U^dag = V^T SEL^dag V
        first, last = V, V.T
        t = np.einsum("ij,ajbk->aibk", first, t)
        t = select(t, adjoint)
        t = np.einsum("ij,ajbk->aibk", last, t)
        return t.reshape(x.shape)

    tally = sum((e.tally for e in encodings), Counter())
    return BlockEncoding(_wrap(lambda x: run(x, False)), _wrap(lambda x: run(x, True)),
                         alpha, m, dim, eps, tally, label)


def be_tensor(e1: BlockEncoding, e2: BlockEncoding, label: str = "tensor") -> BlockEncoding:
    """Encoding of A1 (x) A2: alpha1 alpha2, m1 + m2 ancillas, system (s1, s2)."""
    shape = (1 << e1.m, 1 << e2.m, e1.dim, e2.dim)

    def run(x, adjoint):
        t = x.reshape(shape + (-1,))
        f1 = e1.apply_adj if adjoint else e1.apply
        f2 = e2.apply_adj if adjoint else e2.apply
        t = _on_axes(f1, t, [0, 2])
        t = _on_axes(f2, t, [1, 3])
        return t.reshape(x.shape)

    eps = e1.alpha * e2.eps + e2.alpha * e1.eps
    return BlockEncoding(_wrap(lambda x: run(x, False)), _wrap(lambda x: run(x, True)),
                         e1.alpha * e2.alpha, e1.m + e2.m, e1.dim * e2.dim, eps,
                         e1.tally + e2.tally, label)


def be_multiply(e1: BlockEncoding, e2: BlockEncoding, label: str = "product") -> BlockEncoding:
    """Encoding of A1 A2 with separate ancilla registers (a1, a2)."""
    if e1.dim != e2.dim:
        raise ValueError("incompatible dimensions in product")
    shape = (1 << e1.m, 1 << e2.m, e1.dim)

    def fwd(x):
        t = x.reshape(shape + (-1,))
        t = _on_axes(e2.apply, t, [1, 2])
        t = _on_axes(e1.apply, t, [0, 2])
        return t.reshape(x.shape)

    def adj(x):
        t = x.reshape(shape + (-1,))
        t = _on_axes(e1.apply_adj, t, [0, 2])
        t = _on_axes(e2.apply_adj, t, [1, 2])
        return t.reshape(x.shape)

    eps = e1.alpha * e2.eps + e2.alpha * e1.eps
    return BlockEncoding(_wrap(fwd), _wrap(adj), e1.alpha * e2.alpha, e1.m + e2.m, e1.dim, eps,
                         e1.tally + e2.tally, label)


def be_dagger(e: BlockEncoding) -> BlockEncoding:
    return BlockEncoding(e.apply_adj, e.apply, e.alpha, e.m, e.dim, e.eps, Counter(e.tally), e.label + "^dag")


def be_controlled_diag(e: BlockEncoding, label: str = "ctrl-diag") -> BlockEncoding:
    """Encoding of diag(A, I) = |0><0| (x) A + |1><1| (x) I with alpha = max(alpha_A, 1).

    One extra ancilla carries a rotation that rescales whichever branch has
    the smaller natural scale, so m grows by exactly one.
    """
    alpha = max(e.alpha, 1.0)
    # cosines applied to the extra ancilla on the A branch / identity branch
    cos_a = e.alpha / alpha
    cos_i = 1.0 / alpha
    rot = {}
    for key, c in (("a", cos_a), ("i", cos_i)):
        s = math.sqrt(max(0.0, 1.0 - c * c))
        rot[key] = np.array([[c, -s], [s, c]])
    N = e.dim
    shape = (2, 1 << e.m, 2, N)

    def run(x, adjoint):
        t = x.reshape(shape + (-1,)).copy()
        fn = e.apply_adj if adjoint else e.apply
        ra = rot["a"].T if adjoint else rot["a"]
        ri = rot["i"].T if adjoint else rot["i"]
        a_branch = t[:, :, 0]
        if adjoint:
            a_branch = np.einsum("ij,jabk->iabk", ra, _on_axes(fn, a_branch, [1, 2]))
        else:
            a_branch = _on_axes(fn, np.einsum("ij,jabk->iabk", ra, a_branch), [1, 2])
        t[:, :, 0] = a_branch
        t[:, :, 1] = np.einsum("ij,jabk->iabk", ri, t[:, :, 1])
        return t.reshape(x.shape)

    return BlockEncoding(_wrap(lambda x: run(x, False)), _wrap(lambda x: run(x, True)),
                         alpha, e.m + 1, 2 * N, e.eps, Counter(e.tally), label)


def be_arith(mode: str, inputs: Sequence[BlockEncoding], coefficients=None) -> BlockEncoding:
    """Dispatch on ``mode`` in {add, multiply, tensor, dagger, controlled-diag}."""
    inputs = list(inputs)
    if mode == "add":
        return be_add(inputs, coefficients)
    if mode == "multiply":
        out = inputs[0]
        for e in inputs[1:]:
            out = be_multiply(out, e)
        return out
    if mode == "tensor":
        out = inputs[0]
        for e in inputs[1:]:
            out = be_tensor(out, e)
        return out
    if mode == "dagger":
        (e,) = inputs
        return be_dagger(e)
    if mode == "controlled-diag":
        (e,) = inputs
        return be_controlled_diag(e)
    raise ValueError(f"unknown block-encoding arithmetic mode {mode!r}")


def phase_flip(e: BlockEncoding, index: int = 0) -> BlockEncoding:
    """Negative control: U followed by a -1 phase on basis state ``index``."""

    def fwd(x):
        y = e.apply(x)
        y = np.array(y, copy=True)
        y[index] *= -1
        return y

    def adj(x):
        y = np.array(x, dtype=complex, copy=True)
        y[index] *= -1
        return e.apply_adj(y)

    return BlockEncoding(fwd, adj, e.alpha, e.m, e.dim, e.eps, Counter(e.tally), e.label + "+flip")


def be_laplacian_1d(spec: GridSpec) -> BlockEncoding:
    """Exact encoding of A_h = (2I - S+ - S-)/h^2 with alpha = 4/h^2.

    LCU over {I, S+, S-} with weights (2, -1, -1); S+ uses the one-flag
    projector-times-cyclic-shift construction and S- is its adjoint.
    """
    n = spec.n
    sp = be_shift(n)
    sm = be_dagger(sp)
    sm = BlockEncoding(sm.apply, sm.apply_adj, 1.0, 1, sm.dim, 0.0, Counter(), "S-")
    core = be_add([be_identity(n), sp, sm], [2.0, -1.0, -1.0], label="2I-S+-S-")
    out = core.scaled(1.0 / spec.h**2)
    return BlockEncoding(out.apply, out.apply_adj, out.alpha, out.m, out.dim, 0.0,
                         Counter({"A_h": 1}), "A_h")


def be_laplacian_dd(spec: GridSpec) -> BlockEncoding:
    """Encoding of the Kronecker sum A_{h,d} built from d copies of the 1D encoding."""
    A1 = be_laplacian_1d(spec)
    n = A1.dim
    terms = []
    for k in range(1, spec.d + 1):
        left, right = n ** (spec.d - k), n ** (k - 1)
        term = A1
        if right > 1:
            term = be_tensor(term, be_identity(right))
        if left > 1:
            term = be_tensor(be_identity(left), term)
        terms.append(term)
    if len(terms) == 1:
        return terms[0]
    return be_add(terms, label="A_hd")


def be_diagonal_B(model) -> BlockEncoding:
    """Reflection encoding of B = diag(b_1, ..., b_{N_r}) for a rational model."""
    return be_diagonal(np.asarray(model.poles, dtype=float), label="B", tally_key="B")


def be_Htilde(spec: GridSpec, model) -> BlockEncoding:
    """Encoding of H~ = diag(I (x) A_{h,d} + B (x) I, I) with B = diag(poles).

    The tally records d uses of the 1D Laplacian oracle and one use of the
    diagonal pole oracle.
    """
    poles = np.asarray(getattr(model, "poles", model), dtype=float)
    n_r = poles.size
    if n_r & (n_r - 1):
        raise ValueError("number of poles must be a power of two")
    A = be_laplacian_dd(spec)
    B = be_diagonal(poles, label="B", tally_key="B")
    H = be_add([be_tensor(be_identity(n_r), A), be_tensor(B, be_identity(A.dim))], label="H")
    return be_controlled_diag(H, label="H~")
