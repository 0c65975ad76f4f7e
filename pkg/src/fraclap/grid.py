"""Uniform-grid finite-difference Laplacians on (a, b)^d.

Grid functions are flat vectors over the (M-1)^d interior points in
lexicographic order with x_1 fastest and x_d slowest, i.e. the k-th factor
of the conventional Kronecker placement I^(d-k) (x) A_h (x) I^(k-1).
As a numpy tensor a grid function has shape (M-1,)*d with axis 0 = x_d
and axis d-1 = x_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DENSE_LIMIT",
    "GridFunction",
    "GridSpec",
    "discrete_l2_norm",
    "eigenvalue_sums",
    "laplacian_1d",
    "laplacian_dd",
    "LaplacianOperator",
    "sample_rhs",
    "shift_operators",
    "sine_eigenpairs",
    "sine_matrix",
]

DENSE_LIMIT = 2**12


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with M subintervals per direction on (a, b)^d."""

    a: float = 0.0
    b: float = 1.0
    M: int = 4
    d: int = 1

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("domain requires b > a")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "d", int(self.d))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def n(self) -> int:
        """Interior points per direction, M - 1."""
        return self.M - 1

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def is_qubit_grid(self) -> bool:
        n = self.n
        return n & (n - 1) == 0

    @property
    def n_x(self) -> int:
        """Qubits per direction; requires M - 1 to be a power of two."""
        if not self.is_qubit_grid:
            raise ValueError(f"M - 1 = {self.n} is not a power of two")
        return self.n.bit_length() - 1

    def coordinates(self) -> np.ndarray:
        """Interior nodes a + j h, j = 1..M-1."""
        return self.a + self.h * np.arange(1, self.M)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays [x_1, ..., x_d], each of tensor shape ``self.shape``."""
        x = self.coordinates()
        # axis 0 of the tensor is x_d
        grids = np.meshgrid(*([x] * self.d), indexing="ij")
        return grids[::-1]

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "M": self.M, "d": self.d}


@dataclass(frozen=True)
class GridFunction:
    """Values over the interior nodes of ``spec`` in lexicographic order."""

    values: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            v = v.reshape(-1)
        if v.size != self.spec.size:
            raise ValueError(f"expected {self.spec.size} values, got {v.size}")
        object.__setattr__(self, "values", v)

    def tensor(self) -> np.ndarray:
        return self.values.reshape(self.spec.shape)

    def indices(self) -> np.ndarray:
        """1-based multi-indices (j_1, ..., j_d) per row, matching ``values``."""
        n, d = self.spec.n, self.spec.d
        flat = np.arange(self.spec.size)
        cols = [(flat // n**k) % n + 1 for k in range(d)]
        return np.column_stack(cols)

    def __add__(self, other):
        return GridFunction(self.values + _values(other), self.spec)

    def __sub__(self, other):
        return GridFunction(self.values - _values(other), self.spec)

    def __mul__(self, scalar):
        return GridFunction(self.values * scalar, self.spec)

    __rmul__ = __mul__


def _values(u):
    return u.values if isinstance(u, GridFunction) else np.asarray(u)


def shift_operators(spec: GridSpec) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """S+ (ones on the subdiagonal) and S- = S+^T."""
    n = spec.n
    splus = sp.diags([np.ones(n - 1)], [-1], shape=(n, n), format="csr")
    return splus, splus.T.tocsr()


def laplacian_1d(spec: GridSpec, sparse: bool = False):
    """(1/h^2) tridiag(-1, 2, -1) of size (M-1) x (M-1), i.e. (2I - S+ - S-)/h^2."""
    splus, sminus = shift_operators(spec)
    A = (2.0 * sp.identity(spec.n, format="csr") - splus - sminus) / spec.h**2
    return A.tocsr() if sparse else A.toarray()


class LaplacianOperator:
    """Kronecker-sum Laplacian A_{h,d} = sum_k I^(d-k) (x) A_h (x) I^(k-1).

    ``apply`` works matrix-free on any size; ``dense`` assembles only up to
    ``DENSE_LIMIT`` unknowns.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.A1 = laplacian_1d(spec)

    @property
    def shape(self):
        return (self.spec.size, self.spec.size)

    def apply(self, u):
        spec = self.spec
        x = np.asarray(_values(u))
        batch = x.shape[1:]
        t = x.reshape(spec.shape + batch)
        out = np.zeros_like(t, dtype=np.result_type(t, float))
        for axis in range(spec.d):
            out += np.moveaxis(np.tensordot(self.A1, t, axes=([1], [axis])), 0, axis)
        out = out.reshape(x.shape)
        return GridFunction(out, spec) if isinstance(u, GridFunction) else out

    __matmul__ = apply

    def sparse(self) -> sp.csr_matrix:
        spec = self.spec
        A1 = sp.csr_matrix(self.A1)
        eye = sp.identity(spec.n, format="csr")
        total = sp.csr_matrix(self.shape)
        for k in range(1, spec.d + 1):
            factors = [eye] * (spec.d - k) + [A1] + [eye] * (k - 1)
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f, format="csr")
            total = total + term
        return total.tocsr()

    def dense(self) -> np.ndarray:
        if self.spec.size > DENSE_LIMIT:
            raise OverflowError(
                f"dense assembly limited to {DENSE_LIMIT} unknowns, grid has {self.spec.size}"
            )
        return self.sparse().toarray()


def laplacian_dd(spec: GridSpec) -> LaplacianOperator:
    return LaplacianOperator(spec)


def sine_matrix(M: int) -> np.ndarray:
    """P_jk = sqrt(2/M) sin(pi j k / M), j, k = 1..M-1 (symmetric, orthogonal)."""
    j = np.arange(1, M)
    return math.sqrt(2.0 / M) * np.sin(np.pi * np.outer(j, j) / M)


def sine_eigenpairs(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues d_j = (4/h^2) sin^2(pi j / 2M) and eigenvector matrix P of A_h."""
    j = np.arange(1, spec.M)
    dj = 4.0 / spec.h**2 * np.sin(np.pi * j / (2 * spec.M)) ** 2
    return dj, sine_matrix(spec.M)


def eigenvalue_sums(spec: GridSpec) -> np.ndarray:
    """Spectrum of A_{h,d} as a tensor: entry [j_d, ..., j_1] = d_{j_1} + ... + d_{j_d}."""
    dj, _ = sine_eigenpairs(spec)
    total = np.zeros(spec.shape)
    for axis in range(spec.d):
        shape = [1] * spec.d
        shape[axis] = spec.n
        total = total + dj.reshape(shape)
    return total


def sample_rhs(f, spec: GridSpec) -> GridFunction:
    """Evaluate ``f(x_1, ..., x_d)`` at the interior nodes (boundary excluded)."""
    coords = spec.mesh()
    vals = np.broadcast_to(np.asarray(f(*coords), dtype=float), spec.shape)
    return GridFunction(np.array(vals).reshape(-1), spec)


def discrete_l2_norm(u: GridFunction) -> float:
    """h^(d/2) ||u||_2."""
    spec = u.spec
    return float(spec.h ** (spec.d / 2) * np.linalg.norm(u.values))
