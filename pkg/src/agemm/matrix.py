"""Dense column-major matrices, the reference multiplication, flop counts.

The reference product fixes the arithmetic contract the whole library is
measured against: per element, products A(i,p)*B(p,j) are summed in
ascending p with one multiply-add per step, and the result is
``beta*C(i,j) + alpha*sum``.  Every other driver reproduces this exact
operation order, so equality tests can compare bit patterns.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConformabilityError
from . import kernels


@dataclass(frozen=True)
class GemmProblem:
    """Dimensions and scalars of C' = beta*C + alpha*A*B."""

    m: int
    n: int
    k: int
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ConformabilityError(
                f"problem dimensions must be >= 1, got ({self.m}, {self.n}, {self.k})")


class Matrix:
    """Column-major float64 matrix with an explicit leading dimension.

    ``data`` is the flat backing array; element (i, j) lives at
    ``data[i + j*leading_dimension]``.
    """

    __slots__ = ("rows", "cols", "leading_dimension", "data")

    def __init__(self, rows, cols, data, leading_dimension=None):
        ld = rows if leading_dimension is None else leading_dimension
        if rows < 0 or cols < 0:
            raise ValueError("negative matrix dimensions")
        if ld < rows:
            raise ValueError(f"leading dimension {ld} < rows {rows}")
        data = np.ascontiguousarray(data, dtype=np.float64).ravel()
        if data.size < ld * cols:
            raise ValueError(
                f"data holds {data.size} values, need at least {ld * cols}")
        self.rows = rows
        self.cols = cols
        self.leading_dimension = ld
        self.data = data

    @classmethod
    def zeros(cls, rows, cols, leading_dimension=None):
        ld = rows if leading_dimension is None else leading_dimension
        return cls(rows, cols, np.zeros(ld * cols), ld)

    @classmethod
    def from_2d(cls, array, leading_dimension=None):
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        rows, cols = arr.shape
        ld = rows if leading_dimension is None else leading_dimension
        if ld < rows:
            raise ValueError(f"leading dimension {ld} < rows {rows}")
        data = np.zeros(ld * cols)
        flat = data.reshape(cols, ld).T
        flat[:rows, :] = arr
        return cls(rows, cols, data, ld)

    @classmethod
    def random(cls, rows, cols, rng, leading_dimension=None, scale=1.0):
        return cls.from_2d(rng.standard_normal((rows, cols)) * scale,
                           leading_dimension)

    def as_2d(self):
        """Strided (rows, cols) view into the backing array; no copy."""
        ld = self.leading_dimension
        return self.data[: ld * self.cols].reshape(self.cols, ld).T[: self.rows, :]

    def copy(self):
        return Matrix(self.rows, self.cols, self.data.copy(), self.leading_dimension)

    def bitwise_equal(self, other):
        """True iff shapes match and all elements share one bit pattern."""
        if (self.rows, self.cols) != (other.rows, other.cols):
            return False
        a = np.ascontiguousarray(self.as_2d()).view(np.uint64)
        b = np.ascontiguousarray(other.as_2d()).view(np.uint64)
        return bool(np.array_equal(a, b))

    def __repr__(self):
        return (f"Matrix({self.rows}x{self.cols}, "
                f"ld={self.leading_dimension})")


def check_conformable(problem, a, b, c):
    """Raise unless A is m*k, B is k*n and C is m*n."""
    bad = []
    if (a.rows, a.cols) != (problem.m, problem.k):
        bad.append(f"A is {a.rows}x{a.cols}, need {problem.m}x{problem.k}")
    if (b.rows, b.cols) != (problem.k, problem.n):
        bad.append(f"B is {b.rows}x{b.cols}, need {problem.k}x{problem.n}")
    if (c.rows, c.cols) != (problem.m, problem.n):
        bad.append(f"C is {c.rows}x{c.cols}, need {problem.m}x{problem.n}")
    if bad:
        raise ConformabilityError("; ".join(bad))


def gemm_reference(problem, a, b, c):
    """Oracle product: triple loop, ascending-p accumulation per element.

    Returns a fresh matrix; the operands are never written.
    """
    check_conformable(problem, a, b, c)
    out = Matrix.zeros(problem.m, problem.n)
    kernels.reference_gemm(
        a.data, a.leading_dimension,
        b.data, b.leading_dimension,
        c.data, c.leading_dimension,
        out.data, out.leading_dimension,
        problem.m, problem.n, problem.k,
        float(problem.alpha), float(problem.beta))
    return out


def flop_count(problem):
    """Arithmetic operations in the product: 2*m*n*k (one mul + one add each)."""
    return 2 * problem.m * problem.n * problem.k


def save_matrix(mat, path):
    """Text format: header "rows cols", then one column per line.

    Values use shortest round-trip decimal form, so load_matrix restores
    the exact bit patterns.
    """
    view = mat.as_2d()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mat.rows} {mat.cols}\n")
        for j in range(mat.cols):
            fh.write(" ".join(repr(float(v)) for v in view[:, j]))
            fh.write("\n")


def load_matrix(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("matrix file must start with a 'rows cols' header")
        rows, cols = int(header[0]), int(header[1])
        out = Matrix.zeros(rows, cols)
        view = out.as_2d()
        for j in range(cols):
            line = fh.readline()
            if not line:
                raise ValueError(f"expected {cols} column lines, file ended at {j}")
            values = line.split()
            if len(values) != rows:
                raise ValueError(f"column {j} has {len(values)} values, expected {rows}")
            for i, tok in enumerate(values):
                view[i, j] = float(tok)
    return out
