"""Dense bit-packed linear algebra over GF(2).

Rows are Python ints used as bit vectors (bit j = column j), so elimination
is word-level XOR. Pivoting is deterministic (first set bit, columns in
increasing order), which makes kernel bases reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cells import CellComplex


@dataclass(frozen=True)
class BitMatrix:
    """A rows x cols matrix over GF(2) with bit-packed rows."""

    rows: tuple[int, ...]
    ncols: int

    def __post_init__(self):
        limit = 1 << self.ncols
        if any(r < 0 or r >= limit for r in self.rows):
            raise ValueError("row has bits outside the declared column range")

    @classmethod
    def from_rows(cls, rows: Iterable[int], ncols: int) -> "BitMatrix":
        return cls(tuple(rows), ncols)

    @classmethod
    def from_dense(cls, dense: Iterable[Iterable[int]], ncols: int | None = None) -> "BitMatrix":
        rows = []
        width = ncols
        for dr in dense:
            bits = list(dr)
            if width is None:
                width = len(bits)
            elif len(bits) != width:
                raise ValueError("ragged dense input")
            rows.append(sum((int(b) & 1) << j for j, b in enumerate(bits)))
        return cls(tuple(rows), width or 0)

    @property
    def nrows(self) -> int:
        return len(self.rows)

    def matvec(self, x: int) -> int:
        """Bit i of the result is the parity of row_i & x."""
        out = 0
        for i, r in enumerate(self.rows):
            out |= ((r & x).bit_count() & 1) << i
        return out


def rref(rows: Sequence[int], ncols: int) -> tuple[list[int], list[int]]:
    """Reduced row echelon form. Returns (pivot columns, reduced rows).

    Reduced rows are returned pivot-first with zero rows dropped; reducing an
    already reduced matrix reproduces it.
    """
    work = [r for r in rows if r]
    pivots: list[int] = []
    reduced: list[int] = []
    for col in range(ncols):
        bit = 1 << col
        pivot_row = None
        for i, r in enumerate(work):
            if r & bit:
                pivot_row = work.pop(i)
                break
        if pivot_row is None:
            continue
        reduced = [r ^ pivot_row if r & bit else r for r in reduced]
        work = [r ^ pivot_row if r & bit else r for r in work]
        work = [r for r in work if r]
        reduced.append(pivot_row)
        pivots.append(col)
        if not work:
            break
    return pivots, reduced


def rank(rows: Sequence[int], ncols: int) -> int:
    return len(rref(rows, ncols)[0])


@dataclass
class AffineSolutionSet:
    """All solutions of A x = b over GF(2): particular + span(kernel basis).

    ``feasible`` is a value, not an error: callers routinely branch on it.
    The solution count is 2**len(kernel).
    """

    ncols: int
    feasible: bool
    particular: int | None
    kernel: tuple[int, ...] = field(default_factory=tuple)

    @property
    def kernel_dim(self) -> int:
        return len(self.kernel)

    @property
    def count(self) -> int:
        return (1 << self.kernel_dim) if self.feasible else 0

    def solutions(self):
        """Iterate every solution (use only when 2**kernel_dim is small)."""
        if not self.feasible:
            return
        for bits in range(1 << self.kernel_dim):
            x = self.particular
            rem = bits
            i = 0
            while rem:
                if rem & 1:
                    x ^= self.kernel[i]
                rem >>= 1
                i += 1
            yield x


def solve_affine(a: BitMatrix, b: int) -> AffineSolutionSet:
    """Solve A x = b, where bit i of b is the right-hand side of row i."""
    if b < 0 or b >> a.nrows:
        raise ValueError("right-hand side has bits outside the row range")
    aug_col = 1 << a.ncols
    aug = [a.rows[i] | (aug_col if (b >> i) & 1 else 0) for i in range(a.nrows)]
    pivots, reduced = rref(aug, a.ncols + 1)
    if a.ncols in pivots:
        return AffineSolutionSet(a.ncols, False, None)
    particular = 0
    row_of_pivot = dict(zip(pivots, reduced))
    for col, row in row_of_pivot.items():
        if row & aug_col:
            particular |= 1 << col
    pivot_set = set(pivots)
    kernel = []
    for free in range(a.ncols):
        if free in pivot_set:
            continue
        vec = 1 << free
        for col, row in row_of_pivot.items():
            if (row >> free) & 1:
                vec |= 1 << col
        kernel.append(vec)
    return AffineSolutionSet(a.ncols, True, particular, tuple(kernel))


def solve_affine_restricted(
    rows: Sequence[int], ncols: int, col_mask: int, b: int
) -> AffineSolutionSet:
    """Solve A x = b with x supported on the columns selected by col_mask.

    The returned particular solution and kernel vectors are expressed in the
    original column space (bits outside col_mask are zero), so solutions are
    subsets of col_mask by construction.
    """
    cols = [j for j in range(ncols) if (col_mask >> j) & 1]
    sub_rows = []
    for r in rows:
        sub = 0
        for jj, j in enumerate(cols):
            if (r >> j) & 1:
                sub |= 1 << jj
        sub_rows.append(sub)
    sol = solve_affine(BitMatrix.from_rows(sub_rows, len(cols)), b)
    if not sol.feasible:
        return AffineSolutionSet(ncols, False, None)

    def expand(x: int) -> int:
        out = 0
        for jj, j in enumerate(cols):
            if (x >> jj) & 1:
                out |= 1 << j
        return out

    return AffineSolutionSet(
        ncols, True, expand(sol.particular), tuple(expand(v) for v in sol.kernel)
    )


def uniform_solution(s: AffineSolutionSet, rng: np.random.Generator) -> int:
    """Draw uniformly from the solution set: each solution has mass 2**-kernel_dim."""
    if not s.feasible:
        raise ValueError("cannot sample from an infeasible solution set")
    x = s.particular
    if s.kernel:
        coins = rng.integers(0, 2, size=len(s.kernel))
        for v, c in zip(s.kernel, coins):
            if c:
                x ^= v
    return x


def betti_b1(cx: CellComplex, plaquettes: Iterable[int] | int) -> int:
    """First Betti number of a plaquette set P over GF(2).

    Defined by 2**b1(P) = #{gauge fields sigma with d sigma(p) = 0 for all
    p in P}, which equals |edges| - rank of the flatness constraints.
    """
    if isinstance(plaquettes, int):
        mask = plaquettes
        if mask < 0 or mask >> cx.n_plaquettes:
            raise ValueError("plaquette mask out of range")
        idxs = [p for p in range(cx.n_plaquettes) if (mask >> p) & 1]
    else:
        idxs = list(plaquettes)
        for p in idxs:
            if not 0 <= p < cx.n_plaquettes:
                raise ValueError(f"invalid plaquette index {p}")
    rows = [cx.plaq_edge_mask[p] for p in idxs]
    return cx.n_edges - rank(rows, cx.n_edges)
