"""Gauge fields, loops, currents, Z2 two-forms, and their basic observables.

Z2-valued forms are stored as bit masks over positively oriented cells (the
value on a negated cell is implied). Loops keep integer coefficients in
{-1,0,1} with zero signed boundary; all mod-2 logic consumes only the cached
support mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Iterable, Sequence

from mpmath import mp, mpf

from .cells import CellComplex
from .errors import SizeRefusal
from . import gf2


def as_mpf(x) -> mpf:
    if isinstance(x, Fraction):
        return mpf(x.numerator) / mpf(x.denominator)
    return mpf(x)


class CouplingParams:
    """Inverse temperature (global or per plaquette) with derived probabilities.

    p1 = 1 - 1/cosh(2b) governs filling even current values above zero,
    p2 = tanh(2b) the high-temperature sprinkle, p3 = 1 - exp(-2b) the
    current-support sprinkle, and p_rc = 1 - exp(-4b) the random cluster
    density. Construction checks 0 < p1 < p2 < p_rc < 1 and 0 < p3 < 1
    whenever beta > 0 (beta = 0 is allowed and makes them all zero).
    """

    def __init__(self, beta):
        if isinstance(beta, (list, tuple)):
            self.beta = tuple(beta)
            self.is_uniform = False
            values = self.beta
        else:
            self.beta = beta
            self.is_uniform = True
            values = (beta,)
        for b in values:
            bm = as_mpf(b)
            if bm < 0:
                raise ValueError(f"beta must be nonnegative, got {b!r}")
            if bm > 0:
                p1, p2, p3, p_rc = _derived_probs(bm)
                if not (0 < p1 < p2 < p_rc < 1 and 0 < p3 < 1):
                    raise ValueError(f"derived probabilities out of order at beta={b!r}")
        if self.is_uniform:
            self.p1, self.p2, self.p3, self.p_rc = _derived_probs(as_mpf(beta))
        else:
            cols = [_derived_probs(as_mpf(b)) for b in self.beta]
            self.p1, self.p2, self.p3, self.p_rc = (
                tuple(c[k] for c in cols) for k in range(4)
            )

    def betas(self, n: int) -> tuple:
        """Per-plaquette coupling constants, broadcast if uniform."""
        if self.is_uniform:
            return (self.beta,) * n
        if len(self.beta) != n:
            raise ValueError(
                f"per-plaquette beta has {len(self.beta)} entries, complex has {n}"
            )
        return self.beta

    def betas_mpf(self, n: int) -> tuple:
        return tuple(as_mpf(b) for b in self.betas(n))

    def require_rational(self) -> tuple[Fraction, ...] | Fraction:
        """Beta as exact rationals, for paths that demand exact arithmetic."""

        def conv(b):
            if isinstance(b, Fraction):
                return b
            if isinstance(b, int):
                return Fraction(b)
            raise ValueError(
                "exact arithmetic requires rational beta (int or Fraction), "
                f"got {b!r}"
            )

        if self.is_uniform:
            return conv(self.beta)
        return tuple(conv(b) for b in self.beta)

    def describe(self) -> str:
        if self.is_uniform:
            return f"beta={self.beta}"
        return f"beta_p={list(map(str, self.beta))}"


def _derived_probs(b: mpf) -> tuple[mpf, mpf, mpf, mpf]:
    return (
        1 - 1 / mp.cosh(2 * b),
        mp.tanh(2 * b),
        1 - mp.e ** (-2 * b),
        1 - mp.e ** (-4 * b),
    )


@dataclass(frozen=True)
class GaugeField:
    """Z2 one-form: bit e is the value on positive edge e."""

    bits: int
    n_edges: int

    @classmethod
    def zero(cls, cx: CellComplex) -> "GaugeField":
        return cls(0, cx.n_edges)

    @classmethod
    def from_bits(cls, cx: CellComplex, bits: int) -> "GaugeField":
        if bits < 0 or bits >> cx.n_edges:
            raise ValueError("gauge field bits out of range")
        return cls(bits, cx.n_edges)

    def flip(self, e: int) -> "GaugeField":
        if not 0 <= e < self.n_edges:
            raise IndexError(f"edge index {e} out of range")
        return GaugeField(self.bits ^ (1 << e), self.n_edges)


@dataclass(frozen=True)
class TwoFormZ2:
    """Z2 two-form / plaquette set: bit p marks positive plaquette p."""

    bits: int
    n_plaquettes: int

    @classmethod
    def zero(cls, cx: CellComplex) -> "TwoFormZ2":
        return cls(0, cx.n_plaquettes)

    @classmethod
    def from_bits(cls, cx: CellComplex, bits: int) -> "TwoFormZ2":
        if bits < 0 or bits >> cx.n_plaquettes:
            raise ValueError("two-form bits out of range")
        return cls(bits, cx.n_plaquettes)

    @classmethod
    def from_plaquettes(cls, cx: CellComplex, plaquettes: Iterable[int]) -> "TwoFormZ2":
        bits = 0
        for p in plaquettes:
            if not 0 <= p < cx.n_plaquettes:
                raise ValueError(f"invalid plaquette index {p}")
            bits |= 1 << p
        return cls(bits, cx.n_plaquettes)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    def plaquettes(self) -> list[int]:
        return [p for p in range(self.n_plaquettes) if (self.bits >> p) & 1]


@dataclass(frozen=True)
class Current:
    """Nonnegative-integer two-form on positive plaquettes."""

    values: tuple[int, ...]

    def __post_init__(self):
        if any(v < 0 for v in self.values):
            raise ValueError("current values must be nonnegative")

    @classmethod
    def zero(cls, cx: CellComplex) -> "Current":
        return cls((0,) * cx.n_plaquettes)

    @classmethod
    def single(cls, cx: CellComplex, p: int, count: int = 1) -> "Current":
        values = [0] * cx.n_plaquettes
        values[p] = count
        return cls(tuple(values))

    @property
    def mass(self) -> int:
        return sum(self.values)

    @property
    def support_mask(self) -> int:
        return sum(1 << p for p, v in enumerate(self.values) if v)

    @property
    def parity_mask(self) -> int:
        return sum(1 << p for p, v in enumerate(self.values) if v & 1)

    def __add__(self, other: "Current") -> "Current":
        if len(self.values) != len(other.values):
            raise ValueError("currents live on different complexes")
        return Current(tuple(a + b for a, b in zip(self.values, other.values)))


@dataclass(frozen=True)
class Loop:
    """1-chain with coefficients in {-1,0,1} and zero signed boundary.

    ``support`` caches the mod-2 support as an edge bit mask; ``rect`` marks
    loops built as axis-parallel rectangles with their (width, height).
    """

    coeffs: tuple[int, ...]
    support: int
    label: str = ""
    rect: tuple[int, int] | None = None

    @property
    def size(self) -> int:
        return self.support.bit_count()

    @property
    def is_empty(self) -> bool:
        return self.support == 0


# -- loop constructors ---------------------------------------------------------


def _signed_boundary_ok(cx: CellComplex, coeffs: Sequence[int]) -> bool:
    acc = [0] * cx.n_vertices
    for e, c in enumerate(coeffs):
        if c:
            acc[cx.edge_head[e]] += c
            acc[cx.edge_tail[e]] -= c
    return all(v == 0 for v in acc)


def empty_loop(cx: CellComplex) -> Loop:
    return Loop((0,) * cx.n_edges, 0, label="empty")


def loop_from_edges(
    cx: CellComplex, entries: Iterable[tuple[int, int]], label: str = ""
) -> Loop:
    coeffs = [0] * cx.n_edges
    for e, c in entries:
        if not 0 <= e < cx.n_edges:
            raise ValueError(f"invalid edge index {e}")
        if c not in (-1, 0, 1):
            raise ValueError(f"loop coefficient must be in {{-1,0,1}}, got {c}")
        if coeffs[e] and c:
            raise ValueError(f"edge {e} listed twice")
        coeffs[e] = c
    if not _signed_boundary_ok(cx, coeffs):
        raise ValueError("edge chain has nonzero boundary; not a loop")
    support = sum(1 << e for e, c in enumerate(coeffs) if c)
    if not label:
        label = "empty" if support == 0 else "edges"
    return Loop(tuple(coeffs), support, label=label)


def plaquette_loop(cx: CellComplex, p: int) -> Loop:
    """The oriented boundary of a single plaquette."""
    if not 0 <= p < cx.n_plaquettes:
        raise IndexError(f"plaquette index {p} out of range")
    coeffs = [0] * cx.n_edges
    for e, s in cx.boundary2[p]:
        coeffs[e] = s
    support = sum(1 << e for e, c in enumerate(coeffs) if c)
    return Loop(tuple(coeffs), support, label=f"plaq:{p}")


def rectangle_loop(
    cx: CellComplex,
    corner: Sequence[int],
    axes: Sequence[int],
    width: int,
    height: int,
) -> Loop:
    """Boundary of a width x height patch of plaquettes.

    The patch spans ``width`` plaquettes along axes[0] and ``height`` along
    axes[1], starting at ``corner``.
    """
    a, b = axes
    corner = tuple(corner)
    if a == b or not (0 <= a < cx.m and 0 <= b < cx.m):
        raise ValueError(f"invalid axis pair {axes}")
    if width < 1 or height < 1:
        raise ValueError("rectangle sides must be >= 1")
    if len(corner) != cx.m:
        raise ValueError(f"corner must have {cx.m} coordinates")
    far = list(corner)
    far[a] += width
    far[b] += height
    inside = all(0 <= corner[i] and far[i] <= cx.extents[i] - 1 for i in range(cx.m)) and all(
        0 <= corner[i] <= cx.extents[i] - 1 for i in range(cx.m)
    )
    if not inside:
        raise ValueError(
            f"rectangle {width}x{height} at {corner} along axes {axes} "
            f"does not fit in extents {cx.extents}"
        )
    pa, pb = min(a, b), max(a, b)
    orient = 1 if (pa, pb) == (a, b) else -1
    coeffs = [0] * cx.n_edges
    for i in range(width):
        for j in range(height):
            base = list(corner)
            base[a] += i
            base[b] += j
            p = cx.plaquette_index[(tuple(base), (pa, pb))]
            for e, s in cx.boundary2[p]:
                coeffs[e] += orient * s
    if any(c not in (-1, 0, 1) for c in coeffs):
        raise AssertionError("rectangle boundary produced non-unit coefficient")
    support = sum(1 << e for e, c in enumerate(coeffs) if c)
    label = f"rect:{corner}:a{a}b{b}:{width}x{height}"
    return Loop(tuple(coeffs), support, label=label, rect=(width, height))


def loop_from_support(cx: CellComplex, support: int, label: str = "") -> Loop:
    """Loop with the given mod-2 support, re-signed so the integer boundary is 0.

    The support must have even incidence at every vertex; coefficients are
    assigned by peeling closed walks (deterministically, smallest edge first).
    """
    if support < 0 or support >> cx.n_edges:
        raise ValueError("support mask out of range")
    coeffs = [0] * cx.n_edges
    incident: dict[int, list[int]] = {}
    unused = set()
    for e in range(cx.n_edges):
        if (support >> e) & 1:
            unused.add(e)
            incident.setdefault(cx.edge_tail[e], []).append(e)
            incident.setdefault(cx.edge_head[e], []).append(e)
    if any(len(es) % 2 for es in incident.values()):
        raise ValueError("support has odd incidence at a vertex; not a cycle")
    for es in incident.values():
        es.sort()
    while unused:
        start = min(unused)
        v0 = cx.edge_tail[start]
        v = v0
        while True:
            e = next(e for e in incident[v] if e in unused)
            unused.remove(e)
            if v == cx.edge_tail[e]:
                coeffs[e] = 1
                v = cx.edge_head[e]
            else:
                coeffs[e] = -1
                v = cx.edge_tail[e]
            if v == v0:
                break
    return Loop(tuple(coeffs), support, label=label or "mod2")


def concat_loops(cx: CellComplex, g1: Loop, g2: Loop) -> Loop:
    """Concatenation: coefficient addition followed by mod-2 reduction."""
    label = f"({g1.label})+({g2.label})"
    return loop_from_support(cx, g1.support ^ g2.support, label=label)


# -- observables and predicates --------------------------------------------------


def holonomy(cx: CellComplex, sigma: GaugeField, p: int) -> int:
    """Sign of the field summed around plaquette p: +1 flat, -1 frustrated."""
    if not 0 <= p < cx.n_plaquettes:
        raise IndexError(f"plaquette index {p} out of range")
    return 1 - 2 * ((sigma.bits & cx.plaq_edge_mask[p]).bit_count() & 1)


def frustrated_mask(cx: CellComplex, bits: int) -> int:
    """Bit mask of plaquettes with odd field sum (holonomy -1)."""
    out = 0
    for p, mask in enumerate(cx.plaq_edge_mask):
        out |= ((bits & mask).bit_count() & 1) << p
    return out


def action(cx: CellComplex, sigma: GaugeField) -> int:
    """Wilson action: -2 * sum of plaquette holonomies over positive plaquettes.

    The factor 2 accounts for both orientations of each plaquette.
    """
    k = frustrated_mask(cx, sigma.bits).bit_count()
    return -2 * (cx.n_plaquettes - 2 * k)


def wilson(cx: CellComplex, sigma: GaugeField, gamma: Loop) -> int:
    """Wilson loop variable: product of edge signs along the loop support."""
    if gamma.support >> cx.n_edges:
        raise ValueError("loop support not contained in this complex")
    return 1 - 2 * ((sigma.bits & gamma.support).bit_count() & 1)


def gradient_field(cx: CellComplex, vertex_bits: int) -> GaugeField:
    """The discrete gradient of a Z2 vertex function (a pure gauge field)."""
    bits = 0
    for e in range(cx.n_edges):
        t = (vertex_bits >> cx.edge_tail[e]) & 1
        h = (vertex_bits >> cx.edge_head[e]) & 1
        bits |= (t ^ h) << e
    return GaugeField(bits, cx.n_edges)


def current_source_mask(cx: CellComplex, parity_mask: int) -> int:
    """Edge mask where the incident odd-plaquette count is odd."""
    out = 0
    for e, mask in enumerate(cx.edge_plaq_mask):
        out |= ((parity_mask & mask).bit_count() & 1) << e
    return out


def is_source(cx: CellComplex, n: Current, gamma: Loop) -> bool:
    """True iff gamma(e) + sum of n over plaquettes at e is even at every edge."""
    return current_source_mask(cx, n.parity_mask) == gamma.support


def has_subcurrent(cx: CellComplex, n: Current, gamma: Loop) -> bool:
    """True iff some q <= n has source gamma.

    Any parity pattern on supp(n) is realized by a 0/1 subcurrent, so this is
    feasibility of the mod-2 source system restricted to supp(n).
    """
    sol = gf2.solve_affine_restricted(
        cx.edge_plaq_mask, cx.n_plaquettes, n.support_mask, gamma.support
    )
    return sol.feasible


def current_weight(n: Current, params: CouplingParams) -> mpf:
    """Product over plaquettes of (2 beta_p)^n(p) / n(p)!, in log space."""
    betas = params.betas(len(n.values))
    total = mpf(0)
    for v, b in zip(n.values, betas):
        if v:
            bm = as_mpf(b)
            if bm == 0:
                return mpf(0)
            total += v * mp.log(2 * bm) - mp.log(factorial(v))
    return mp.e**total


def current_weight_exact(n: Current, params: CouplingParams) -> Fraction:
    """Exact rational current weight; requires rational beta."""
    params.require_rational()
    betas = params.betas(len(n.values))
    w = Fraction(1)
    for v, b in zip(n.values, betas):
        if v:
            w *= Fraction(2 * Fraction(b)) ** v / factorial(v)
    return w


def set_boundary(cx: CellComplex, plaq_set: TwoFormZ2) -> Loop:
    """Mod-2 boundary of a plaquette set, as a loop with {0,1} support."""
    acc = 0
    for p in plaq_set.plaquettes():
        acc ^= cx.plaq_edge_mask[p]
    return loop_from_support(cx, acc, label="boundary")


def area(
    cx: CellComplex,
    gamma: Loop,
    budget: int = 22,
    rect_fast_path: bool = True,
) -> int:
    """Minimal total mass of a current with source gamma.

    Equals the minimum support size over Z2 solutions of the source system,
    found by exhausting the kernel coset. ``budget`` caps the coset dimension
    (the search visits 2**dim solutions). Rectangle loops take the documented
    width*height fast path unless disabled.
    """
    if gamma.support >> cx.n_edges:
        raise ValueError("loop support not contained in this complex")
    if rect_fast_path and gamma.rect is not None:
        return gamma.rect[0] * gamma.rect[1]
    mat = gf2.BitMatrix.from_rows(cx.edge_plaq_mask, cx.n_plaquettes)
    sol = gf2.solve_affine(mat, gamma.support)
    if not sol.feasible:
        raise ValueError("loop bounds no surface inside this complex")
    if sol.kernel_dim > budget:
        raise SizeRefusal(
            f"coset dimension {sol.kernel_dim} exceeds search budget {budget}"
        )
    best = sol.particular.bit_count()
    x = sol.particular
    n = sol.kernel_dim
    for i in range(1, 1 << n):
        x ^= sol.kernel[(i & -i).bit_length() - 1]
        w = x.bit_count()
        if w < best:
            best = w
    return best
