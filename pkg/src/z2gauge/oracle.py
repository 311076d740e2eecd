"""Exact desk-scale oracles for the gauge measure and its expansions.

Partition functions are exact integer Laurent polynomials in y = exp(2*beta),
so a single gauge-field enumeration serves every temperature and derivative
checks are polynomial calculus. Sums over currents are evaluated through the
per-plaquette parity split of the exponential series (cosh/sinh factors), and
measure tables over small state spaces are compared by total variation.

Everything here refuses (raises SizeRefusal) rather than approximates when an
enumeration would exceed its cap.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

from mpmath import mp, mpf

from . import gf2
from .cells import CellComplex, bfs_spanning_tree
from .errors import SizeRefusal
from .forms import (
    CouplingParams,
    Current,
    Loop,
    as_mpf,
    current_source_mask,
    has_subcurrent,
)

TOL = mpf("1e-10")


class LaurentPoly:
    """Integer-coefficient Laurent polynomial (exponents may be negative)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict[int, int] | None = None):
        self.coeffs = {e: c for e, c in (coeffs or {}).items() if c}

    @classmethod
    def constant(cls, c: int) -> "LaurentPoly":
        return cls({0: c})

    def __eq__(self, other) -> bool:
        return isinstance(other, LaurentPoly) and self.coeffs == other.coeffs

    def __add__(self, other: "LaurentPoly") -> "LaurentPoly":
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return LaurentPoly(out)

    def __sub__(self, other: "LaurentPoly") -> "LaurentPoly":
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) - c
        return LaurentPoly(out)

    def __mul__(self, other) -> "LaurentPoly":
        if isinstance(other, int):
            return LaurentPoly({e: c * other for e, c in self.coeffs.items()})
        out: dict[int, int] = defaultdict(int)
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                out[e1 + e2] += c1 * c2
        return LaurentPoly(out)

    __rmul__ = __mul__

    def derivative(self) -> "LaurentPoly":
        return LaurentPoly({e - 1: e * c for e, c in self.coeffs.items() if e})

    def eval_mpf(self, y: mpf) -> mpf:
        return sum((c * y**e for e, c in sorted(self.coeffs.items())), mpf(0))

    def eval_exact(self, y: Fraction) -> Fraction:
        return sum(
            (c * Fraction(y) ** e for e, c in sorted(self.coeffs.items())),
            Fraction(0),
        )

    def is_zero(self) -> bool:
        return not self.coeffs

    def __repr__(self) -> str:
        if not self.coeffs:
            return "LaurentPoly(0)"
        terms = " + ".join(f"{c}*y^{e}" for e, c in sorted(self.coeffs.items()))
        return f"LaurentPoly({terms})"


class MeasureTable:
    """Exact finite distribution over bit-mask configurations."""

    def __init__(self, kind: str, n_bits: int, entries: dict[int, mpf], gamma_support: int | None = None):
        if any(v < 0 for v in entries.values()):
            raise ValueError(f"measure table for {kind!r} has negative mass")
        total = sum(entries.values(), mpf(0))
        if not total > 0:
            raise ValueError(f"measure table for {kind!r} has no mass")
        self.kind = kind
        self.n_bits = n_bits
        self.gamma_support = gamma_support
        self.entries = {k: v / total for k, v in entries.items() if v != 0}
        if abs(sum(self.entries.values(), mpf(0)) - 1) > mpf("1e-12"):
            raise AssertionError("normalized table does not sum to 1")

    def prob(self, mask: int) -> mpf:
        return self.entries.get(mask, mpf(0))

    def tv(self, other: "MeasureTable") -> mpf:
        keys = set(self.entries) | set(other.entries)
        return sum((abs(self.prob(k) - other.prob(k)) for k in keys), mpf(0)) / 2

    def event_prob(self, required_mask: int) -> mpf:
        """Probability that every bit of required_mask is present."""
        return sum(
            (p for k, p in self.entries.items() if k & required_mask == required_mask),
            mpf(0),
        )

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Report:
    """Structured verification record."""

    check: str
    complex: str
    gamma: str
    params: str
    lhs: object
    rhs: object
    metric: str
    value: object
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def conv(x):
            if isinstance(x, Fraction):
                return str(x)
            if isinstance(x, mpf):
                return float(x)
            return x

        return {
            "check": self.check,
            "complex": self.complex,
            "gamma": self.gamma,
            "params": self.params,
            "lhs": conv(self.lhs),
            "rhs": conv(self.rhs),
            "metric": self.metric,
            "value": conv(self.value),
            "pass": self.passed,
            **{k: conv(v) for k, v in self.details.items()},
        }


# -- shared enumeration helpers --------------------------------------------------


def _gray_flip_index(i: int) -> int:
    return (i & -i).bit_length() - 1


def _params_key(params: CouplingParams):
    return params.beta if params.is_uniform else ("per",) + tuple(params.beta)


def _source_system(cx: CellComplex) -> gf2.BitMatrix:
    key = "source_system"
    if key not in cx._memo:
        cx._memo[key] = gf2.BitMatrix.from_rows(cx.edge_plaq_mask, cx.n_plaquettes)
    return cx._memo[key]


def _ht_coset(cx: CellComplex, gamma: Loop) -> gf2.AffineSolutionSet:
    """Solution set of `two-form has mod-2 source gamma` over all plaquettes."""
    key = ("ht_coset", gamma.support)
    if key not in cx._memo:
        cx._memo[key] = gf2.solve_affine(_source_system(cx), gamma.support)
    return cx._memo[key]


def _check_loop(cx: CellComplex, gamma: Loop) -> None:
    if gamma.support >> cx.n_edges:
        raise ValueError("loop support not contained in this complex")


# -- partition functions -----------------------------------------------------------


def exact_Z(
    cx: CellComplex, gamma: Loop, gauge_fix: bool = False, max_bits: int = 28
) -> LaurentPoly:
    """Signed enumeration of gauge fields as a Laurent polynomial in y = exp(2b).

    With ``gauge_fix`` the field is pinned to zero on a breadth-first spanning
    tree, shrinking the enumeration by the factor 2**(vertices - 1); the
    returned polynomial is the full one divided by that factor.
    """
    _check_loop(cx, gamma)
    if gauge_fix:
        tree = set(bfs_spanning_tree(cx))
        free = [e for e in range(cx.n_edges) if e not in tree]
    else:
        free = list(range(cx.n_edges))
    if len(free) > max_bits:
        raise SizeRefusal(
            f"enumeration over {len(free)} edge bits exceeds cap {max_bits}"
        )
    key = ("exact_Z", gamma.support, gauge_fix)
    if key in cx._memo:
        return cx._memo[key]
    n_plaq = cx.n_plaquettes
    flip_flux = [cx.edge_plaq_mask[e] for e in free]
    flip_gamma = [(gamma.support >> e) & 1 for e in free]
    coeffs: dict[int, int] = defaultdict(int)
    flux = 0
    sign = 1
    coeffs[n_plaq] += 1
    for i in range(1, 1 << len(free)):
        b = _gray_flip_index(i)
        flux ^= flip_flux[b]
        if flip_gamma[b]:
            sign = -sign
        coeffs[n_plaq - 2 * flux.bit_count()] += sign
    poly = LaurentPoly(coeffs)
    cx._memo[key] = poly
    return poly


def exact_Z_full(cx: CellComplex, gamma: Loop, max_bits: int = 28) -> LaurentPoly:
    """Full partition function, using gauge fixing automatically when needed."""
    if cx.n_edges <= max_bits:
        return exact_Z(cx, gamma, gauge_fix=False, max_bits=max_bits)
    reduced = cx.n_edges - (cx.n_vertices - 1)
    if reduced <= max_bits:
        return exact_Z(cx, gamma, gauge_fix=True, max_bits=max_bits) * (
            1 << (cx.n_vertices - 1)
        )
    raise SizeRefusal(
        f"{cx.n_edges} edges ({reduced} after gauge fixing) exceed cap {max_bits}"
    )


def exact_Z_value(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int = 28
) -> mpf:
    """Full partition function evaluated numerically; supports per-plaquette beta."""
    _check_loop(cx, gamma)
    gauge_fix = cx.n_edges > max_bits
    if gauge_fix:
        tree = set(bfs_spanning_tree(cx))
        free = [e for e in range(cx.n_edges) if e not in tree]
        if len(free) > max_bits:
            raise SizeRefusal(
                f"enumeration over {len(free)} edge bits exceeds cap {max_bits}"
            )
    else:
        free = list(range(cx.n_edges))
    betas = params.betas_mpf(cx.n_plaquettes)
    down = [mp.e ** (-4 * b) for b in betas]  # flat -> frustrated factor
    up = [mp.e ** (4 * b) for b in betas]
    val = mpf(1)
    for b in betas:
        val *= mp.e ** (2 * b)
    total = val
    flux = 0
    sign = 1
    flip_flux = [cx.edge_plaq_mask[e] for e in free]
    flip_gamma = [(gamma.support >> e) & 1 for e in free]
    for i in range(1, 1 << len(free)):
        b = _gray_flip_index(i)
        mask = flip_flux[b]
        new_flux = flux ^ mask
        changed = mask
        while changed:
            p = (changed & -changed).bit_length() - 1
            val *= down[p] if (new_flux >> p) & 1 else up[p]
            changed &= changed - 1
        flux = new_flux
        if flip_gamma[b]:
            sign = -sign
        total += sign * val
    if gauge_fix:
        total *= 1 << (cx.n_vertices - 1)
    return total


def wilson_expectation_exact(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int = 28
) -> mpf:
    """Exact E[W_gamma] = Z[gamma]/Z[0] by enumeration."""
    if params.is_uniform:
        y = mp.e ** (2 * as_mpf(params.beta))
        num = exact_Z_full(cx, gamma, max_bits).eval_mpf(y)
        den = exact_Z_full(cx, _zero_like(cx, gamma), max_bits).eval_mpf(y)
        return num / den
    num = exact_Z_value(cx, gamma, params, max_bits)
    den = exact_Z_value(cx, _zero_like(cx, gamma), params, max_bits)
    return num / den


def _zero_like(cx: CellComplex, gamma: Loop) -> Loop:
    return Loop((0,) * cx.n_edges, 0, label="empty")


# -- expansion sums -----------------------------------------------------------------


def ht_sum(cx: CellComplex, gamma: Loop, max_kernel_dim: int = 24) -> LaurentPoly:
    """High-temperature sum over two-forms with source gamma, as a polynomial in t.

    Coefficient of t^k counts solutions with support size k; an infeasible
    boundary yields the zero polynomial.
    """
    _check_loop(cx, gamma)
    sol = _ht_coset(cx, gamma)
    if not sol.feasible:
        return LaurentPoly({})
    if sol.kernel_dim > max_kernel_dim:
        raise SizeRefusal(
            f"coset dimension {sol.kernel_dim} exceeds cap {max_kernel_dim}"
        )
    coeffs: dict[int, int] = defaultdict(int)
    x = sol.particular
    coeffs[x.bit_count()] += 1
    for i in range(1, 1 << sol.kernel_dim):
        x ^= sol.kernel[_gray_flip_index(i)]
        coeffs[x.bit_count()] += 1
    return LaurentPoly(coeffs)


def current_sum_factorized(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_kernel_dim: int = 24
) -> mpf:
    """Sum of weights over all currents with source gamma.

    Grouped by parity class: each class omega contributes the product of
    sinh(2b_p) on omega and cosh(2b_p) off omega, by the parity split of the
    exponential series. Infeasible gamma gives 0 (the empty sum).
    """
    _check_loop(cx, gamma)
    sol = _ht_coset(cx, gamma)
    if not sol.feasible:
        return mpf(0)
    if sol.kernel_dim > max_kernel_dim:
        raise SizeRefusal(
            f"coset dimension {sol.kernel_dim} exceeds cap {max_kernel_dim}"
        )
    betas = params.betas_mpf(cx.n_plaquettes)
    cosh_all = mpf(1)
    for b in betas:
        cosh_all *= mp.cosh(2 * b)
    ratio = [mp.tanh(2 * b) for b in betas]

    def class_value(mask: int) -> mpf:
        v = cosh_all
        while mask:
            p = (mask & -mask).bit_length() - 1
            v *= ratio[p]
            mask &= mask - 1
        return v

    x = sol.particular
    total = class_value(x)
    for i in range(1, 1 << sol.kernel_dim):
        x ^= sol.kernel[_gray_flip_index(i)]
        total += class_value(x)
    return total


def enumerate_currents(n_slots: int, max_total: int):
    """All nonnegative integer tuples of length n_slots with sum <= max_total."""
    values = [0] * n_slots

    def rec(i: int, budget: int):
        if i == n_slots:
            yield tuple(values)
            return
        for v in range(budget + 1):
            values[i] = v
            yield from rec(i + 1, budget - v)
        values[i] = 0

    yield from rec(0, max_total)


def current_sum_truncated(
    cx: CellComplex,
    gamma: Loop,
    params: CouplingParams,
    K: int,
    max_terms: int = 2_000_000,
) -> tuple[mpf, mpf]:
    """Direct enumeration of currents with total mass <= K, plus a tail bound.

    The tail bound is the crude majorant sum_{j>K} x^j / j! with
    x = 2 * max(beta_p) * #plaquettes, valid because the number of currents of
    mass j times their largest weight is at most x^j / j! (multinomial bound).
    """
    _check_loop(cx, gamma)
    n_terms = comb(K + cx.n_plaquettes, cx.n_plaquettes)
    if n_terms > max_terms:
        raise SizeRefusal(f"{n_terms} currents of mass <= {K} exceed cap {max_terms}")
    betas = params.betas_mpf(cx.n_plaquettes)
    log2b = [mp.log(2 * b) for b in betas]
    partial = mpf(0)
    for values in enumerate_currents(cx.n_plaquettes, K):
        parity = sum(1 << p for p, v in enumerate(values) if v & 1)
        if current_source_mask(cx, parity) != gamma.support:
            continue
        logw = mpf(0)
        for p, v in enumerate(values):
            if v:
                logw += v * log2b[p] - mp.log(mp.factorial(v))
        partial += mp.e**logw
    x = 2 * max(betas) * cx.n_plaquettes
    head = sum((x**j / mp.factorial(j) for j in range(K + 1)), mpf(0))
    tail = mp.e**x - head
    return partial, tail


# -- identity verifiers --------------------------------------------------------------


def verify_current_expansion(
    cx: CellComplex, gamma: Loop, params: CouplingParams, tol: mpf = TOL
) -> Report:
    """Check Z[gamma] against 2**edges times the factorized current sum."""
    if params.is_uniform:
        y = mp.e ** (2 * as_mpf(params.beta))
        lhs = exact_Z_full(cx, gamma).eval_mpf(y)
    else:
        lhs = exact_Z_value(cx, gamma, params)
    rhs = mpf(2) ** cx.n_edges * current_sum_factorized(cx, gamma, params)
    err = abs(lhs - rhs)
    bound = tol * max(mpf(1), abs(lhs))
    return Report(
        check="current-expansion",
        complex=cx.describe(),
        gamma=gamma.label,
        params=params.describe(),
        lhs=lhs,
        rhs=rhs,
        metric="abs-error",
        value=err,
        passed=bool(err <= bound),
        details={"tolerance": bound},
    )


def switching_functional(name: str, p0: int | None = None):
    """Functional menu for the switching verifier."""
    if name in ("one", "const1", "1"):
        return lambda values: 1
    if name in ("mass", "total-mass"):
        return lambda values: sum(values)
    if name in ("occupied", "indicator"):
        if p0 is None:
            raise ValueError("the occupation indicator needs a plaquette index")
        return lambda values: 1 if values[p0] > 0 else 0
    raise ValueError(f"unknown switching functional {name!r}")


def verify_switching(
    cx: CellComplex,
    gamma1: Loop,
    gamma2: Loop,
    functional,
    K: int,
    params: CouplingParams,
    max_terms: int = 200_000,
) -> Report:
    """Exact check of the source-switching identity, truncated by total mass.

    Both sides restrict to pairs with mass(n1) + mass(n2) <= K; the identity
    holds termwise in n1 + n2, so the truncated equality must be exact. All
    arithmetic is rational (beta must be rational).
    """
    _check_loop(cx, gamma1)
    _check_loop(cx, gamma2)
    if isinstance(functional, str):
        functional = switching_functional(functional)
    params.require_rational()
    rational = [Fraction(b) for b in params.betas(cx.n_plaquettes)]
    n_terms = comb(K + cx.n_plaquettes, cx.n_plaquettes)
    if n_terms * n_terms > max_terms * 50:
        raise SizeRefusal(
            f"about {n_terms}^2 current pairs of mass <= {K} exceed the cap"
        )

    items = []  # (values, mass, source mask, exact weight)
    for values in enumerate_currents(cx.n_plaquettes, K):
        mass = sum(values)
        parity = sum(1 << p for p, v in enumerate(values) if v & 1)
        src = current_source_mask(cx, parity)
        w = Fraction(1)
        for p, v in enumerate(values):
            if v:
                w *= Fraction(2 * rational[p]) ** v / factorial(v)
        items.append((values, mass, src, w))

    g12 = gamma1.support ^ gamma2.support
    sub_cache: dict[tuple[int, int], bool] = {}

    def subcurrent_ok(values) -> bool:
        supp = sum(1 << p for p, v in enumerate(values) if v)
        key = (supp, gamma2.support)
        if key not in sub_cache:
            sub_cache[key] = gf2.solve_affine_restricted(
                cx.edge_plaq_mask, cx.n_plaquettes, supp, gamma2.support
            ).feasible
        return sub_cache[key]

    lhs = Fraction(0)
    rhs = Fraction(0)
    for v1, m1, s1, w1 in items:
        for v2, m2, s2, w2 in items:
            if m1 + m2 > K:
                continue
            if s1 == gamma1.support and s2 == gamma2.support:
                total = tuple(a + b for a, b in zip(v1, v2))
                lhs += functional(total) * w1 * w2
            if s1 == 0 and s2 == g12:
                total = tuple(a + b for a, b in zip(v1, v2))
                if subcurrent_ok(total):
                    rhs += functional(total) * w1 * w2
    return Report(
        check="switching",
        complex=cx.describe(),
        gamma=f"{gamma1.label} | {gamma2.label}",
        params=params.describe(),
        lhs=lhs,
        rhs=rhs,
        metric="exact-equality",
        value=lhs - rhs,
        passed=lhs == rhs,
        details={"K": K},
    )


# -- exact measures -------------------------------------------------------------------


def exact_measure(
    cx: CellComplex,
    kind: str,
    gamma: Loop,
    params: CouplingParams,
    max_bits: int = 20,
) -> MeasureTable:
    """Exact normalized table of one of the four representations.

    Kinds: ``gauge`` (fields, all of them), ``ht`` (two-forms with source
    gamma, weight t^|support|), ``cluster`` (plaquette sets admitting a
    sub-surface bounding gamma, random cluster weights with p = 1-exp(-4b)),
    ``current-parity`` (parity classes of currents with source gamma).
    """
    _check_loop(cx, gamma)
    key = ("measure", kind, gamma.support, _params_key(params))
    if key in cx._memo:
        return cx._memo[key]
    if kind == "gauge":
        table = _gauge_table(cx, params, max_bits)
    elif kind == "ht":
        table = _ht_table(cx, gamma, params, max_bits)
    elif kind == "cluster":
        table = _cluster_table(cx, gamma, params, max_bits)
    elif kind == "current-parity":
        table = _current_parity_table(cx, gamma, params, max_bits)
    else:
        raise ValueError(f"unknown measure kind {kind!r}")
    cx._memo[key] = table
    return table


def _gauge_table(cx: CellComplex, params: CouplingParams, max_bits: int) -> MeasureTable:
    if cx.n_edges > max_bits:
        raise SizeRefusal(f"2^{cx.n_edges} gauge fields exceed cap 2^{max_bits}")
    betas = params.betas_mpf(cx.n_plaquettes)
    down = [mp.e ** (-4 * b) for b in betas]
    up = [mp.e ** (4 * b) for b in betas]
    val = mpf(1)
    for b in betas:
        val *= mp.e ** (2 * b)
    entries: dict[int, mpf] = {}
    sigma = 0
    flux = 0
    entries[0] = val
    for i in range(1, 1 << cx.n_edges):
        b = _gray_flip_index(i)
        sigma ^= 1 << b
        mask = cx.edge_plaq_mask[b]
        new_flux = flux ^ mask
        changed = mask
        while changed:
            p = (changed & -changed).bit_length() - 1
            val *= down[p] if (new_flux >> p) & 1 else up[p]
            changed &= changed - 1
        flux = new_flux
        entries[sigma] = val
    return MeasureTable("gauge", cx.n_edges, entries)


def _ht_table(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int
) -> MeasureTable:
    sol = _ht_coset(cx, gamma)
    if not sol.feasible:
        raise ValueError("no two-form has the requested boundary in this complex")
    if sol.kernel_dim > max_bits:
        raise SizeRefusal(f"coset dimension {sol.kernel_dim} exceeds cap {max_bits}")
    t = [mpf(x) for x in _broadcast(params.p2, cx.n_plaquettes)]
    entries: dict[int, mpf] = {}
    for omega in sol.solutions():
        v = mpf(1)
        mask = omega
        while mask:
            p = (mask & -mask).bit_length() - 1
            v *= t[p]
            mask &= mask - 1
        entries[omega] = v
    return MeasureTable("ht", cx.n_plaquettes, entries, gamma.support)


def _cluster_table(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int
) -> MeasureTable:
    if cx.n_plaquettes > max_bits:
        raise SizeRefusal(
            f"2^{cx.n_plaquettes} plaquette sets exceed cap 2^{max_bits}"
        )
    p_rc = _broadcast(params.p_rc, cx.n_plaquettes)
    entries: dict[int, mpf] = {}
    for mask in range(1 << cx.n_plaquettes):
        feasible = gf2.solve_affine_restricted(
            cx.edge_plaq_mask, cx.n_plaquettes, mask, gamma.support
        ).feasible
        if not feasible:
            continue
        w = mpf(2) ** gf2.betti_b1(cx, mask)
        for p in range(cx.n_plaquettes):
            w *= p_rc[p] if (mask >> p) & 1 else (1 - p_rc[p])
        entries[mask] = w
    if not entries:
        raise ValueError("no plaquette set admits a sub-surface bounding gamma")
    return MeasureTable("cluster", cx.n_plaquettes, entries, gamma.support)


def _current_parity_table(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int
) -> MeasureTable:
    sol = _ht_coset(cx, gamma)
    if not sol.feasible:
        raise ValueError("no current has the requested source in this complex")
    if sol.kernel_dim > max_bits:
        raise SizeRefusal(f"coset dimension {sol.kernel_dim} exceeds cap {max_bits}")
    betas = params.betas_mpf(cx.n_plaquettes)
    cosh = [mp.cosh(2 * b) for b in betas]
    sinh = [mp.sinh(2 * b) for b in betas]
    entries: dict[int, mpf] = {}
    for omega in sol.solutions():
        v = mpf(1)
        for p in range(cx.n_plaquettes):
            v *= sinh[p] if (omega >> p) & 1 else cosh[p]
        entries[omega] = v
    return MeasureTable("current-parity", cx.n_plaquettes, entries, gamma.support)


def exact_support_measure(
    cx: CellComplex, gamma: Loop, params: CouplingParams, max_bits: int = 16
) -> MeasureTable:
    """Exact law of the support of a current with source gamma.

    Sums over parity classes inside each support set: a plaquette of odd
    parity contributes sinh(2b), one of even positive value cosh(2b) - 1.
    """
    _check_loop(cx, gamma)
    key = ("support_measure", gamma.support, _params_key(params))
    if key in cx._memo:
        return cx._memo[key]
    if cx.n_plaquettes > max_bits:
        raise SizeRefusal(f"2^{cx.n_plaquettes} supports exceed cap 2^{max_bits}")
    sol = _ht_coset(cx, gamma)
    if not sol.feasible:
        raise ValueError("no current has the requested source in this complex")
    betas = params.betas_mpf(cx.n_plaquettes)
    sinh = [mp.sinh(2 * b) for b in betas]
    cosh_minus_1 = [mp.cosh(2 * b) - 1 for b in betas]
    full = (1 << cx.n_plaquettes) - 1
    entries: dict[int, mpf] = defaultdict(lambda: mpf(0))
    for omega in sol.solutions():
        base = mpf(1)
        mask = omega
        while mask:
            p = (mask & -mask).bit_length() - 1
            base *= sinh[p]
            mask &= mask - 1
        comp = full & ~omega
        sub = comp
        while True:
            extra = base
            mask = sub
            while mask:
                p = (mask & -mask).bit_length() - 1
                extra *= cosh_minus_1[p]
                mask &= mask - 1
            entries[omega | sub] += extra
            if sub == 0:
                break
            sub = (sub - 1) & comp
    table = MeasureTable("current-support", cx.n_plaquettes, dict(entries), gamma.support)
    cx._memo[key] = table
    return table


def _broadcast(prob, n: int) -> list:
    if isinstance(prob, tuple):
        return list(prob)
    return [prob] * n


# -- coupling verifiers ----------------------------------------------------------------

COUPLING_STEPS = (
    "parity",
    "hat-from-ht",
    "cluster-from-ht",
    "cluster-from-hat",
    "subsurface",
    "gauge-to-cluster",
    "cluster-to-gauge",
)


def _sprinkle_max(
    src: MeasureTable, probs: list, n_bits: int, kind: str
) -> MeasureTable:
    """Pushforward of max(config, X) with X independent Bernoulli per plaquette."""
    if n_bits > 16:
        raise SizeRefusal(f"randomization space 2^{n_bits} exceeds cap 2^16")
    # Bernoulli weights for every subset, built one plaquette at a time.
    weights = [mpf(1)]
    for p in range(n_bits):
        stay = 1 - probs[p]
        add = probs[p]
        weights = [w * stay for w in weights] + [w * add for w in weights]
    out: dict[int, mpf] = defaultdict(lambda: mpf(0))
    for mask, pr in src.entries.items():
        for x, wx in enumerate(weights):
            out[mask | x] += pr * wx
    return MeasureTable(kind, n_bits, dict(out))


def verify_coupling(
    cx: CellComplex,
    step: str,
    gamma: Loop,
    params: CouplingParams,
    tol: mpf = TOL,
) -> Report:
    """Exact pushforward of one coupling step against its exact target table.

    Steps: ``parity`` (current parity -> high-temperature), ``hat-from-ht``
    (sprinkle p1 onto an ht sample -> current support), ``cluster-from-ht``
    (sprinkle p2 -> cluster), ``cluster-from-hat`` (sprinkle p3 onto a current
    support -> cluster), ``subsurface`` (uniform bounding sub-surface of a
    cluster sample -> ht), and the sourceless Swendsen-Wang half-steps
    ``gauge-to-cluster`` / ``cluster-to-gauge``.
    """
    _check_loop(cx, gamma)
    n_p = cx.n_plaquettes

    def guard(src):
        if len(src) > 1 << 16:
            raise SizeRefusal(f"source state space {len(src)} exceeds cap 2^16")
        return src

    if step == "parity":
        pushed = exact_measure(cx, "current-parity", gamma, params)
        target = exact_measure(cx, "ht", gamma, params)
    elif step == "hat-from-ht":
        src = guard(exact_measure(cx, "ht", gamma, params))
        pushed = _sprinkle_max(src, _broadcast(params.p1, n_p), n_p, "pushed")
        target = exact_support_measure(cx, gamma, params)
    elif step == "cluster-from-ht":
        src = guard(exact_measure(cx, "ht", gamma, params))
        pushed = _sprinkle_max(src, _broadcast(params.p2, n_p), n_p, "pushed")
        target = exact_measure(cx, "cluster", gamma, params)
    elif step == "cluster-from-hat":
        src = guard(exact_support_measure(cx, gamma, params))
        pushed = _sprinkle_max(src, _broadcast(params.p3, n_p), n_p, "pushed")
        target = exact_measure(cx, "cluster", gamma, params)
    elif step == "subsurface":
        src = guard(exact_measure(cx, "cluster", gamma, params))
        out: dict[int, mpf] = defaultdict(lambda: mpf(0))
        for mask, pr in src.entries.items():
            sol = gf2.solve_affine_restricted(
                cx.edge_plaq_mask, n_p, mask, gamma.support
            )
            if sol.kernel_dim > 16:
                raise SizeRefusal(
                    f"randomization space 2^{sol.kernel_dim} exceeds cap 2^16"
                )
            share = pr / (1 << sol.kernel_dim)
            for sub in sol.solutions():
                out[sub] += share
        pushed = MeasureTable("pushed", n_p, dict(out))
        target = exact_measure(cx, "ht", gamma, params)
    elif step == "gauge-to-cluster":
        if not gamma.is_empty:
            raise ValueError("the Swendsen-Wang half-steps are sourceless (gamma = 0)")
        src = guard(exact_measure(cx, "gauge", gamma, params))
        pushed = push_gauge_to_cluster(cx, src, params)
        target = exact_measure(cx, "cluster", gamma, params)
    elif step == "cluster-to-gauge":
        if not gamma.is_empty:
            raise ValueError("the Swendsen-Wang half-steps are sourceless (gamma = 0)")
        src = guard(exact_measure(cx, "cluster", gamma, params))
        pushed = push_cluster_to_gauge(cx, src)
        target = exact_measure(cx, "gauge", gamma, params)
    else:
        raise ValueError(f"unknown coupling step {step!r}; choose from {COUPLING_STEPS}")
    tv = pushed.tv(target)
    return Report(
        check=f"coupling:{step}",
        complex=cx.describe(),
        gamma=gamma.label,
        params=params.describe(),
        lhs=f"pushforward[{step}]",
        rhs=target.kind,
        metric="total-variation",
        value=tv,
        passed=bool(tv <= tol),
        details={"states": len(target)},
    )


def _frustrated(cx: CellComplex, sigma_bits: int) -> int:
    out = 0
    for p, mask in enumerate(cx.plaq_edge_mask):
        out |= ((sigma_bits & mask).bit_count() & 1) << p
    return out


def push_gauge_to_cluster(
    cx: CellComplex, src: MeasureTable, params: CouplingParams
) -> MeasureTable:
    """Exact Swendsen-Wang half-step: flat plaquettes join independently.

    A flat plaquette is included with probability 1 - exp(-4 beta_p) (the
    factor covers both orientations of the plaquette); frustrated plaquettes
    never join.
    """
    n_p = cx.n_plaquettes
    p_rc = _broadcast(params.p_rc, n_p)
    full = (1 << n_p) - 1
    out: dict[int, mpf] = defaultdict(lambda: mpf(0))
    for sigma, pr in src.entries.items():
        flat = full & ~_frustrated(cx, sigma)
        sub = flat
        while True:
            w = pr
            mask = flat
            while mask:
                p = (mask & -mask).bit_length() - 1
                w *= p_rc[p] if (sub >> p) & 1 else (1 - p_rc[p])
                mask &= mask - 1
            out[sub] += w
            if sub == 0:
                break
            sub = (sub - 1) & flat
    return MeasureTable("pushed-cluster", n_p, dict(out))


def push_cluster_to_gauge(cx: CellComplex, src: MeasureTable) -> MeasureTable:
    """Exact Swendsen-Wang half-step: uniform field among those flat on P."""
    out: dict[int, mpf] = defaultdict(lambda: mpf(0))
    for mask, pr in src.entries.items():
        rows = [cx.plaq_edge_mask[p] for p in range(cx.n_plaquettes) if (mask >> p) & 1]
        sol = gf2.solve_affine(gf2.BitMatrix.from_rows(rows, cx.n_edges), 0)
        if sol.kernel_dim > 20:
            raise SizeRefusal(
                f"flat-field space 2^{sol.kernel_dim} exceeds cap 2^20"
            )
        share = pr / (1 << sol.kernel_dim)
        for sigma in sol.solutions():
            out[sigma] += share
    return MeasureTable("pushed-gauge", cx.n_edges, dict(out))
