"""Wilson loop estimation by independent routes and the inequality checks.

Three routes: ``direct`` averages the loop variable over a heat-bath chain,
``cluster`` measures the probability that a random cluster sample admits a
bounding sub-surface, and ``current-squared`` measures the subcurrent
indicator over pairs of independent sourceless currents (it estimates the
square of the Wilson expectation and is reported as such).

Error bars are batch means (32 batches by default); inequality checks are
one-sided at 3 standard errors. Oracle modes use the exact polynomial
machinery instead of sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from mpmath import mp, mpf

from . import gf2
from .cells import CellComplex
from .forms import (
    CouplingParams,
    Current,
    GaugeField,
    Loop,
    TwoFormZ2,
    area,
    as_mpf,
    concat_loops,
    empty_loop,
    has_subcurrent,
    rectangle_loop,
    wilson,
)
from .oracle import (
    Report,
    exact_measure,
    exact_support_measure,
    exact_Z_full,
    wilson_expectation_exact,
)
from .samplers import ChainSpec, apply_coupling, run_chain

DEFAULT_BATCHES = 32


@dataclass
class Estimate:
    """A Monte Carlo estimate with batch-means standard error."""

    value: float
    se: float
    batches: int
    route: str
    n_samples: int


@dataclass
class PotentialFit:
    """Per-T effective potential values -log<W_{R,T}>/T and the extrapolation."""

    R: int
    entries: list  # (T, value or None)
    V: float | None
    residual: float
    flags: list = field(default_factory=list)
    subadditivity: list = field(default_factory=list)
    raw: list = field(default_factory=list)  # (T, wilson estimate, se)


def batch_means(xs: np.ndarray, n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series."""
    xs = np.asarray(xs, dtype=float)
    if len(xs) < n_batches:
        raise ValueError(f"need at least {n_batches} samples, got {len(xs)}")
    size = len(xs) // n_batches
    used = xs[: size * n_batches]
    means = used.reshape(n_batches, size).mean(axis=1)
    se = float(means.std(ddof=1) / np.sqrt(n_batches))
    return float(used.mean()), se


# -- observables -----------------------------------------------------------------------


def wilson_observable(gamma: Loop):
    name = f"wilson[{gamma.label}]"

    def fn(cx: CellComplex, state: GaugeField) -> float:
        return float(wilson(cx, state, gamma))

    return (name, fn)


def membership_observable(gamma: Loop):
    """Indicator that a cluster sample admits a sub-surface bounding gamma."""
    name = f"bounds[{gamma.label}]"

    def fn(cx: CellComplex, state: TwoFormZ2) -> float:
        sol = gf2.solve_affine_restricted(
            cx.edge_plaq_mask, cx.n_plaquettes, state.bits, gamma.support
        )
        return 1.0 if sol.feasible else 0.0

    return (name, fn)


# -- Wilson loop routes ------------------------------------------------------------------


def _pooled_series(cx: CellComplex, base: ChainSpec, kind: str, observables) -> dict:
    """Run base.chains independent chains (consecutive streams) and concatenate."""
    all_series: dict[str, list[np.ndarray]] = {name: [] for name, _ in observables}
    for i in range(base.chains):
        spec = replace(
            base, kind=kind, chains=1, rng=base.rng.with_stream(base.rng.stream + i)
        )
        out = run_chain(cx, spec, observables)
        for name, vals in out["series"].items():
            all_series[name].append(vals)
    return {name: np.concatenate(parts) for name, parts in all_series.items()}


def _sourceless_current_series(cx: CellComplex, spec: ChainSpec) -> list[Current]:
    """Sourceless currents via the cluster -> sub-surface -> lift pipeline."""
    spec.validate(cx)
    rng = spec.rng.generator()
    gamma0 = empty_loop(cx)
    from .samplers import sw_update  # local import keeps module load order simple

    state = TwoFormZ2.zero(cx)
    out: list[Current] = []
    for s in range(1, spec.sweeps + 1):
        state = sw_update(cx, state, spec.params, rng)
        if s > spec.burn_in and (s - spec.burn_in) % spec.thinning == 0:
            eta = apply_coupling(cx, "subsurface", state, gamma0, spec.params, rng)
            out.append(apply_coupling(cx, "lift", eta, gamma0, spec.params, rng))
    return out


def estimate_wilson(
    cx: CellComplex, gamma: Loop, route: str, chain: ChainSpec
) -> Estimate:
    """Estimate the Wilson loop expectation (or its square) along one route.

    The chain spec carries the budget (sweeps, burn-in, thinning, chains) and
    the base random stream; the chain kind is forced to match the route.
    """
    if gamma.support >> cx.n_edges:
        raise ValueError("loop support not contained in this complex")
    if route == "direct":
        series = _pooled_series(cx, chain, "gauge", [wilson_observable(gamma)])
        xs = next(iter(series.values()))
        value, se = batch_means(xs)
        return Estimate(value, se, DEFAULT_BATCHES, route, len(xs))
    if route == "cluster":
        series = _pooled_series(cx, chain, "cluster", [membership_observable(gamma)])
        xs = next(iter(series.values()))
        value, se = batch_means(xs)
        return Estimate(value, se, DEFAULT_BATCHES, route, len(xs))
    if route == "current-squared":
        indicator: list[float] = []
        for i in range(chain.chains):
            spec_a = replace(
                chain,
                kind="cluster",
                chains=1,
                rng=chain.rng.with_stream(chain.rng.stream + 2 * i),
            )
            spec_b = replace(spec_a, rng=chain.rng.with_stream(chain.rng.stream + 2 * i + 1))
            for n1, n2 in zip(
                _sourceless_current_series(cx, spec_a),
                _sourceless_current_series(cx, spec_b),
            ):
                indicator.append(1.0 if has_subcurrent(cx, n1 + n2, gamma) else 0.0)
        xs = np.asarray(indicator)
        value, se = batch_means(xs)
        return Estimate(value, se, DEFAULT_BATCHES, route, len(xs))
    raise ValueError(f"unknown route {route!r}; choose direct, cluster, current-squared")


# -- quark potential ------------------------------------------------------------------


def centered_rectangle(cx: CellComplex, R: int, T: int, axes=(0, 1)) -> Loop:
    """An R x T rectangle placed centrally in the box."""
    a, b = axes
    corner = [(e - 1) // 2 for e in cx.extents]
    corner[a] = (cx.extents[a] - 1 - R) // 2
    corner[b] = (cx.extents[b] - 1 - T) // 2
    if corner[a] < 0 or corner[b] < 0:
        raise ValueError(f"{R}x{T} rectangle does not fit in extents {cx.extents}")
    return rectangle_loop(cx, corner, axes, R, T)


def loop_margin(cx: CellComplex, gamma: Loop) -> int:
    """Distance from the loop to the box boundary (0 if it touches)."""
    best = None
    for e in range(cx.n_edges):
        if not (gamma.support >> e) & 1:
            continue
        mid = cx.edge_midpoint_doubled(e)
        for a in range(cx.m):
            d = min(mid[a], 2 * (cx.extents[a] - 1) - mid[a])
            best = d if best is None else min(best, d)
    return 0 if best is None else best // 2


def estimate_potential(
    cx: CellComplex,
    R: int,
    Ts: list[int],
    chain: ChainSpec,
    axes=(0, 1),
) -> PotentialFit:
    """Effective potential from -log<W_{R,T}>/T across a list of T values.

    Nonpositive estimates are flagged as insufficient statistics rather than
    clipped. Subadditivity of T -> -log<W_{R,T}> is reported as a diagnostic
    for every (T1, T2) pair whose sum is also in the list.
    """
    if sorted(Ts) != Ts or len(set(Ts)) != len(Ts) or min(Ts) < 1:
        raise ValueError("T list must be strictly increasing and >= 1")
    loops = {T: centered_rectangle(cx, R, T, axes) for T in Ts}
    flags = []
    for T, lp in loops.items():
        if loop_margin(cx, lp) < 1:
            flags.append(f"T={T}: rectangle touches the box boundary")
    observables = [wilson_observable(loops[T]) for T in Ts]
    series = _pooled_series(cx, chain, "gauge", observables)
    stats = {}
    for T in Ts:
        xs = series[wilson_observable(loops[T])[0]]
        stats[T] = batch_means(xs)
    entries = []
    neg_log = {}
    for T in Ts:
        mean, se = stats[T]
        if mean <= 0:
            entries.append((T, None))
            flags.append(f"T={T}: insufficient statistics (estimate <= 0)")
        else:
            neg_log[T] = (-np.log(mean), se / mean)
            entries.append((T, float(-np.log(mean) / T)))
    valid = [T for T, v in entries if v is not None]
    V = float(entries[Ts.index(valid[-1])][1]) if valid else None
    residual = (
        abs(entries[Ts.index(valid[-1])][1] - entries[Ts.index(valid[-2])][1])
        if len(valid) >= 2
        else 0.0
    )
    subadd = []
    for i, T1 in enumerate(Ts):
        for T2 in Ts[i:]:
            T3 = T1 + T2
            if T3 in neg_log and T1 in neg_log and T2 in neg_log:
                l1, e1 = neg_log[T1]
                l2, e2 = neg_log[T2]
                l3, e3 = neg_log[T3]
                slack = 3 * float(np.sqrt(e1**2 + e2**2 + e3**2))
                subadd.append(
                    {
                        "T1": T1,
                        "T2": T2,
                        "holds": bool(l3 <= l1 + l2 + slack),
                        "lhs": float(l3),
                        "rhs": float(l1 + l2),
                    }
                )
    raw = [(T, stats[T][0], stats[T][1]) for T in Ts]
    return PotentialFit(R, entries, V, float(residual), flags, subadd, raw)


# -- inequality checks ---------------------------------------------------------------


def check_area_law(
    cx: CellComplex,
    gamma: Loop,
    params: CouplingParams,
    mode: str = "oracle",
    chain: ChainSpec | None = None,
) -> Report:
    """Compare E[W_gamma] against (4(m-1)b)^area / (1 - 4(m-1)b).

    Requires b < 1/(4(m-1)) (maximum over plaquettes for per-plaquette
    couplings). The hypothesis that the loop is farther from the boundary
    than its area is reported as a diagnostic, not enforced.
    """
    beta_max = max(params.betas_mpf(cx.n_plaquettes))
    x = 4 * (cx.m - 1) * beta_max
    if not x < 1:
        raise ValueError(
            f"hypothesis violated: beta must satisfy 4(m-1)beta < 1, got {float(x)}"
        )
    a = area(cx, gamma)
    bound = x**a / (1 - x)
    margin = loop_margin(cx, gamma)
    details = {
        "area": a,
        "boundary_margin": margin,
        "margin_hypothesis_met": margin >= a,
        "bound": bound,
    }
    if mode == "oracle":
        value = wilson_expectation_exact(cx, gamma, params)
        passed = bool(value <= bound)
        metric = "exact"
    elif mode == "mc":
        if chain is None:
            raise ValueError("mc mode needs a chain spec")
        est = estimate_wilson(cx, gamma, "direct", chain)
        value = est.value
        passed = bool(est.value - 3 * est.se <= bound)
        metric = "one-sided-3se"
        details["se"] = est.se
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Report(
        check="area-law",
        complex=cx.describe(),
        gamma=gamma.label,
        params=params.describe(),
        lhs=value,
        rhs=bound,
        metric=metric,
        value=value,
        passed=passed,
        details=details,
    )


def check_griffiths(
    cx: CellComplex,
    gamma1: Loop,
    gamma2: Loop,
    betas: list,
    mode: str = "oracle",
    chain: ChainSpec | None = None,
) -> Report:
    """Product correlation inequality and monotonicity in beta.

    Oracle mode works on the exact integer Laurent polynomials: the product
    inequality is E[W1 W2] Z0 - ... >= 0 and the derivative check uses exact
    polynomial calculus, both evaluated at each grid beta in high precision.
    """
    g12 = concat_loops(cx, gamma1, gamma2)
    zero = empty_loop(cx)
    if mode == "oracle":
        Z0 = exact_Z_full(cx, zero)
        Z1 = exact_Z_full(cx, gamma1)
        Z2 = exact_Z_full(cx, gamma2)
        Z12 = exact_Z_full(cx, g12)
        product_diff = Z12 * Z0 - Z1 * Z2
        coeffwise = all(c >= 0 for c in product_diff.coeffs.values())
        violations = []
        for b in betas:
            y = mp.e ** (2 * as_mpf(b))
            scale = Z0.eval_mpf(y) ** 2
            if not coeffwise:
                v = product_diff.eval_mpf(y)
                if v < -mpf("1e-25") * scale:
                    violations.append(("product", float(b), float(v)))
            for lp, Zg in (("gamma1", Z1), ("gamma2", Z2)):
                n = Zg.derivative() * Z0 - Zg * Z0.derivative()
                v = n.eval_mpf(y)
                if v < -mpf("1e-25") * scale:
                    violations.append((f"monotone:{lp}", float(b), float(v)))
        return Report(
            check="griffiths",
            complex=cx.describe(),
            gamma=f"{gamma1.label} | {gamma2.label}",
            params=f"betas={list(map(float, betas))}",
            lhs="E[W1 W2] >= E[W1]E[W2], dE/dbeta >= 0",
            rhs="0",
            metric="violations",
            value=len(violations),
            passed=not violations,
            details={"coefficientwise_product": coeffwise, "violations": violations},
        )
    if mode == "mc":
        if chain is None:
            raise ValueError("mc mode needs a chain spec")
        results = []
        prev = None
        ok = True
        for b in betas:
            params = CouplingParams(b)
            spec = replace(chain, params=params)
            obs = [
                wilson_observable(gamma1),
                wilson_observable(gamma2),
                wilson_observable(g12),
            ]
            series = _pooled_series(cx, spec, "gauge", obs)
            m1, e1 = batch_means(series[obs[0][0]])
            m2, e2 = batch_means(series[obs[1][0]])
            m12, e12 = batch_means(series[obs[2][0]])
            slack = 3 * float(np.sqrt(e12**2 + (m2 * e1) ** 2 + (m1 * e2) ** 2))
            product_ok = m12 >= m1 * m2 - slack
            monotone_ok = True
            if prev is not None:
                pm, pe = prev
                monotone_ok = m1 >= pm - 3 * float(np.sqrt(e1**2 + pe**2))
            prev = (m1, e1)
            ok = ok and product_ok and monotone_ok
            results.append(
                {
                    "beta": float(b),
                    "E[W1W2]": m12,
                    "E[W1]E[W2]": m1 * m2,
                    "product_ok": product_ok,
                    "monotone_ok": monotone_ok,
                }
            )
        return Report(
            check="griffiths",
            complex=cx.describe(),
            gamma=f"{gamma1.label} | {gamma2.label}",
            params=f"betas={list(map(float, betas))}",
            lhs="mc",
            rhs="0",
            metric="one-sided-3se",
            value=sum(0 if r["product_ok"] and r["monotone_ok"] else 1 for r in results),
            passed=ok,
            details={"points": results},
        )
    raise ValueError(f"unknown mode {mode!r}")


# -- covariance decay ------------------------------------------------------------------


def loop_l1_distance(cx: CellComplex, gamma1: Loop, gamma2: Loop) -> int:
    """Minimum over support-edge pairs of the floored L1 midpoint distance."""
    mids1 = [
        cx.edge_midpoint_doubled(e)
        for e in range(cx.n_edges)
        if (gamma1.support >> e) & 1
    ]
    mids2 = [
        cx.edge_midpoint_doubled(e)
        for e in range(cx.n_edges)
        if (gamma2.support >> e) & 1
    ]
    if not mids1 or not mids2:
        raise ValueError("distance needs two nonempty loops")
    best = None
    for a in mids1:
        for b in mids2:
            d = sum(abs(x - y) for x, y in zip(a, b))
            best = d if best is None else min(best, d)
    return best // 2


def estimate_covariance(
    cx: CellComplex, gamma1: Loop, gamma2: Loop, chain: ChainSpec
) -> tuple[Estimate, int]:
    """Covariance of two Wilson loop variables from a single gauge chain."""
    if gamma1.support & gamma2.support:
        raise ValueError("covariance requires loops with disjoint supports")
    dist = loop_l1_distance(cx, gamma1, gamma2)
    o1 = wilson_observable(gamma1)
    o2 = wilson_observable(gamma2)
    series = _pooled_series(cx, chain, "gauge", [o1, o2])
    xs, ys = series[o1[0]], series[o2[0]]
    mx, my = xs.mean(), ys.mean()
    centered = (xs - mx) * (ys - my)
    n = len(centered)
    size = n // DEFAULT_BATCHES
    if size == 0:
        raise ValueError("too few samples for batch means")
    used = centered[: size * DEFAULT_BATCHES]
    bmeans = used.reshape(DEFAULT_BATCHES, size).mean(axis=1)
    value = float(used.mean())
    se = float(bmeans.std(ddof=1) / np.sqrt(DEFAULT_BATCHES))
    return Estimate(value, se, DEFAULT_BATCHES, "covariance", n), dist


def fit_decay_rate(distances, covariances) -> float | None:
    """Fitted rate c in |Cov| ~ exp(-c * dist); None if under two usable points."""
    pts = [
        (d, np.log(abs(c)))
        for d, c in zip(distances, covariances)
        if abs(c) > 0
    ]
    if len(pts) < 2:
        return None
    ds = np.array([p[0] for p in pts], dtype=float)
    ls = np.array([p[1] for p in pts], dtype=float)
    slope = np.polyfit(ds, ls, 1)[0]
    return float(-slope)


# -- stochastic domination ---------------------------------------------------------------


def check_domination(
    cx: CellComplex,
    params: CouplingParams,
    mode: str = "exact",
    chain: ChainSpec | None = None,
) -> Report:
    """Bernoulli sandwich for the sourceless cluster and current-support laws.

    Exact mode compares every upward event generated by single plaquettes and
    pairs, and additionally checks that each conditional inclusion probability
    of the cluster law lies in [tanh 2b, 1 - exp(-4b)].
    """
    gamma0 = empty_loop(cx)
    n_p = cx.n_plaquettes
    p1 = params.p1 if isinstance(params.p1, tuple) else (params.p1,) * n_p
    p2 = params.p2 if isinstance(params.p2, tuple) else (params.p2,) * n_p
    p_rc = params.p_rc if isinstance(params.p_rc, tuple) else (params.p_rc,) * n_p
    slack = mpf("1e-12")
    if mode == "exact":
        cluster = exact_measure(cx, "cluster", gamma0, params)
        support = exact_support_measure(cx, gamma0, params)
        events = [1 << p for p in range(n_p)]
        events += [
            (1 << p) | (1 << q) for p in range(n_p) for q in range(p + 1, n_p)
        ]
        violations = []
        for ev in events:
            bern = lambda probs: mp.fprod(
                probs[p] for p in range(n_p) if (ev >> p) & 1
            )
            lo2, hi = bern(p2), bern(p_rc)
            lo1 = bern(p1)
            phi = cluster.event_prob(ev)
            hat = support.event_prob(ev)
            if not (lo2 <= phi + slack and phi <= hi + slack):
                violations.append(("cluster", ev, float(lo2), float(phi), float(hi)))
            if not (lo1 <= hat + slack and hat <= hi + slack):
                violations.append(("support", ev, float(lo1), float(hat), float(hi)))
        interval_violations = 0
        for mask in range(1 << n_p):
            for p0 in range(n_p):
                hi_mask = mask | (1 << p0)
                lo_mask = mask & ~(1 << p0)
                num = cluster.prob(hi_mask)
                den = num + cluster.prob(lo_mask)
                if den == 0:  # unreachable configuration (only at beta = 0)
                    continue
                ratio = num / den
                if not (p2[p0] - slack <= ratio <= p_rc[p0] + slack):
                    interval_violations += 1
        passed = not violations and interval_violations == 0
        return Report(
            check="domination",
            complex=cx.describe(),
            gamma="empty",
            params=params.describe(),
            lhs="Bernoulli sandwich",
            rhs="cluster & current-support laws",
            metric="violations",
            value=len(violations) + interval_violations,
            passed=passed,
            details={
                "events": len(events),
                "violations": violations,
                "conditional_interval_violations": interval_violations,
            },
        )
    if mode == "mc":
        if chain is None:
            raise ValueError("mc mode needs a chain spec")
        events = [1 << p for p in range(n_p)][: min(n_p, 4)]
        obs = []
        for ev in events:
            def make(ev_mask):
                return lambda cx_, st: 1.0 if st.bits & ev_mask == ev_mask else 0.0

            obs.append((f"event:{ev}", make(ev)))
        series = _pooled_series(cx, chain, "cluster", obs)
        violations = []
        for ev, (name, _) in zip(events, obs):
            mean, se = batch_means(series[name])
            lo = float(mp.fprod(p2[p] for p in range(n_p) if (ev >> p) & 1))
            hi = float(mp.fprod(p_rc[p] for p in range(n_p) if (ev >> p) & 1))
            if not (lo - 3 * se <= mean <= hi + 3 * se):
                violations.append((ev, lo, mean, hi, se))
        return Report(
            check="domination",
            complex=cx.describe(),
            gamma="empty",
            params=params.describe(),
            lhs="Bernoulli sandwich",
            rhs="cluster law (mc)",
            metric="one-sided-3se",
            value=len(violations),
            passed=not violations,
            details={"violations": violations},
        )
    raise ValueError(f"unknown mode {mode!r}")
