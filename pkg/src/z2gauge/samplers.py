"""Markov chains for the gauge and random cluster measures, plus couplings.

Randomness is counter-based: every chain owns a Philox stream fully
determined by (master seed, stream id), and the sweep schedule is fixed
edge-index order, so runs are reproducible and chains can execute
concurrently without sharing state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from mpmath import mp, mpf

from . import gf2
from .cells import CellComplex
from .forms import CouplingParams, Current, GaugeField, Loop, TwoFormZ2, as_mpf
from .oracle import MeasureTable, push_cluster_to_gauge, push_gauge_to_cluster

ALGORITHM_ID = "philox4x64:heatbath-edge-order,sw-alternation:v1"


@dataclass(frozen=True)
class RngSpec:
    """Identifies a reproducible random stream."""

    seed: int
    stream: int = 0
    algorithm: str = ALGORITHM_ID

    def generator(self) -> np.random.Generator:
        if self.algorithm != ALGORITHM_ID:
            raise ValueError(
                f"unsupported rng algorithm {self.algorithm!r}; this build provides {ALGORITHM_ID!r}"
            )
        return np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        )

    def with_stream(self, stream: int) -> "RngSpec":
        return replace(self, stream=stream)


@dataclass
class ChainState:
    """A running chain: its kind, configuration, and sweep counter."""

    kind: str
    config: GaugeField | TwoFormZ2
    sweeps_done: int = 0


@dataclass(frozen=True)
class ChainSpec:
    """Everything needed to reproduce a chain run."""

    kind: str
    params: CouplingParams
    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    chains: int = 1
    rng: RngSpec = RngSpec(seed=0)
    gamma: Loop | None = None

    def validate(self, cx: CellComplex) -> None:
        if self.kind not in ("gauge", "cluster"):
            raise ValueError(f"unknown chain kind {self.kind!r}")
        if self.sweeps < 0 or self.burn_in < 0 or self.burn_in > self.sweeps:
            raise ValueError("need 0 <= burn_in <= sweeps")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.gamma is not None and not self.gamma.is_empty:
            raise ValueError(
                "chain measures are sourceless; loops enter only through observables"
            )


# -- heat bath ------------------------------------------------------------------------


def _heatbath_plan(cx: CellComplex, params: CouplingParams):
    """Per-edge coboundary masks and conditional flip probabilities.

    For uniform beta the probability that an edge resamples to 1 depends only
    on s = (flat minus frustrated count) over its coboundary with the bit
    cleared, so it is table lookup; per-plaquette beta recomputes the
    exponent each visit.
    """
    key = ("hb_plan", params.beta if params.is_uniform else ("per",) + tuple(params.beta))
    if key in cx._memo:
        return cx._memo[key]
    cob = [cx.edge_plaq_mask[e] for e in range(cx.n_edges)]
    degs = [m.bit_count() for m in cob]
    if params.is_uniform:
        beta = float(as_mpf(params.beta))
        kmax = max(degs) if degs else 0
        table = [1.0 / (1.0 + math.exp(4.0 * beta * s)) for s in range(-kmax, kmax + 1)]
        plan = ("uniform", cob, degs, table, kmax)
    else:
        betas = [float(as_mpf(b)) for b in params.betas(cx.n_plaquettes)]
        plaqs = [
            [p for p in range(cx.n_plaquettes) if (cob[e] >> p) & 1]
            for e in range(cx.n_edges)
        ]
        plan = ("per-plaquette", cob, degs, betas, plaqs)
    cx._memo[key] = plan
    return plan


def _sweep_raw(plan, bits: int, flux: int, u: np.ndarray) -> tuple[int, int]:
    """One full sweep in fixed edge-index order on raw bit masks."""
    if plan[0] == "uniform":
        _, cob, degs, table, kmax = plan
        for e in range(len(cob)):
            mask = cob[e]
            c = (flux & mask).bit_count()
            if (bits >> e) & 1:
                c = degs[e] - c
            # s = degs[e] - 2c, table index s + kmax
            p1 = table[degs[e] - 2 * c + kmax]
            want = 1 if u[e] < p1 else 0
            if want != ((bits >> e) & 1):
                bits ^= 1 << e
                flux ^= mask
        return bits, flux
    _, cob, degs, betas, plaqs = plan
    for e in range(len(cob)):
        mask = cob[e]
        sig = (bits >> e) & 1
        m = 0.0
        for p in plaqs[e]:
            other = ((flux >> p) & 1) ^ sig
            m += -betas[p] if other else betas[p]
        p1 = 1.0 / (1.0 + math.exp(4.0 * m))
        want = 1 if u[e] < p1 else 0
        if want != sig:
            bits ^= 1 << e
            flux ^= mask
    return bits, flux


def _frustrated_mask(cx: CellComplex, bits: int) -> int:
    out = 0
    for p, mask in enumerate(cx.plaq_edge_mask):
        out |= ((bits & mask).bit_count() & 1) << p
    return out


def heatbath_sweep(
    cx: CellComplex, sigma: GaugeField, params: CouplingParams, rng: np.random.Generator
) -> GaugeField:
    """Resample every positive edge from its exact conditional, in index order."""
    plan = _heatbath_plan(cx, params)
    u = rng.random(cx.n_edges)
    bits, _ = _sweep_raw(plan, sigma.bits, _frustrated_mask(cx, sigma.bits), u)
    return GaugeField(bits, cx.n_edges)


# -- Swendsen-Wang alternation -----------------------------------------------------------


def _flat_solution_set(cx: CellComplex, plaq_mask: int) -> gf2.AffineSolutionSet:
    key = ("flat_sols", plaq_mask)
    if key not in cx._memo:
        rows = [
            cx.plaq_edge_mask[p]
            for p in range(cx.n_plaquettes)
            if (plaq_mask >> p) & 1
        ]
        cx._memo[key] = gf2.solve_affine(
            gf2.BitMatrix.from_rows(rows, cx.n_edges), 0
        )
    return cx._memo[key]


def _p_rc_floats(cx: CellComplex, params: CouplingParams) -> list[float]:
    key = ("p_rc_float", params.beta if params.is_uniform else ("per",) + tuple(params.beta))
    if key not in cx._memo:
        if params.is_uniform:
            cx._memo[key] = [float(params.p_rc)] * cx.n_plaquettes
        else:
            cx._memo[key] = [float(p) for p in params.p_rc]
    return cx._memo[key]


def _gauge_to_cluster_half(
    cx: CellComplex, sigma_bits: int, params: CouplingParams, rng: np.random.Generator
) -> int:
    p_rc = _p_rc_floats(cx, params)
    flux = _frustrated_mask(cx, sigma_bits)
    u = rng.random(cx.n_plaquettes)
    mask = 0
    for p in range(cx.n_plaquettes):
        if not (flux >> p) & 1 and u[p] < p_rc[p]:
            mask |= 1 << p
    return mask


def sw_update(
    cx: CellComplex,
    state: GaugeField | TwoFormZ2,
    params: CouplingParams,
    rng: np.random.Generator,
    gamma: Loop | None = None,
) -> GaugeField | TwoFormZ2:
    """One full Swendsen-Wang alternation, preserving the kind of the input.

    Cluster half-step: draw a uniform field among those flat on P. Gauge
    half-step: include each flat plaquette independently with probability
    1 - exp(-4 beta_p). Only the sourceless dynamics is defined.
    """
    if gamma is not None and not gamma.is_empty:
        raise ValueError("Swendsen-Wang dynamics is defined for gamma = 0 only")
    if isinstance(state, TwoFormZ2):
        sol = _flat_solution_set(cx, state.bits)
        sigma_bits = gf2.uniform_solution(sol, rng)
        return TwoFormZ2(_gauge_to_cluster_half(cx, sigma_bits, params, rng), cx.n_plaquettes)
    if isinstance(state, GaugeField):
        mask = _gauge_to_cluster_half(cx, state.bits, params, rng)
        sol = _flat_solution_set(cx, mask)
        return GaugeField(gf2.uniform_solution(sol, rng), cx.n_edges)
    raise TypeError(f"sw_update expects a GaugeField or TwoFormZ2, got {type(state)!r}")


def sample_bernoulli(
    cx: CellComplex, p, rng: np.random.Generator
) -> TwoFormZ2:
    """Independent plaquette percolation with inclusion probability p."""
    probs = [float(x) for x in (p if isinstance(p, (list, tuple)) else [p] * cx.n_plaquettes)]
    if len(probs) != cx.n_plaquettes:
        raise ValueError("need one probability per plaquette")
    if any(not 0 <= x <= 1 for x in probs):
        raise ValueError("probabilities must lie in [0, 1]")
    u = rng.random(cx.n_plaquettes)
    mask = 0
    for p_i in range(cx.n_plaquettes):
        if u[p_i] < probs[p_i]:
            mask |= 1 << p_i
    return TwoFormZ2(mask, cx.n_plaquettes)


# -- coupling transforms --------------------------------------------------------------


def conditioned_poisson(two_beta: float, parity: int, rng: np.random.Generator) -> int:
    """Poisson(2 beta) conditioned on parity.

    Rejection sampling, with an inverse-CDF fallback on the parity-restricted
    pmf when 2 beta < 0.05 (odd draws are too rare to reject for).
    """
    if two_beta >= 0.05:
        while True:
            k = int(rng.poisson(two_beta))
            if k & 1 == parity:
                return k
    norm = math.sinh(two_beta) if parity else math.cosh(two_beta)
    u = rng.random() * norm
    k = parity
    term = two_beta**parity / math.factorial(parity)
    acc = term
    while acc < u:
        k += 2
        term *= two_beta * two_beta / (k * (k - 1))
        acc += term
    return k


def apply_coupling(
    cx: CellComplex,
    step: str,
    config,
    gamma: Loop,
    params: CouplingParams,
    rng: np.random.Generator,
):
    """Apply one sampled coupling transform to a configuration.

    ``parity`` maps a current to its mod-2 two-form; ``lift`` inverts it with
    per-plaquette parity-conditioned Poisson draws; ``hat-from-ht``,
    ``cluster-from-ht``, ``cluster-from-hat`` sprinkle independent Bernoulli
    plaquettes (p1, p2, p3) onto a two-form; ``subsurface`` draws a uniform
    sub-surface of a cluster configuration with boundary gamma.
    """
    if step == "parity":
        if not isinstance(config, Current):
            raise TypeError("parity expects a Current")
        return TwoFormZ2(config.parity_mask, cx.n_plaquettes)
    if step == "lift":
        if not isinstance(config, TwoFormZ2):
            raise TypeError("lift expects a TwoFormZ2")
        betas = [float(as_mpf(b)) for b in params.betas(cx.n_plaquettes)]
        values = tuple(
            conditioned_poisson(2.0 * betas[p], (config.bits >> p) & 1, rng)
            for p in range(cx.n_plaquettes)
        )
        return Current(values)
    if step in ("hat-from-ht", "cluster-from-ht", "cluster-from-hat"):
        if not isinstance(config, TwoFormZ2):
            raise TypeError(f"{step} expects a TwoFormZ2")
        prob = {
            "hat-from-ht": params.p1,
            "cluster-from-ht": params.p2,
            "cluster-from-hat": params.p3,
        }[step]
        probs = list(prob) if isinstance(prob, tuple) else [prob] * cx.n_plaquettes
        x = sample_bernoulli(cx, [float(p) for p in probs], rng)
        return TwoFormZ2(config.bits | x.bits, cx.n_plaquettes)
    if step == "subsurface":
        if not isinstance(config, TwoFormZ2):
            raise TypeError("subsurface expects a TwoFormZ2")
        sol = gf2.solve_affine_restricted(
            cx.edge_plaq_mask, cx.n_plaquettes, config.bits, gamma.support
        )
        if not sol.feasible:
            raise ValueError("no bounding subsurface: configuration is outside P_gamma")
        return TwoFormZ2(gf2.uniform_solution(sol, rng), cx.n_plaquettes)
    raise ValueError(f"unknown coupling step {step!r}")


# -- chain driver ---------------------------------------------------------------------

Observable = tuple[str, Callable[[CellComplex, object], float]]


def run_chain(
    cx: CellComplex, spec: ChainSpec, observables: Sequence[Observable]
) -> dict:
    """Run one chain and record observables every ``thinning`` sweeps after burn-in.

    Output is deterministic given the spec (including its RngSpec).
    """
    spec.validate(cx)
    rng = spec.rng.generator()
    names = [name for name, _ in observables]
    series: dict[str, list[float]] = {name: [] for name in names}
    sweeps_recorded: list[int] = []

    if spec.kind == "gauge":
        plan = _heatbath_plan(cx, spec.params)
        bits = 0
        flux = 0
        for s in range(1, spec.sweeps + 1):
            u = rng.random(cx.n_edges)
            bits, flux = _sweep_raw(plan, bits, flux, u)
            if s > spec.burn_in and (s - spec.burn_in) % spec.thinning == 0:
                state = GaugeField(bits, cx.n_edges)
                sweeps_recorded.append(s)
                for name, fn in observables:
                    series[name].append(float(fn(cx, state)))
    else:
        state = TwoFormZ2.zero(cx)
        for s in range(1, spec.sweeps + 1):
            state = sw_update(cx, state, spec.params, rng)
            if s > spec.burn_in and (s - spec.burn_in) % spec.thinning == 0:
                sweeps_recorded.append(s)
                for name, fn in observables:
                    series[name].append(float(fn(cx, state)))

    return {
        "kind": spec.kind,
        "stream": spec.rng.stream,
        "sweeps": sweeps_recorded,
        "series": {name: np.asarray(vals) for name, vals in series.items()},
    }


def series_records(result: dict) -> list[dict]:
    """Flatten a run_chain result into {chain, sweep, name, value} records."""
    records = []
    for name in sorted(result["series"]):
        vals = result["series"][name]
        for sweep, value in zip(result["sweeps"], vals):
            records.append(
                {
                    "chain": result["stream"],
                    "sweep": sweep,
                    "name": name,
                    "value": float(value),
                }
            )
    records.sort(key=lambda r: (r["chain"], r["sweep"], r["name"]))
    return records


# -- exact kernel pushforwards (stationarity checks) ------------------------------------


def heatbath_pushforward(
    cx: CellComplex, table: MeasureTable, params: CouplingParams
) -> MeasureTable:
    """Apply one exact full heat-bath sweep to a distribution over gauge fields."""
    betas = params.betas_mpf(cx.n_plaquettes)
    uniform = params.is_uniform
    if uniform:
        y4 = mp.e ** (4 * betas[0])
        kmax = max((m.bit_count() for m in cx.edge_plaq_mask), default=0)
        prob1 = {s: 1 / (1 + y4**s) for s in range(-kmax, kmax + 1)}
    dist = dict(table.entries)
    for e in range(cx.n_edges):
        bit = 1 << e
        plaqs = [p for p in range(cx.n_plaquettes) if (cx.edge_plaq_mask[e] >> p) & 1]
        new: dict[int, mpf] = {}
        for state, mass in dist.items():
            low = state & ~bit
            if uniform:
                s = 0
                for p in plaqs:
                    o = (low & cx.plaq_edge_mask[p]).bit_count() & 1
                    s += -1 if o else 1
                p1 = prob1[s]
            else:
                m = mpf(0)
                for p in plaqs:
                    o = (low & cx.plaq_edge_mask[p]).bit_count() & 1
                    m += -betas[p] if o else betas[p]
                p1 = 1 / (1 + mp.e ** (4 * m))
            new[low] = new.get(low, mpf(0)) + mass * (1 - p1)
            high = low | bit
            new[high] = new.get(high, mpf(0)) + mass * p1
        dist = new
    return MeasureTable("gauge", cx.n_edges, dist)


def sw_pushforward(
    cx: CellComplex, table: MeasureTable, params: CouplingParams
) -> MeasureTable:
    """Apply one exact Swendsen-Wang alternation to a cluster distribution."""
    return push_gauge_to_cluster(cx, push_cluster_to_gauge(cx, table), params)
