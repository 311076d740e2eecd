"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
complete. Every tolerance is pinned here; nothing is deferred to later
calibration.
"""

import json
import math
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
from mpmath import mp, mpf

from z2gauge import build_complex
from z2gauge.forms import (
    CouplingParams,
    empty_loop,
    plaquette_loop,
    rectangle_loop,
)
from z2gauge import estimators, oracle, samplers
from z2gauge.cli import payload_lines
from z2gauge.estimators import (
    DEFAULT_BATCHES,
    check_area_law,
    check_domination,
    check_griffiths,
    estimate_wilson,
    wilson_observable,
)
from z2gauge.samplers import ChainSpec, RngSpec


def announce(num, ok, detail):
    line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def complexes_for_identity():
    return [
        ("single-plaquette sheet", build_complex(3, [2, 2, 1])),
        ("2x2 plaquette sheet", build_complex(3, [3, 3, 1])),
        ("unit cube", build_complex(3, [2, 2, 2])),
        ("3x3x2 box", build_complex(3, [3, 3, 2])),
    ]


def identity_loops(cx):
    loops = [empty_loop(cx), plaquette_loop(cx, 0)]
    try:
        loops.append(rectangle_loop(cx, (0, 0, 0), (0, 1), 1, 2))
    except ValueError:
        pass  # the 1x2 rectangle does not fit in every test box
    return loops


def test_criterion_1_current_expansion_identity():
    rng = np.random.default_rng(20240901)
    checked = 0
    for name, cx in complexes_for_identity():
        loops = identity_loops(cx)
        for gamma in loops:
            for beta in (0.1, 0.3, 0.5, 1.0):
                rep = oracle.verify_current_expansion(cx, gamma, CouplingParams(beta))
                assert rep.passed, (name, gamma.label, beta, rep.to_dict())
                checked += 1
        betas = [float(x) for x in rng.uniform(0.05, 0.5, cx.n_plaquettes)]
        for gamma in loops:
            rep = oracle.verify_current_expansion(cx, gamma, CouplingParams(betas))
            assert rep.passed, (name, gamma.label, "per-plaquette", rep.to_dict())
            checked += 1
    announce(1, True, f"current expansion identity holds at 1e-10 in {checked} cases")


def test_criterion_2_switching_exact():
    sheet = build_complex(3, [2, 2, 1])
    cube = build_complex(3, [2, 2, 2])
    betas = [Fraction(1, 4), Fraction(1, 2), Fraction(1)]
    functionals = ["one", "mass", oracle.switching_functional("occupied", 0)]
    checked = 0
    for cx, K in ((sheet, 6), (cube, 4)):
        gammas = [empty_loop(cx), plaquette_loop(cx, 0)]
        if cx.n_plaquettes > 1:
            gammas.append(plaquette_loop(cx, 1))
        for g1 in gammas:
            for g2 in gammas:
                for fn in functionals:
                    for beta in betas:
                        rep = oracle.verify_switching(
                            cx, g1, g2, fn, K, CouplingParams(beta)
                        )
                        assert rep.passed and rep.lhs == rep.rhs, (
                            cx.describe(), g1.label, g2.label, beta, rep.to_dict()
                        )
                        checked += 1
    announce(2, True, f"switching identity exactly equal (rationals) in {checked} cases")


def test_criterion_3_coupling_pushforwards():
    checked = 0
    worst = mpf(0)
    for cx in (build_complex(3, [2, 2, 1]), build_complex(3, [2, 2, 2])):
        for beta in (0.2, 0.6):
            params = CouplingParams(beta)
            for gamma in (empty_loop(cx), plaquette_loop(cx, 0)):
                for step in oracle.COUPLING_STEPS:
                    if step in ("gauge-to-cluster", "cluster-to-gauge") and not gamma.is_empty:
                        continue
                    rep = oracle.verify_coupling(cx, step, gamma, params)
                    assert rep.passed, (cx.describe(), step, gamma.label, beta)
                    worst = max(worst, rep.value)
                    checked += 1
    announce(3, True, f"{checked} coupling pushforwards with max TV {float(worst):.2e} <= 1e-10")


def test_criterion_4_estimator_consistency():
    sheet = build_complex(3, [2, 2, 1])
    params = CouplingParams(0.4)
    gp = plaquette_loop(sheet, 0)
    target = float(mp.tanh(0.8))

    def spec(seed):
        return ChainSpec(
            kind="gauge", params=params, sweeps=100_000, burn_in=1000,
            rng=RngSpec(seed=seed),
        )

    direct = estimate_wilson(sheet, gp, "direct", spec(101))
    cluster = estimate_wilson(sheet, gp, "cluster", spec(102))
    squared = estimate_wilson(sheet, gp, "current-squared", spec(103))
    zd = abs(direct.value - target) / direct.se
    zc = abs(cluster.value - target) / cluster.se
    zs = abs(squared.value - target**2) / squared.se
    ok = zd <= 3 and zc <= 3 and zs <= 3
    announce(
        4,
        ok,
        f"direct {direct.value:.6f} (|z|={zd:.2f}), cluster {cluster.value:.6f} "
        f"(|z|={zc:.2f}) vs tanh0.8={target:.6f}; current-squared {squared.value:.6f} "
        f"(|z|={zs:.2f}) vs tanh^2={target**2:.6f}",
    )


def test_criterion_5_griffiths_exact():
    complexes = [
        build_complex(3, [2, 2, 1]),
        build_complex(3, [3, 2, 1]),
        build_complex(3, [3, 3, 1]),
        build_complex(3, [2, 2, 2]),
    ]
    betas = [round(0.1 * k, 1) for k in range(1, 11)]
    pairs = 0
    for cx in complexes:
        assert cx.n_edges <= 12
        for p in range(cx.n_plaquettes):
            for q in range(p, cx.n_plaquettes):
                rep = check_griffiths(
                    cx, plaquette_loop(cx, p), plaquette_loop(cx, q), betas, "oracle"
                )
                assert rep.passed, (cx.describe(), p, q, rep.details)
                pairs += 1
    announce(5, True, f"Griffiths (i) and (ii) exact for {pairs} loop pairs x 10 betas, zero violations")


def test_criterion_6_area_law():
    checked = 0
    for beta in (0.02, 0.05, 0.1):
        params = CouplingParams(beta)
        cases = [
            (build_complex(3, [2, 2, 1]), (1, 1)),
            (build_complex(3, [2, 3, 1]), (1, 2)),
            (build_complex(3, [3, 3, 1]), (2, 2)),
        ]
        for cx, (w, h) in cases:
            gamma = rectangle_loop(cx, (0, 0, 0), (0, 1), w, h)
            rep = check_area_law(cx, gamma, params, "oracle")
            assert rep.passed, (cx.describe(), w, h, beta, rep.to_dict())
            bound = (8 * beta) ** (w * h) / (1 - 8 * beta)
            assert abs(float(rep.rhs) - bound) < 1e-12
            checked += 1
    big = build_complex(3, [4, 4, 4])
    params = CouplingParams(0.1)
    spec = ChainSpec(kind="gauge", params=params, sweeps=8000, burn_in=500, rng=RngSpec(seed=61))
    for w, h in ((1, 1), (2, 2)):
        gamma = estimators.centered_rectangle(big, w, h)
        rep = check_area_law(big, gamma, params, "mc", spec)
        assert rep.passed, (w, h, rep.to_dict())
        checked += 1
    announce(6, True, f"area-law bound (8b)^RT/(1-8b) holds in {checked} oracle+mc cases")


def test_criterion_7_stochastic_domination():
    cube = build_complex(3, [2, 2, 2])
    for beta in (0.2, 0.5, 1.0):
        rep = check_domination(cube, CouplingParams(beta), "exact")
        assert rep.passed, (beta, rep.details)
        assert rep.details["conditional_interval_violations"] == 0
    announce(7, True, "Bernoulli sandwich + conditional interval hold exactly at beta in {0.2, 0.5, 1.0}")


def test_criterion_8_dynamics_stationarity():
    worst = 0.0
    for cx in (build_complex(3, [2, 2, 1]), build_complex(3, [2, 2, 2])):
        for beta in (0.3, 0.7):
            params = CouplingParams(beta)
            gauge = oracle.exact_measure(cx, "gauge", empty_loop(cx), params)
            tv1 = float(samplers.heatbath_pushforward(cx, gauge, params).tv(gauge))
            cluster = oracle.exact_measure(cx, "cluster", empty_loop(cx), params)
            tv2 = float(samplers.sw_pushforward(cx, cluster, params).tv(cluster))
            worst = max(worst, tv1, tv2)
            assert tv1 <= 1e-10 and tv2 <= 1e-10, (cx.describe(), beta, tv1, tv2)
    announce(8, True, f"heat-bath and Swendsen-Wang fix their targets, max TV {worst:.2e}")


def _covariances_one_chain(cx, base_loop, others, params, sweeps, seed):
    """Covariances of W_base with each W_other from a single gauge chain."""
    obs = [wilson_observable(base_loop)] + [wilson_observable(g) for g in others]
    spec = ChainSpec(kind="gauge", params=params, sweeps=sweeps, burn_in=1000,
                     rng=RngSpec(seed=seed))
    out = samplers.run_chain(cx, spec, obs)
    xs = out["series"][obs[0][0]]
    results = []
    for (name, _), g in zip(obs[1:], others):
        ys = out["series"][name]
        centered = (xs - xs.mean()) * (ys - ys.mean())
        size = len(centered) // DEFAULT_BATCHES
        used = centered[: size * DEFAULT_BATCHES]
        bm = used.reshape(DEFAULT_BATCHES, size).mean(axis=1)
        cov = float(used.mean())
        se = float(bm.std(ddof=1) / math.sqrt(DEFAULT_BATCHES))
        results.append((estimators.loop_l1_distance(cx, base_loop, g), cov, se))
    return results


def test_criterion_9_covariance_decay_sanity():
    box = build_complex(3, [3, 3, 8])
    base = plaquette_loop(box, box.plaquette_index[((0, 0, 0), (0, 1))])
    others = [
        plaquette_loop(box, box.plaquette_index[((0, 0, d), (0, 1))]) for d in (1, 2, 3, 4)
    ]
    results = _covariances_one_chain(box, base, others, CouplingParams(0.1), 25_000, 91)
    dists = [r[0] for r in results]
    assert dists == [1, 2, 3, 4]
    ok = True
    for (d1, c1, s1), (d2, c2, s2) in zip(results, results[1:]):
        if abs(c2) > abs(c1) + 3 * math.sqrt(s1**2 + s2**2):
            ok = False
    zero = _covariances_one_chain(box, base, others[:1], CouplingParams(0.0), 6_000, 92)
    d0, c0, s0 = zero[0]
    ok0 = abs(c0) <= 3 * s0 + 1e-12
    detail = ", ".join(f"d={d}: {c:+.5f}+-{s:.5f}" for d, c, s in results)
    announce(9, ok and ok0, f"|Cov| non-increasing within 3 SE [{detail}]; beta=0 cov {c0:+.5f}+-{s0:.5f}")


def test_criterion_10_reproducibility(tmp_path):
    cfg = {
        "complex": {"m": 3, "extents": [2, 2, 1]},
        "task": "estimate",
        "gamma": {"kind": "edges", "edges": [[0, 1], [3, 1], [2, -1], [1, -1]]},
        "beta": 0.4,
        "chain": {"sweeps": 4000, "burn_in": 200, "chains": 4},
        "rng": {"seed": 2024},
        "options": {"routes": ["direct", "cluster"]},
        "output": {"path": "r.csv", "format": "csv"},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))

    def run(out, threads):
        r = subprocess.run(
            [sys.executable, "-m", "z2gauge.cli", "run", str(path),
             "--out", str(tmp_path / out), "--threads", str(threads)],
            capture_output=True, text=True,
        )
        assert r.returncode == 0, r.stderr
        return payload_lines((tmp_path / out).read_text(), "csv")

    a = run("a.csv", 1)
    b = run("b.csv", 1)
    c = run("c.csv", 4)
    ok = a == b == c and len(a) > 1
    announce(10, ok, f"payloads byte-identical across reruns and threads 1/4 ({len(a)} lines)")
