import numpy as np
import pytest

from z2gauge import gf2


def brute_force_solutions(rows, ncols, b):
    """Independent oracle: enumerate all 2^ncols vectors with numpy."""
    dense = np.array(
        [[(r >> j) & 1 for j in range(ncols)] for r in rows], dtype=np.uint8
    )
    target = np.array([(b >> i) & 1 for i in range(len(rows))], dtype=np.uint8)
    xs = np.arange(1 << ncols, dtype=np.int64)
    bits = ((xs[:, None] >> np.arange(ncols)) & 1).astype(np.uint8)
    if len(rows):
        prods = bits @ dense.T % 2
        ok = (prods == target).all(axis=1)
    else:
        ok = np.ones(len(xs), dtype=bool)
    return set(int(x) for x in xs[ok])


def test_identity_system():
    a = gf2.BitMatrix.from_dense([[1, 0], [0, 1]])
    sol = gf2.solve_affine(a, 0b01)
    assert sol.feasible and sol.particular == 0b01 and sol.kernel_dim == 0


def test_single_row_two_cols():
    a = gf2.BitMatrix.from_dense([[1, 1]])
    sol = gf2.solve_affine(a, 0b1)
    assert sol.feasible
    assert sol.particular == 0b01
    assert sol.kernel == (0b11,)
    assert sol.count == 2


def test_cube_closed_forms(cube):
    # source system delta(omega) = 0 over the cube's 6 plaquettes
    a = gf2.BitMatrix.from_rows(cube.edge_plaq_mask, cube.n_plaquettes)
    sol = gf2.solve_affine(a, 0)
    brute = brute_force_solutions(cube.edge_plaq_mask, cube.n_plaquettes, 0)
    assert brute == {0, 0b111111}
    assert sol.kernel_dim == 1
    assert set(sol.solutions()) == brute


def test_random_systems_match_brute_force():
    rng = np.random.default_rng(7)
    # mostly small systems, plus a few at the full 20-column size
    sizes = [int(rng.integers(1, 15)) for _ in range(47)] + [18, 19, 20]
    for ncols in sizes:
        nrows = int(rng.integers(1, 12)) if ncols < 15 else int(rng.integers(2, 7))
        rows = [int(rng.integers(0, 1 << ncols)) for _ in range(nrows)]
        b = int(rng.integers(0, 1 << nrows))
        mat = gf2.BitMatrix.from_rows(rows, ncols)
        sol = gf2.solve_affine(mat, b)
        brute = brute_force_solutions(rows, ncols, b)
        if not sol.feasible:
            assert brute == set()
            continue
        assert len(brute) == sol.count
        assert sol.particular in brute
        # every kernel vector maps to zero and the basis is independent
        for v in sol.kernel:
            assert mat.matvec(v) == 0
        assert gf2.rank(list(sol.kernel), ncols) == sol.kernel_dim
        # particular + span(kernel) subset of brute, same size => equal
        assert mat.matvec(sol.particular) == b


def test_rref_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(20):
        ncols = int(rng.integers(1, 16))
        rows = [int(rng.integers(0, 1 << ncols)) for _ in range(int(rng.integers(1, 10)))]
        pivots, reduced = gf2.rref(rows, ncols)
        again = gf2.rref(reduced, ncols)
        assert again == (pivots, reduced)


def test_solve_dimension_mismatch():
    a = gf2.BitMatrix.from_dense([[1, 0]])
    with pytest.raises(ValueError):
        gf2.solve_affine(a, 0b10)  # rhs bit outside the single row


def test_uniform_solution_unique_case():
    a = gf2.BitMatrix.from_dense([[1, 0], [0, 1]])
    sol = gf2.solve_affine(a, 0b11)
    rng = np.random.default_rng(0)
    assert all(gf2.uniform_solution(sol, rng) == 0b11 for _ in range(10))


def test_uniform_solution_cube_frequencies(cube):
    a = gf2.BitMatrix.from_rows(cube.edge_plaq_mask, cube.n_plaquettes)
    sol = gf2.solve_affine(a, 0)
    rng = np.random.default_rng(123)
    draws = [gf2.uniform_solution(sol, rng) for _ in range(10_000)]
    for x in draws[:100]:
        assert a.matvec(x) == 0
    k = sum(1 for x in draws if x == 0)
    # binomial(10^4, 1/2): 3 sigma = 150
    assert abs(k - 5000) <= 150


def test_uniform_solution_infeasible_errors():
    a = gf2.BitMatrix.from_dense([[1, 1], [1, 1]])
    sol = gf2.solve_affine(a, 0b01)
    assert not sol.feasible
    with pytest.raises(ValueError):
        gf2.uniform_solution(sol, np.random.default_rng(0))


def test_betti_empty_set(cube):
    assert gf2.betti_b1(cube, []) == cube.n_edges


def test_betti_cube_full_and_single(cube):
    # independent oracle: count gauge fields flat on all six faces
    count = 0
    for sigma in range(1 << cube.n_edges):
        if all(
            (sigma & cube.plaq_edge_mask[p]).bit_count() % 2 == 0
            for p in range(cube.n_plaquettes)
        ):
            count += 1
    assert count == 128  # frozen: 2^7
    assert gf2.betti_b1(cube, range(6)) == 7
    assert gf2.betti_b1(cube, [0]) == 11


def test_betti_matches_brute_force_on_small_complexes(sheet, strip, sheet22):
    rng = np.random.default_rng(5)
    for cx in (sheet, strip, sheet22):
        for _ in range(5):
            mask = int(rng.integers(0, 1 << cx.n_plaquettes))
            count = 0
            for sigma in range(1 << cx.n_edges):
                if all(
                    (sigma & cx.plaq_edge_mask[p]).bit_count() % 2 == 0
                    for p in range(cx.n_plaquettes)
                    if (mask >> p) & 1
                ):
                    count += 1
            assert count == 1 << gf2.betti_b1(cx, mask)


def test_betti_monotone_under_nesting(cube):
    rng = np.random.default_rng(17)
    for _ in range(10):
        order = rng.permutation(cube.n_plaquettes)
        prev = gf2.betti_b1(cube, [])
        chain = []
        for p in order:
            chain.append(int(p))
            cur = gf2.betti_b1(cube, chain)
            assert cur <= prev
            prev = cur


def test_betti_invalid_index(cube):
    with pytest.raises(ValueError):
        gf2.betti_b1(cube, [99])


def test_solve_affine_restricted_stays_in_columns(cube):
    sol = gf2.solve_affine_restricted(
        cube.edge_plaq_mask, cube.n_plaquettes, 0b000011, 0
    )
    assert sol.feasible
    for x in sol.solutions():
        assert x & ~0b000011 == 0
