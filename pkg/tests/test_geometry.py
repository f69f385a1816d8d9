import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pwabarrier.errors import DomainMismatch, NotSimplicial, UnboundedPolytope
from pwabarrier.geometry import (
    Partition,
    Polytope,
    build_index_sets,
    dedupe_points,
    enumerate_vertices,
    grid_partition,
    intersect,
    product_partition,
    refine_cells,
    triangulate,
    uniform_refine,
)

BOX = Polytope.box([-1, -1], [1, 1])


def vset(X, nd=7):
    return {tuple(np.round(np.asarray(x, float), nd) + 0.0) for x in X}


def pairwise_oracle(E, e, tol=1e-9):
    """Every feasible intersection of two boundary lines."""
    pts = []
    for i, j in itertools.combinations(range(len(e)), 2):
        M = E[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, -e[[i, j]])
        if np.all(E @ x + e >= -tol):
            pts.append(x)
    return dedupe_points(np.array(pts))[0] if pts else np.zeros((0, 2))


def random_polygon(rng, m=6):
    """Random bounded H-rep: tangent lines of a jittered circle."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    E = -np.column_stack([np.cos(ang), np.sin(ang)])
    e = rng.uniform(0.5, 1.5, m)
    return np.vstack([E, -np.eye(2), np.eye(2)]), np.concatenate([e, [3, 3, 3, 3]])


def test_box_vertices():
    E = [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert vset(enumerate_vertices(Polytope(E, [1, 1, 1, 1]))) == vset(itertools.product([-1, 1], repeat=2))


def test_unit_simplex_vertices():
    V = enumerate_vertices(Polytope([[1, 0], [0, 1], [-1, -1]], [0, 0, 1]))
    assert vset(V) == {(0, 0), (1, 0), (0, 1)}


def test_unbounded_raises():
    with pytest.raises(UnboundedPolytope):
        enumerate_vertices(Polytope([[1, 0], [0, 1]], [0, 0]))


def test_lower_dimensional_gives_empty_list():
    # the segment x2 = 0, 0 <= x1 <= 1
    p = Polytope([[0, 1], [0, -1], [1, 0], [-1, 0]], [0, 0, 0, 1])
    assert enumerate_vertices(p) == []


@pytest.mark.parametrize("seed", range(20))
def test_vertices_match_pairwise_oracle(seed):
    p = Polytope(*random_polygon(np.random.default_rng(seed)))
    assert vset(enumerate_vertices(p)) == vset(pairwise_oracle(p.E, p.e))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_vertex_roundtrip(seed):
    rng = np.random.default_rng(seed)
    E, e = random_polygon(rng)
    p = Polytope(E, e)
    q = Polytope.from_points(p.vertices)
    # points of conv(vertices) satisfy the original H-rep and vice versa
    lam = rng.dirichlet(np.ones(len(p.vertices)), size=200)
    X = lam @ p.vertices
    assert np.all(p.contains(X))
    Y = rng.uniform(-3, 3, size=(2000, 2))
    assert np.array_equal(p.contains(Y, 1e-9), q.contains(Y, 1e-9))


def test_intersect_halfspace():
    q = intersect(BOX, Polytope([[1, 0]], [0]))
    assert q.is_full_dim
    assert vset(q.vertices) == {(0, -1), (0, 1), (1, -1), (1, 1)}
    assert len(q.e) == 4  # redundant box row x1 >= -1 dropped


def test_intersect_disjoint_is_empty():
    q = intersect(BOX, Polytope.box([2, 2], [3, 3]))
    assert q.is_empty and not q.is_full_dim


def test_intersect_touching_is_one_dimensional():
    q = intersect(BOX, Polytope.box([1, -1], [2, 1]))
    assert q.dim == 1


def test_triangulate_hexagon_area():
    ang = np.linspace(0, 2 * np.pi, 7)[:-1]
    hexagon = Polytope.from_points(np.column_stack([np.cos(ang), np.sin(ang)]))
    tris = triangulate(hexagon)
    assert len(tris) == 4
    assert sum(t.volume for t in tris) == pytest.approx(3 * np.sqrt(3) / 2, abs=1e-12)


def test_triangulate_cube_volume():
    cube = Polytope.box([0, 0, 0], [1, 2, 3])
    assert cube.volume == pytest.approx(6.0)
    assert all(t.is_simplex for t in triangulate(cube))


def split(axis, at=0.0):
    lo = np.array([-1.0, -1.0])
    hi = np.array([1.0, 1.0])
    a_hi, b_lo = hi.copy(), lo.copy()
    a_hi[axis] = at
    b_lo[axis] = at
    return Partition([Polytope.box(lo, a_hi), Polytope.box(b_lo, hi)], BOX)


def test_product_of_splits_gives_quadrants():
    prod = product_partition([split(0), split(1)])
    assert len(prod) == 4
    assert all(c.volume == pytest.approx(1.0) for c in prod.cells)


def test_product_self_is_idempotent():
    p = grid_partition(BOX, 3)
    prod = product_partition([p, p])
    assert len(prod) == len(p)
    assert sorted(c.volume for c in prod.cells) == pytest.approx(sorted(c.volume for c in p.cells))


def test_product_domain_mismatch():
    other = Partition([Polytope.box([-2, -2], [2, 2])], Polytope.box([-2, -2], [2, 2]))
    with pytest.raises(DomainMismatch):
        product_partition([split(0), other])


@pytest.mark.parametrize("seed", range(5))
def test_product_region_count_oracle(seed):
    rng = np.random.default_rng(seed)
    cuts = [(int(rng.integers(2)), float(rng.uniform(-0.8, 0.8))) for _ in range(3)]
    prod = product_partition([split(a, c) for a, c in cuts])
    # brute force: classify samples by which side of each cut they fall
    X = rng.uniform(-1, 1, size=(20000, 2))
    labels = {tuple(X[k, a] > c for a, c in cuts) for k in range(len(X))}
    assert len(prod) == len(labels)
    # interiors disjoint, union covers
    Y = rng.uniform(-1, 1, size=(2000, 2))
    strict = np.array([c.contains(Y, -1e-9) for c in prod.cells])
    assert strict.sum(axis=0).max() <= 1
    assert np.all(prod.locate(Y) >= 0)
    assert prod.volume == pytest.approx(4.0)


def test_product_associative():
    a, b, c = grid_partition(BOX, 2), split(0, 0.3), split(1, -0.4)
    left = product_partition([product_partition([a, b]), c])
    right = product_partition([a, product_partition([b, c])])
    assert len(left) == len(right)
    key = lambda p: sorted(tuple(np.round(cell.centroid, 9)) for cell in p.cells)
    assert key(left) == key(right)


def two_triangles():
    return Partition([Polytope.simplex([[-1, -1], [1, -1], [1, 1]]),
                      Polytope.simplex([[-1, -1], [1, 1], [-1, 1]])], BOX)


def test_refine_single_triangle():
    tri = Polytope.simplex([[0, 0], [2, 0], [0, 1]])
    p = refine_cells(Partition([tri], tri), [0])
    assert len(p) == 2
    assert {(1.0, 0.5)} <= vset(p.registry.points)


def test_refine_propagates_across_shared_longest_edge():
    p = refine_cells(two_triangles(), [0])
    assert len(p) == 4
    assert p.is_conforming()


def test_refine_empty_flags_is_noop():
    p = two_triangles()
    assert refine_cells(p, []) is p


def test_refine_rejects_non_simplicial():
    with pytest.raises(NotSimplicial):
        refine_cells(split(0), [0])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=6), st.integers(0, 3))
def test_refinement_properties(flags, rounds):
    p = grid_partition(BOX, 2)
    for r in range(rounds + 1):
        q = refine_cells(p, sorted({f % len(p) for f in flags}))
        assert q.refines(p)
        assert q.is_conforming()
        assert q.volume == pytest.approx(p.volume, abs=1e-9)
        p = q


def test_index_sets_two_triangles():
    ix = build_index_sets(two_triangles())
    assert len(ix.boundary_pairs) == 6 and ix.interior_pairs == []
    assert ix.boundary_cells == [0, 1]


def test_index_sets_center_vertex():
    ix = build_index_sets(grid_partition(BOX, 1, "cross"))
    assert len(ix.interior_pairs) == 4
    assert ix.interior_cells == [0, 1, 2, 3]


def test_index_sets_match_reclassification():
    dom = Polytope.box([-np.pi] * 2, [np.pi] * 2)
    p = grid_partition(dom, 4)
    p = refine_cells(p, [0, 5, 9, 17])
    p = refine_cells(p, list(range(0, len(p), 3)))
    ix = build_index_sets(p)
    reg = p.registry
    on = np.isclose(np.max(np.abs(reg.points), axis=1), np.pi, atol=1e-9)
    expect_b = {(i, k) for i, ids in enumerate(reg.cell_vertices) for k in ids if on[k]}
    assert set(map(tuple, ix.boundary_pairs)) == expect_b
    all_pairs = {(i, k) for i, ids in enumerate(reg.cell_vertices) for k in ids}
    assert set(map(tuple, ix.interior_pairs)) == all_pairs - expect_b


def test_uniform_refine_quarters_area():
    p = uniform_refine(grid_partition(BOX, 2))
    assert p.is_conforming() and len(p) >= 16
    assert p.volume == pytest.approx(4.0)


def test_locate_and_cover(rng):
    p = grid_partition(BOX, 5)
    X = rng.uniform(-1, 1, size=(1000, 2))
    idx = p.locate(X)
    assert np.all(idx >= 0)
    assert all(p.cells[i].contains(x) for i, x in zip(idx, X))
    assert p.locate(np.array([[1.5, 0.0]]))[0] == -1


def test_dedupe_large_matches_small(rng):
    X = rng.uniform(size=(100, 2))
    Y = np.vstack([X, X + 1e-9])
    U, inv = dedupe_points(Y)
    assert len(U) == 100 and np.all(inv[:100] == inv[100:])
