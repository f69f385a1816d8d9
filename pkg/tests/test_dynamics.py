import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pwabarrier import fixtures as fx
from pwabarrier.dynamics import (
    AffinePiece,
    PWADynamics,
    ReLUNetwork,
    eval_dynamics,
    pwa_interpolate,
    relu_to_pwa,
    simulate,
    simulate_batch,
)
from pwabarrier.errors import DegenerateArrangement, DegenerateSimplex, OutOfDomain
from pwabarrier.geometry import Partition, Polytope, grid_partition, uniform_refine

BOX = Polytope.box([-1, -1], [1, 1])


def test_affine_piece_validation():
    with pytest.raises(ValueError):
        AffinePiece(np.eye(2), [0, 0, 0])
    with pytest.raises(ValueError):
        AffinePiece([[np.nan, 0], [0, 1]], [0, 0])


def test_eval_piece():
    d = PWADynamics(Partition([Polytope.box([-3, -3], [3, 3])], Polytope.box([-3, -3], [3, 3])),
                    [AffinePiece(-np.eye(2), [0, 0])])
    assert np.allclose(eval_dynamics(d, [1, 2]), [-1, -2])
    with pytest.raises(OutOfDomain):
        eval_dynamics(d, [4, 0])


def test_single_neuron_two_cells():
    d = relu_to_pwa(fx.single_neuron(), BOX)
    assert len(d.partition) == 2
    on = d.partition.locate(np.array([[0.5, 0.0]]))[0]
    off = d.partition.locate(np.array([[-0.5, 0.0]]))[0]
    assert np.allclose(d.A[on], [[1, 0], [0, 0]]) and np.allclose(d.A[off], 0)


def test_two_generic_neurons_four_cells():
    net = ReLUNetwork([[1, 0.3], [-0.2, 1]], [0.1, -0.2], np.eye(2), [0, 0])
    d = relu_to_pwa(net, BOX)
    X = np.random.default_rng(0).uniform(-1, 1, size=(5000, 2))
    assert len(d.partition) == len({tuple(p) for p in net.pattern(X)}) == 4


def test_duplicate_neuron_rejected():
    net = ReLUNetwork([[1, 0], [2, 0]], [0.5, 1.0], np.eye(2), [0, 0])
    with pytest.raises(DegenerateArrangement, match="perturb"):
        relu_to_pwa(net, BOX)


def test_network_shape_validation():
    with pytest.raises(ValueError):
        ReLUNetwork([[1, 0]], [0, 0], [[1], [0]], [0, 0])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_relu_conversion_exact(seed, m):
    rng = np.random.default_rng(seed)
    net = ReLUNetwork(rng.normal(size=(m, 2)), rng.normal(size=m), rng.normal(size=(2, m)), rng.normal(size=2))
    dom = Polytope.box([-np.pi] * 2, [np.pi] * 2)
    d = relu_to_pwa(net, dom)
    X = rng.uniform(-np.pi, np.pi, size=(2000, 2))
    assert np.max(np.abs(d(X) - net(X))) <= 1e-9
    assert d.continuity_gap() <= 1e-6
    assert d.partition.volume == pytest.approx(dom.volume)
    # constant activation pattern inside each region
    for i, cell in enumerate(d.partition.cells):
        lam = rng.dirichlet(np.ones(len(cell.vertices)), size=10)
        pats = net.pattern(lam @ cell.vertices)
        z = (lam @ cell.vertices) @ net.W1.T + net.b1
        firm = np.abs(z) > 1e-9
        assert np.all((pats == pats[0]) | ~firm)


def test_linear_field_reproduced():
    d = pwa_interpolate(lambda X: -X, grid_partition(BOX, 3))
    assert np.allclose(d.A, -np.eye(2)) and np.allclose(d.a, 0)


def test_interpolation_exact_at_vertices():
    d = fx.pendulum_system(4)
    for cell, A, a in zip(d.partition.cells, d.A, d.a):
        assert np.allclose(cell.vertices @ A.T + a, fx.pendulum_field(cell.vertices), atol=1e-12)
    assert d.continuity_gap() <= 1e-9


def test_interpolation_error_shrinks():
    field = lambda X: np.column_stack([np.sin(X[:, 0]), np.sin(X[:, 1])])

    def err(part):
        d = pwa_interpolate(field, part)
        C = np.array([c.centroid for c in part.cells])
        return np.max(np.abs(d(C) - field(C)))

    p = grid_partition(fx.PENDULUM_DOMAIN, 8)
    q = uniform_refine(p)  # every cell bisected once
    r = uniform_refine(q)  # edge lengths halved
    assert err(p) / err(q) > 1.25
    assert err(p) / err(r) > 3.0  # second order in h


def test_degenerate_simplex():
    flat = Polytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1], vertices=[[0, 0], [1, 0], [2, 0]])
    with pytest.raises(DegenerateSimplex):
        pwa_interpolate(lambda X: X, Partition([flat], BOX))


def test_facet_values_agree():
    d = fx.pendulum_system(4)
    reg = d.partition.registry
    for k, cells in enumerate(reg.vertex_cells):
        vals = d.A[cells] @ reg.points[k] + d.a[cells]
        assert np.ptp(vals, axis=0).max() <= 1e-6


def test_rk4_endpoint():
    tr = simulate(fx.linear_system(-1.0), [1.0, 0.0], 1e-3, 1.0)
    assert tr.times[-1] == pytest.approx(1.0)
    assert abs(tr.states[-1, 0] - np.exp(-1)) <= 1e-6


def test_rk4_order():
    d = fx.linear_system(-1.0)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        tr = simulate(d, [1.0, 0.5], dt, 1.0)
        errs.append(np.abs(tr.states[-1] - np.exp(-1) * np.array([1.0, 0.5])).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5)


def test_equilibrium_stays_put(pendulum):
    tr = simulate(pendulum, [0.0, 0.0], 1e-2, 10.0)
    assert np.abs(tr.states).max() <= 1e-6


def test_domain_exit_event():
    tr = simulate(fx.linear_system(+1.0), [0.5, 0.0], 1e-2, 5.0)
    assert tr.exited and tr.events[0][0] == "DomainExit"
    assert 0.69 < tr.exit_time < 0.71  # 0.5 e^t = 1
    assert np.all(np.abs(tr.states) <= 1.0)


def test_start_outside_raises():
    with pytest.raises(OutOfDomain):
        simulate(fx.linear_system(-1.0), [2.0, 0.0], 1e-2, 1.0)


def test_batch_matches_single():
    d = fx.pendulum_system(4)
    X0 = np.array([[0.5, 0.2], [-1.0, 1.0]])
    _, states, exit_step = simulate_batch(d, X0, 1e-2, 2.0)
    for b, x0 in enumerate(X0):
        tr = simulate(d, x0, 1e-2, 2.0)
        assert np.allclose(states[: len(tr.times), b], tr.states)
