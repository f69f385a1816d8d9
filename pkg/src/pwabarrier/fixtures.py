"""Benchmark systems: the inverted pendulum, the quadratic radial field and a few toys.

Analytic fields are turned into PWA systems by interpolation on a grid. The
ReLU weight files under ``data/`` are least-squares stand-ins for trained
networks, regenerated deterministically by :func:`fit_relu`.
"""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .dynamics import PWADynamics, ReLUNetwork, pwa_interpolate
from .geometry import Polytope, grid_partition

PENDULUM_DOMAIN = Polytope.box([-np.pi, -np.pi], [np.pi, np.pi])
EXAMPLE2_DOMAIN = Polytope.box([-2.0, -2.0], [2.0, 2.0])
# initial and unsafe boxes for the radial example
INIT_SET = Polytope.box([0.5, 0.5], [1.0, 1.0])
UNSAFE_SET = Polytope.box([-1.0, -1.0], [0.0, 0.0])

PENDULUM_ALPHAS = (0.025, 0.05, 0.06)
EXAMPLE2_ALPHAS = (0.1, 0.5)

SAT = 1.5


def pendulum_field(X):
    X = np.atleast_2d(X)
    u = np.clip(-3 * X[:, 0] - 3 * X[:, 1], -SAT, SAT)
    return np.column_stack([X[:, 1], np.sin(X[:, 0]) + u])


def example2_field(X):
    X = np.atleast_2d(X)
    g = 1 + X[:, 0] + X[:, 1]
    return X * g[:, None]


def pendulum_system(divisions=16) -> PWADynamics:
    return pwa_interpolate(pendulum_field, grid_partition(PENDULUM_DOMAIN, divisions))


def example2_system(divisions=8) -> PWADynamics:
    return pwa_interpolate(example2_field, grid_partition(EXAMPLE2_DOMAIN, divisions))


def linear_system(sign=-1.0, divisions=2, pattern="cross", half_width=1.0) -> PWADynamics:
    """``xdot = sign * x`` on a triangulated box."""
    dom = Polytope.box([-half_width] * 2, [half_width] * 2)
    return pwa_interpolate(lambda X: sign * np.atleast_2d(X), grid_partition(dom, divisions, pattern))


def random_system(seed, divisions=4, noise=0.7, half_width=1.0) -> PWADynamics:
    """Continuous PWA field on a box: ``-x`` plus Gaussian noise at the grid vertices."""
    rng = np.random.default_rng(seed)
    part = grid_partition(Polytope.box([-half_width] * 2, [half_width] * 2), divisions)
    pts = part.registry.points
    vals = rng.normal(scale=noise, size=pts.shape) - pts
    vals[np.all(np.abs(pts) < 1e-12, axis=1)] = 0.0  # keep the origin an equilibrium
    table = {tuple(np.round(p, 12)): v for p, v in zip(pts, vals)}
    return pwa_interpolate(lambda X: np.array([table[tuple(np.round(x, 12))] for x in X]), part)


def single_neuron() -> ReLUNetwork:
    return ReLUNetwork([[1.0, 0.0]], [0.0], [[1.0], [0.0]], [0.0, 0.0])


def fit_relu(field, domain: Polytope, hidden, seed=0, samples=2000) -> ReLUNetwork:
    """One-hidden-layer network approximating ``field`` on ``domain``.

    Hidden hyperplanes start as random unit normals through random points of
    the domain and the output layer as a least-squares fit; all weights are
    then polished jointly by nonlinear least squares. The output bias is
    always chosen so the network vanishes at the origin.
    """
    from scipy.optimize import least_squares

    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    n = len(lo)
    W1 = rng.normal(size=(hidden, n))
    W1 /= np.linalg.norm(W1, axis=1, keepdims=True)
    b1 = -np.einsum("ij,ij->i", W1, rng.uniform(lo, hi, size=(hidden, n)) * 0.8)
    X = rng.uniform(lo, hi, size=(samples, n))
    Y = field(X)

    def features(W1, b1):
        return np.maximum(X @ W1.T + b1, 0.0) - np.maximum(b1, 0.0)

    W2 = np.linalg.lstsq(features(W1, b1), Y, rcond=None)[0].T

    def unpack(p):
        W1 = p[:hidden * n].reshape(hidden, n)
        b1 = p[hidden * n:hidden * (n + 1)]
        return W1, b1, p[hidden * (n + 1):].reshape(n, hidden)

    def resid(p):
        W1, b1, W2 = unpack(p)
        return (features(W1, b1) @ W2.T - Y).ravel()

    p0 = np.concatenate([W1.ravel(), b1, W2.ravel()])
    W1, b1, W2 = unpack(least_squares(resid, p0, max_nfev=200 * len(p0)).x)
    # the fit likes opposite pairs (relu(z) - relu(-z) is linear); pull them
    # apart so the activation arrangement stays generic, then refit the output
    H = np.hstack([W1, b1[:, None]]) / np.linalg.norm(W1, axis=1)[:, None]
    for j in range(hidden):
        for k in range(j):
            if min(np.abs(H[j] - H[k]).max(), np.abs(H[j] + H[k]).max()) < 1e-3:
                b1[j] += 1e-2 * np.linalg.norm(W1[j])
    W2 = np.linalg.lstsq(features(W1, b1), Y, rcond=None)[0].T
    return ReLUNetwork(W1, b1, W2, -W2 @ np.maximum(b1, 0.0))


def relu_to_json(net: ReLUNetwork):
    return {k: getattr(net, k).tolist() for k in ("W1", "b1", "W2", "b2")}


def relu_from_json(obj) -> ReLUNetwork:
    return ReLUNetwork(*(np.asarray(obj[k], float) for k in ("W1", "b1", "W2", "b2")))


WEIGHT_FILES = {
    "pendulum": ("pendulum_relu8.json", pendulum_field, PENDULUM_DOMAIN, 8),
    "example2": ("example2_relu20.json", example2_field, EXAMPLE2_DOMAIN, 20),
}


def load_relu(name) -> ReLUNetwork:
    fname = WEIGHT_FILES[name][0]
    text = resources.files("pwabarrier").joinpath("data", fname).read_text()
    return relu_from_json(json.loads(text))


def domain_for(name) -> Polytope:
    return WEIGHT_FILES[name][2]
