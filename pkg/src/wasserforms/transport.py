"""Exact optimal transport between discrete measures for the squared Euclidean cost.

The solver is a transportation (network) simplex on the dense bipartite
graph. A basis is a spanning tree of ``n + m - 1`` cells; dual potentials
come from the tree and optimality is certified by dual feasibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .curves import MeasureCurve
from .errors import NumericalError, ValidationError
from .measures import DiscreteMeasure, check_same_dimension, same_measure

DUAL_SLACK = 1e-9
_FLOW_ZERO = 1e-15


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    check_same_dimension(mu, nu)
    return cdist(mu.atoms, nu.atoms, "sqeuclidean")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling ``gamma`` between ``source`` and ``target`` with its cost.

    ``u`` and ``v`` are the dual potentials certifying optimality.
    """

    gamma: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    cost: float
    u: np.ndarray
    v: np.ndarray

    @property
    def dual_value(self) -> float:
        return float(self.source.weights @ self.u + self.target.weights @ self.v)

    def marginal_errors(self):
        return (
            float(np.abs(self.gamma.sum(axis=1) - self.source.weights).max()),
            float(np.abs(self.gamma.sum(axis=0) - self.target.weights).max()),
        )

    def recomputed_cost(self) -> float:
        return float(np.sum(self.gamma * cost_matrix(self.source, self.target)))

    def support(self):
        return np.argwhere(self.gamma > 0)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "cost": self.cost}


def _northwest_corner(a, b):
    n, m = a.size, b.size
    ra, rb = a.copy(), b.copy()
    cells, flows = [], []
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        cells.append((i, j))
        flows.append(max(q, 0.0))
        ra[i] -= q
        rb[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return cells, flows


def _tree_scan(C, row_adj, col_adj, n, m):
    """Root the basis tree at row 0: potentials, parent and depth per node.

    Nodes ``0..n-1`` are rows and ``n..n+m-1`` columns.
    """
    N = n + m
    pot = [0.0] * N
    parent = [-1] * N
    depth = [-1] * N
    depth[0] = 0
    order = [0]
    for node in order:
        if node < n:
            for j in row_adj[node]:
                c = n + j
                if depth[c] < 0:
                    depth[c] = depth[node] + 1
                    parent[c] = node
                    pot[c] = C[node][j] - pot[node]
                    order.append(c)
        else:
            j = node - n
            for i in col_adj[j]:
                if depth[i] < 0:
                    depth[i] = depth[node] + 1
                    parent[i] = node
                    pot[i] = C[i][j] - pot[node]
                    order.append(i)
    if len(order) != N:
        raise NumericalError("transport basis is not a spanning tree")
    return pot, parent, depth


def _cycle(ie, je, parent, depth, n):
    """Tree edges on the path from row ``ie`` to column ``je``, in path order."""
    a, b = ie, n + je
    head, tail = [], []
    while a != b:
        if depth[a] >= depth[b]:
            head.append((a, parent[a]))
            a = parent[a]
        else:
            tail.append((parent[b], b))
            b = parent[b]
    path = head + tail[::-1]
    return [(x, y - n) if x < n else (y, x - n) for x, y in path]


def _sorted_order(points, axis):
    return np.argsort(points @ axis, kind="stable")


def transport_simplex(a, b, C, max_iter=None, points=None):
    """Solve ``min <gamma, C>`` over couplings of ``a`` and ``b``.

    Returns ``(gamma, u, v)`` where ``u_i + v_j = C_ij`` on basic cells and
    ``u_i + v_j <= C_ij`` everywhere up to round-off, normalized by
    ``u_0 = 0``. Dantzig pricing with a switch to Bland's rule after a run of
    degenerate pivots. ``points=(x, y)`` seeds the initial northwest-corner
    basis with both sides sorted along their common principal axis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    scale = max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    price_tol = 1e-13 * scale

    rows, cols = np.arange(n), np.arange(m)
    if points is not None:
        x, y = points
        cloud = np.vstack([x, y])
        cloud = cloud - cloud.mean(axis=0)
        axis = np.linalg.svd(cloud, full_matrices=False)[2][0]
        rows, cols = _sorted_order(x, axis), _sorted_order(y, axis)
    cells, flows = _northwest_corner(a[rows], b[cols])

    X = np.zeros((n, m))
    basic = np.zeros((n, m), dtype=bool)
    row_adj = [[] for _ in range(n)]
    col_adj = [[] for _ in range(m)]
    for (p, q), f in zip(cells, flows):
        i, j = int(rows[p]), int(cols[q])
        X[i, j] = f
        basic[i, j] = True
        row_adj[i].append(j)
        col_adj[j].append(i)
    Cl = C.tolist()

    max_iter = max_iter or 50 * (n + m) * max(n, m) + 1000
    degenerate_run = 0
    for _ in range(max_iter):
        pot, parent, depth = _tree_scan(Cl, row_adj, col_adj, n, m)
        u, v = np.array(pot[:n]), np.array(pot[n:])
        R = C - u[:, None] - v[None, :]
        R[basic] = 0.0
        if degenerate_run > 2 * (n + m):
            candidates = np.flatnonzero(R.ravel() < -price_tol)
            if candidates.size == 0:
                break
            ie, je = divmod(int(candidates[0]), m)
        else:
            k = int(np.argmin(R))
            if R.flat[k] >= -price_tol:
                break
            ie, je = divmod(k, m)
        path = _cycle(ie, je, parent, depth, n)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(X[c] for c in minus)
        leave = min((c for c in minus if X[c] == theta), key=lambda c: c[0] * m + c[1])
        for c in minus:
            X[c] -= theta
        for c in plus:
            X[c] += theta
        X[ie, je] += theta
        X[leave] = 0.0
        basic[leave] = False
        row_adj[leave[0]].remove(leave[1])
        col_adj[leave[1]].remove(leave[0])
        basic[ie, je] = True
        row_adj[ie].append(je)
        col_adj[je].append(ie)
        degenerate_run = degenerate_run + 1 if theta <= _FLOW_ZERO else 0
    else:
        raise NumericalError("transport simplex did not converge")

    X[X < _FLOW_ZERO] = 0.0
    pot, _, _ = _tree_scan(Cl, row_adj, col_adj, n, m)
    return X, np.array(pot[:n]), np.array(pot[n:])


def _zero_distance_plan(mu, nu):
    """Greedy matching of identical atoms; ``None`` unless all mass matches."""
    gamma = np.zeros((mu.n, nu.n))
    rb = nu.weights.copy()
    for i, (x, w) in enumerate(zip(mu.atoms, mu.weights)):
        need = w
        for j in np.flatnonzero(np.all(nu.atoms == x, axis=1)):
            q = min(need, rb[j])
            gamma[i, j] += q
            rb[j] -= q
            need -= q
        if need > 1e-12:
            return None
    return gamma


def optimal_plan(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TransportPlan:
    """An optimal coupling (a vertex of the transportation polytope).

    Deterministic for identical input ordering. Identical measures get the
    greedy diagonal plan with zero potentials.
    """
    C = cost_matrix(mu, nu)
    if same_measure(mu, nu, tol=0.0):
        gamma = _zero_distance_plan(mu, nu)
        if gamma is not None:
            return TransportPlan(gamma, mu, nu, 0.0, np.zeros(mu.n), np.zeros(nu.n))
    gamma, u, v = transport_simplex(mu.weights, nu.weights, C, points=(mu.atoms, nu.atoms))
    cost = float(np.sum(gamma * C))
    slack = float((u[:, None] + v[None, :] - C).max())
    if slack > DUAL_SLACK * max(1.0, float(C.max())):
        raise NumericalError(f"dual feasibility violated by {slack:.3g}")
    return TransportPlan(gamma, mu, nu, cost, u, v)


def w2_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return float(np.sqrt(max(optimal_plan(mu, nu).cost, 0.0)))


def dual_potentials(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Kantorovich potentials ``(u, v)`` normalized by ``u[0] = 0``."""
    plan = optimal_plan(mu, nu)
    return plan.u, plan.v


def barycentric_projection(plan: TransportPlan) -> np.ndarray:
    """Displacement field ``v_i = (sum_j gamma_ij y_j) / a_i - x_i``."""
    a = plan.source.weights
    return (plan.gamma @ plan.target.atoms) / a[:, None] - plan.source.atoms


def geodesic(mu: DiscreteMeasure, nu: DiscreteMeasure, tgrid) -> MeasureCurve:
    """Constant-speed geodesic ``((1-t) pi^1 + t pi^2) # gamma`` on ``tgrid``.

    One particle per nonzero plan entry, moving on a straight line with
    constant velocity ``y_j - x_i``.
    """
    t = np.asarray(tgrid, dtype=float)
    if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
        raise ValidationError("tgrid must be strictly increasing from 0 to 1")
    plan = optimal_plan(mu, nu)
    idx = plan.support()
    x = mu.atoms[idx[:, 0]]
    y = nu.atoms[idx[:, 1]]
    w = plan.gamma[idx[:, 0], idx[:, 1]]
    w = w / w.sum()
    pos = (1 - t)[:, None, None] * x[None] + t[:, None, None] * y[None]
    vel = np.broadcast_to(y - x, pos.shape)
    return MeasureCurve(t, pos, w, vel)
