"""SE(3) pose-graph construction and Gauss-Newton refinement.

The edge residual is log(rel^-1 . X_i^-1 . X_j) as a 6-vector twist; node
updates are left-multiplicative (X <- exp(delta) . X). Node 0 is the gauge
anchor and never moves. Steps are damped and only cost-decreasing updates
are accepted, so the reported cost sequence is monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .geometry import Pose, compose, pose_exp


class PoseGraphError(Exception):
    pass


class DisconnectedGraph(PoseGraphError):
    pass


class SingularNormalEquations(PoseGraphError):
    pass


@dataclass(frozen=True)
class PoseGraphEdge:
    from_node: int
    to_node: int
    relative: Pose
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0:
            raise PoseGraphError("edge weight must be positive")


@dataclass
class PoseGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def validate(self):
        n = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.from_node < n and 0 <= e.to_node < n):
                raise PoseGraphError(f"edge references unknown node: {e}")
        if n > 1:
            seen = {0}
            frontier = [0]
            adj = {}
            for e in self.edges:
                adj.setdefault(e.from_node, []).append(e.to_node)
                adj.setdefault(e.to_node, []).append(e.from_node)
            while frontier:
                cur = frontier.pop()
                for nxt in adj.get(cur, []):
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            if len(seen) != n:
                missing = sorted(set(range(n)) - seen)
                raise DisconnectedGraph(f"nodes unreachable from anchor: {missing}")

    def copy(self):
        return PoseGraph(list(self.nodes), list(self.edges))


@dataclass
class OptimizeResult:
    nodes: list
    initial_cost: float
    final_cost: float
    iterations: int


def edge_residual(edge: PoseGraphEdge, xi_pose: Pose, xj_pose: Pose):
    m = (
        edge.relative.inverse().matrix()
        @ xi_pose.inverse().matrix()
        @ xj_pose.matrix()
    )
    return se3.se3_log(m[:3, :3], m[:3, 3])


def edge_jacobians(edge: PoseGraphEdge, xi_pose: Pose, xj_pose: Pose):
    """d(residual)/d(delta_i), d(residual)/d(delta_j) for left updates.

    With X_j <- exp(d_j) X_j the argument becomes exp(r) exp(Ad(X_j^-1) d)
    to first order in d = d_j - d_i, so both Jacobians share
    Jr^-1(r) Ad(X_j^-1) with opposite signs.
    """
    r = edge_residual(edge, xi_pose, xj_pose)
    inv_j = xj_pose.inverse()
    jj = se3.se3_right_jacobian_inv(r) @ se3.adjoint(
        inv_j.rotation, inv_j.translation
    )
    return -jj, jj, r


def graph_cost(graph: PoseGraph, nodes=None):
    nodes = graph.nodes if nodes is None else nodes
    total = 0.0
    for e in graph.edges:
        r = edge_residual(e, nodes[e.from_node], nodes[e.to_node])
        total += e.weight * float(r @ r)
    return total


def _normal_equations(graph: PoseGraph, nodes):
    n_free = len(nodes) - 1  # node 0 anchored
    h = np.zeros((6 * n_free, 6 * n_free))
    b = np.zeros(6 * n_free)
    cost = 0.0
    for e in graph.edges:
        ji, jj, r = edge_jacobians(e, nodes[e.from_node], nodes[e.to_node])
        cost += e.weight * float(r @ r)
        blocks = []
        if e.from_node != 0:
            blocks.append((e.from_node - 1, ji))
        if e.to_node != 0:
            blocks.append((e.to_node - 1, jj))
        for a, ja in blocks:
            sa = slice(6 * a, 6 * a + 6)
            b[sa] += e.weight * (ja.T @ r)
            for c, jc in blocks:
                sc = slice(6 * c, 6 * c + 6)
                h[sa, sc] += e.weight * (ja.T @ jc)
    return h, b, cost


def optimize_pose_graph(graph: PoseGraph, max_iters: int = 50,
                        tol: float = 1e-9) -> OptimizeResult:
    """Damped Gauss-Newton over all nodes except the anchor."""
    graph.validate()
    nodes = list(graph.nodes)
    if len(nodes) <= 1 or not graph.edges:
        c = graph_cost(graph, nodes)
        return OptimizeResult(nodes, c, c, 0)
    initial_cost = graph_cost(graph, nodes)
    cost = initial_cost
    lam = 1e-6
    iterations = 0
    for _ in range(max_iters):
        h, b, _ = _normal_equations(graph, nodes)
        if not np.all(np.isfinite(h)) or not np.all(np.isfinite(b)):
            raise SingularNormalEquations("non-finite normal equations")
        accepted = False
        for _attempt in range(8):
            try:
                delta = np.linalg.solve(
                    h + lam * np.diag(np.diag(h).clip(min=1e-12)),
                    -b,
                )
            except np.linalg.LinAlgError as exc:
                raise SingularNormalEquations(str(exc)) from exc
            trial = list(nodes)
            for i in range(1, len(nodes)):
                d = delta[6 * (i - 1): 6 * (i - 1) + 6]
                trial[i] = compose(pose_exp(d), nodes[i])
            trial_cost = graph_cost(graph, trial)
            if np.isfinite(trial_cost) and trial_cost <= cost:
                nodes = trial
                improvement = cost - trial_cost
                cost = trial_cost
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        iterations += 1
        if not accepted:
            break
        if improvement < tol:
            break
    return OptimizeResult(nodes, initial_cost, cost, iterations)
