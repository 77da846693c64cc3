"""Independent reference implementations used as test oracles.

Everything here is deliberately written in plain Python loops against the raw
edge list, sharing no code with the package's vectorized implementations.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# -- straight-line scoring references ----------------------------------------


def reference_edge_scores(edge_feats, p1):
    """Per-edge projection score, one dot product at a time."""
    norm = math.sqrt(sum(float(v) * float(v) for v in p1))
    norm = max(norm, 1e-12)
    out = []
    for row in edge_feats:
        out.append(sum(float(a) * float(b) for a, b in zip(row, p1)) / norm)
    return out


def reference_gate(edge_feats, phi_edges):
    out = []
    for row, phi in zip(edge_feats, phi_edges):
        gate = 1.0 / (1.0 + math.exp(-float(phi)))
        out.append([float(v) * gate for v in row])
    return out


def reference_node_scores(node_feats, p2, delta, phi_edges, edge_pairs, n,
                          mode="edge_to_node"):
    """Weighted projection plus incident edge-score sums, scanning the edge list."""
    norm = max(math.sqrt(sum(float(v) * float(v) for v in p2)), 1e-12)
    proj = [sum(float(a) * float(b) for a, b in zip(row, p2)) / norm
            for row in node_feats]
    incident = [0.0] * n
    for row, (i, j) in enumerate(edge_pairs):
        incident[i] += float(phi_edges[row])
        incident[j] += float(phi_edges[row])
    if mode == "node_only":
        return proj
    if mode == "edge_only":
        return incident
    return [(1.0 - delta) * p + s for p, s in zip(proj, incident)]


# -- brute-force greedy clustering simulator ----------------------------------


def greedy_cluster_simulator(n, edge_pairs, node_scores, edge_scores, gamma, cap):
    """Replays the greedy selection with linear scans over nodes and edges.

    Returns a list of (core, regulars tuple, edge-row tuple) in selection order.
    """
    assigned = [False] * n
    clusters = []
    for _ in range(gamma):
        if all(assigned):
            break
        core = None
        for v in range(n):
            if assigned[v]:
                continue
            if core is None or node_scores[v] > node_scores[core]:
                core = v  # strict > keeps the lowest index on ties
        assigned[core] = True
        candidates = []
        for row, (a, b) in enumerate(edge_pairs):
            if a == core and not assigned[b]:
                candidates.append((b, row))
            elif b == core and not assigned[a]:
                candidates.append((a, row))
        candidates.sort(key=lambda t: (-edge_scores[t[1]], t[1]))
        chosen = candidates[: cap - 1]
        for j, _ in chosen:
            assigned[j] = True
        clusters.append((core, tuple(j for j, _ in chosen),
                         tuple(r for _, r in chosen)))
    return clusters


def reference_aggregate(clusters, node_feats, gated_edges, w_c, b_c, gamma):
    """Straight-line cluster aggregation: core + sum of weighted regulars + bias."""
    d = len(node_feats[0])
    basis = [[0.0] * d for _ in range(gamma)]
    for k, (core, regulars, edge_rows) in enumerate(clusters):
        acc = [float(v) for v in node_feats[core]]
        for j, row in zip(regulars, edge_rows):
            flat = [0.0] * (d * d)
            for a, feat in enumerate(gated_edges[row]):
                for b in range(d * d):
                    flat[b] += float(feat) * float(w_c[a][b])
            for r in range(d):
                acc[r] += sum(flat[r * d + c] * float(node_feats[j][c])
                              for c in range(d))
        for r in range(d):
            acc[r] += float(b_c[r])
        basis[k] = acc
    return basis


# -- graph generation ----------------------------------------------------------


def connected(n, edge_pairs):
    if n <= 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edge_pairs:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def all_connected_graphs(max_nodes):
    """Yield (n, edge_pairs) for every labeled connected graph with n <= max_nodes."""
    for n in range(1, max_nodes + 1):
        possible = list(itertools.combinations(range(n), 2))
        for mask in range(1 << len(possible)):
            pairs = [possible[k] for k in range(len(possible)) if mask >> k & 1]
            if connected(n, pairs):
                yield n, pairs


def random_edge_pairs(rng, n, density=0.4):
    """Random simple undirected edge list; rows in random (valid) order."""
    pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < density]
    rng.shuffle(pairs)
    return pairs


def pairs_to_edge_list(pairs):
    if not pairs:
        return np.zeros((2, 0), dtype=np.int64)
    return np.array(pairs, dtype=np.int64).T


# -- numeric differentiation -----------------------------------------------------


def numeric_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x, entry by entry."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.ravel()
    gout = out.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gout[i] = (fp - fm) / (2.0 * h)
    return out
