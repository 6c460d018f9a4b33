"""Multistage scenario trees built by recursive k-means on spline coefficients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bernstein import ControlPoly, Spline, match_leading


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: int | None
    stage: int
    prob: float
    xi: ControlPoly | None = None
    eps: np.ndarray | None = None
    members: tuple[int, ...] = ()


@dataclass(frozen=True)
class TreePath:
    nodes: tuple[int, ...]
    prob: float

    def at_stage(self, h: int) -> int:
        return self.nodes[h]


@dataclass(frozen=True)
class ScenarioTree:
    """Rooted tree; node 0 is the root at stage 0, edges are named by their child."""

    nodes: tuple[TreeNode, ...]
    stage_counts: tuple[int, ...]
    depth: int = 2
    _children: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        kids: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise ValueError("node ids must run 0..N in order")
            if (n.parent is None) != (i == 0):
                raise ValueError("node 0 must be the only root")
            if n.parent is not None:
                kids[n.parent].append(n.id)
        object.__setattr__(self, "_children", {k: tuple(sorted(v)) for k, v in kids.items()})

    @property
    def H(self) -> int:
        return len(self.stage_counts)

    @property
    def degree(self) -> int:
        return self.nodes[1].xi.degree

    def children(self, v: int) -> tuple[int, ...]:
        return self._children[v]

    def edges(self) -> list[int]:
        """Non-root node ids; node v stands for the edge (parent(v), v)."""
        return [n.id for n in self.nodes if n.parent is not None]

    def leaves(self) -> list[int]:
        return [n.id for n in self.nodes if n.stage == self.H]

    def paths(self) -> list[TreePath]:
        out = []
        for leaf in self.leaves():
            chain = [leaf]
            while self.nodes[chain[-1]].parent is not None:
                chain.append(self.nodes[chain[-1]].parent)
            out.append(TreePath(tuple(reversed(chain)), self.nodes[leaf].prob))
        return out


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, n_init: int = 4):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(assignments, centroids)``. Several seeded restarts are run and
    the lowest-inertia one is kept; results depend only on ``seed``.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > m:
        raise ValueError(f"k={k} exceeds number of points {m}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init if k > 1 else 1):
        labels, centers = _lloyd(X, k, rng, max_iter)
        inertia = float(np.sum((X - centers[labels]) ** 2))
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, labels, centers)
    return best[1], best[2]


def _plusplus(X, k, rng):
    centers = [X[rng.integers(X.shape[0])]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(X.shape[0]))
        else:
            idx = int(rng.choice(X.shape[0], p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(X, k, rng, max_iter):
    centers = _plusplus(X, k, rng)
    labels = None
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(dist, axis=1)
        _repair_empty(X, new, centers, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([X[labels == j].mean(axis=0) for j in range(k)])
    return labels, centers


def _repair_empty(X, labels, centers, k):
    # move the worst-fitting point of the largest cluster into each empty one
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        idx = np.flatnonzero(labels == big)
        far = idx[np.argmax(np.sum((X[idx] - centers[big]) ** 2, axis=1))]
        labels[far] = j


def apportion(budget: int, sizes: Sequence[int], caps: Sequence[int]) -> list[int]:
    """Split ``budget`` children among parents: one each, then largest
    remainder proportional to bundle size, never exceeding ``caps``."""
    alloc = [1] * len(sizes)
    left = budget - len(sizes)
    if left < 0:
        raise ValueError(f"stage budget {budget} below number of parents {len(sizes)}")
    while left > 0:
        open_ = [i for i in range(len(sizes)) if alloc[i] < caps[i]]
        if not open_:
            break
        weight = sum(sizes[i] for i in open_)
        quota = {i: left * sizes[i] / weight for i in open_}
        extra = {i: min(int(np.floor(quota[i])), caps[i] - alloc[i]) for i in open_}
        given = sum(extra.values())
        if given == 0:
            # hand out one unit by largest remainder (ties: lowest parent)
            order = sorted(open_, key=lambda i: (-(quota[i] - np.floor(quota[i])), i))
            for i in order[:left]:
                extra[i] += 1
            given = sum(extra.values())
        for i in open_:
            alloc[i] += extra[i]
        left -= given
    return alloc


def build_tree(splines: Sequence[Spline], stage_counts: Sequence[int], depth: int | None = None,
               seed: int = 0) -> ScenarioTree:
    """Reduce training days to a tree by clustering each hour within each bundle."""
    L = len(splines)
    if L == 0:
        raise ValueError("no training splines")
    H = splines[0].n_hours
    n = splines[0].degree
    if depth is None:
        depth = splines[0].depth
    for s in splines:
        if s.n_hours != H or s.degree != n:
            raise ValueError("training splines differ in shape")
    c = [int(x) for x in stage_counts]
    if len(c) != H:
        raise ValueError(f"stage_counts has {len(c)} entries, expected {H}")
    if c[0] < 1 or any(b < a for a, b in zip(c, c[1:])):
        raise ValueError("stage_counts must be non-decreasing and start at >= 1")
    if L < max(c):
        raise ValueError(f"{L} training days cannot fill {max(c)} nodes")
    if depth > n + 1:
        raise ValueError("continuity depth exceeds degree")

    data = np.stack([s.coefficient_matrix() for s in splines])  # (L, H, n+1)
    nodes = [TreeNode(0, None, 0, 1.0, None, None, tuple(range(L)))]
    frontier = [0]
    for h in range(H):
        parents = frontier
        sizes = [len(nodes[p].members) for p in parents]
        caps = [_distinct(data[list(nodes[p].members), h]) for p in parents]
        alloc = apportion(c[h], sizes, caps)
        frontier = []
        for p, k in zip(parents, alloc):
            members = np.array(nodes[p].members)
            pts = data[members, h]
            labels, _ = kmeans(pts, k, seed=_child_seed(seed, h, p))
            groups = [members[labels == j] for j in range(k)]
            groups.sort(key=lambda g: (-len(g), int(g.min())))
            for g in groups:
                xi = data[g, h].mean(axis=0)
                if nodes[p].xi is not None:
                    xi = match_leading(xi, nodes[p].xi.coeffs, depth)
                eps = np.sqrt(np.mean((data[g, h] - xi) ** 2, axis=0))
                nid = len(nodes)
                nodes.append(TreeNode(nid, p, h + 1, len(g) / L, ControlPoly(xi), eps,
                                      tuple(int(i) for i in sorted(g))))
                frontier.append(nid)
    return ScenarioTree(tuple(nodes), tuple(c), depth)


def _distinct(points) -> int:
    return len(np.unique(np.round(points, 12), axis=0))


def _child_seed(seed, h, p):
    return int(np.random.SeedSequence([seed, h, p]).generate_state(1)[0])


def stage_nodes(tree: ScenarioTree, h: int) -> list[int]:
    if not 0 <= h <= tree.H:
        raise IndexError(f"stage {h} outside 0..{tree.H}")
    return [n.id for n in tree.nodes if n.stage == h]


def ancestor(tree: ScenarioTree, v: int, u: int) -> int:
    """Node reached from ``v`` after ``u`` parent hops (``u = 0`` gives ``v``)."""
    if u < 0 or u > tree.nodes[v].stage:
        raise IndexError(f"node {v} at stage {tree.nodes[v].stage} has no ancestor {u} hops up")
    for _ in range(u):
        v = tree.nodes[v].parent
    return v


def most_likely_path(tree: ScenarioTree) -> TreePath:
    path = [0]
    while tree.children(path[-1]):
        kids = tree.children(path[-1])
        path.append(min(kids, key=lambda k: (-tree.nodes[k].prob, k)))
    return TreePath(tuple(path), tree.nodes[path[-1]].prob)


def nearest_path(tree: ScenarioTree, test: Spline) -> tuple[TreePath, float]:
    """Root-to-leaf path whose centroids are closest to ``test`` in coefficient space."""
    if test.n_hours != tree.H or test.degree != tree.degree:
        raise ValueError("test spline shape does not match the tree")
    m = test.coefficient_matrix()
    best = None
    for path in tree.paths():
        d = sum(float(np.sum((m[h - 1] - tree.nodes[v].xi.coeffs) ** 2))
                for h, v in enumerate(path.nodes) if h > 0)
        key = (d, path.nodes[-1])
        if best is None or key < best[0]:
            best = (key, path)
    return best[1], best[0][0]


def tree_to_dict(tree: ScenarioTree) -> dict:
    nodes = []
    for n in tree.nodes:
        nodes.append({
            "id": n.id,
            "parent": n.parent,
            "stage": n.stage,
            "prob": n.prob,
            "xi": None if n.xi is None else n.xi.tolist(),
            "eps": None if n.eps is None else [float(e) for e in n.eps],
            "members": list(n.members),
        })
    return {"stage_counts": list(tree.stage_counts), "continuity": tree.depth, "nodes": nodes}


def tree_from_dict(doc: dict) -> ScenarioTree:
    nodes = []
    for d in sorted(doc["nodes"], key=lambda d: d["id"]):
        nodes.append(TreeNode(
            int(d["id"]),
            None if d["parent"] is None else int(d["parent"]),
            int(d["stage"]),
            float(d["prob"]),
            None if d.get("xi") is None else ControlPoly(d["xi"]),
            None if d.get("eps") is None else np.array(d["eps"], dtype=float),
            tuple(d.get("members", ())),
        ))
    return ScenarioTree(tuple(nodes), tuple(doc["stage_counts"]), int(doc.get("continuity", 2)))


def save_tree(tree: ScenarioTree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree), indent=1))


def load_tree(path) -> ScenarioTree:
    return tree_from_dict(json.loads(Path(path).read_text()))
