"""Low-distortion embedding of a tree into the Poincare ball.

Construction: the root sits at the origin; each node's children leave it
along maximally separated tangent directions (a regular simplex that also
contains the direction back to the parent) and are placed at geodesic
distance ``tau``. An optional refinement then runs Riemannian gradient
descent on the squared relative distortion over all node pairs.

The leaf points become the frozen prototypes of the prototype heads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import ball
from .diffcore import acosh1p
from .hierarchy import CodonTree

PROTO_MAGIC = b"HCPROTO1"
MIN_PROTO_NORM = 1e-3


@dataclass
class TreeEmbedding:
    node_ids: list[str]
    points: torch.Tensor  # (nodes, dim), float64
    c: float
    tau: float

    def __post_init__(self):
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __getitem__(self, nid: str) -> torch.Tensor:
        return self.points[self.index[nid]]

    def copy(self) -> "TreeEmbedding":
        return TreeEmbedding(list(self.node_ids), self.points.clone(), self.c, self.tau)


@dataclass
class DistortionReport:
    mean: float
    worst: float
    pairs: int
    class_mean_distance: dict[int, float]
    class_mean_distortion: dict[int, float]

    def to_json(self) -> dict:
        return {
            "mean_distortion": self.mean,
            "worst_distortion": self.worst,
            "pairs": self.pairs,
            "class_mean_distance": {str(k): v for k, v in self.class_mean_distance.items()},
            "class_mean_distortion": {str(k): v for k, v in self.class_mean_distortion.items()},
        }


# -- sibling directions --------------------------------------------------------


def _simplex(k: int) -> np.ndarray:
    """``k`` unit vectors in R^(k-1) with pairwise cosine ``-1/(k-1)``."""
    if k == 1:
        return np.ones((1, 1))
    centered = np.eye(k) - 1.0 / k
    # orthonormal basis of the sum-zero subspace
    q, _ = np.linalg.qr(centered[:, : k - 1])
    coords = centered @ q
    return coords / np.linalg.norm(coords, axis=1, keepdims=True)


def _random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _repulsion(k: int, n: int, fixed: np.ndarray | None, rng: np.random.Generator, steps: int = 200) -> np.ndarray:
    d = rng.standard_normal((k, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for _ in range(steps):
        pts = d if fixed is None else np.vstack([fixed[None], d])
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = (diff**2).sum(-1) + np.eye(len(pts))
        force = (diff / d2[..., None] ** 2).sum(1)
        force = force if fixed is None else force[1:]
        d = d + 0.05 * force
        d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d


def separated_directions(
    k: int, n: int, avoid: np.ndarray | None = None, rng: np.random.Generator | None = None
) -> np.ndarray:
    """``k`` unit vectors in R^n, spread apart and away from ``avoid``.

    With ``avoid`` given, the directions together with ``avoid`` form a
    regular simplex of ``k + 1`` vertices whenever ``k + 1 <= n + 1``.
    Larger fans use even angles in 2-D and seeded repulsion otherwise.
    """
    rng = rng or np.random.default_rng(0)
    m = k if avoid is None else k + 1
    if m <= n + 1:
        s = _simplex(m)
        full = np.zeros((m, n))
        full[:, : s.shape[1]] = s
        rot = _random_rotation(n, rng)
        full = full @ rot.T
        if avoid is None:
            return full
        u = avoid / np.linalg.norm(avoid)
        w = full[0] - u
        if np.linalg.norm(w) > 1e-12:
            full = full - 2.0 * np.outer(full @ w, w) / (w @ w)
        return full[1:]
    if n == 2:
        start = 0.0 if avoid is None else math.atan2(avoid[1], avoid[0])
        angles = start + 2 * math.pi * np.arange(m) / m
        pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return pts if avoid is None else pts[1:]
    fixed = None if avoid is None else avoid / np.linalg.norm(avoid)
    return _repulsion(k, n, fixed, rng)


# -- construction and refinement ----------------------------------------------


def embed_tree_constructive(tree: CodonTree, dim: int = 128, c: float = 1.0, tau: float = 2.0, seed: int = 0) -> TreeEmbedding:
    if dim < 2:
        raise ValueError(f"embedding dimension must be >= 2, got {dim}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    rng = np.random.default_rng(seed)
    pts: dict[str, torch.Tensor] = {tree.root: torch.zeros(dim, dtype=torch.float64)}
    order = [tree.root]
    for nid in order:
        kids = tree.children[nid]
        if not kids:
            continue
        x = pts[nid]
        parent = tree.nodes[nid].parent
        avoid = None if parent is None else ball.log_map(x, pts[parent], c).numpy()
        dirs = separated_directions(len(kids), dim, avoid, rng)
        if len(kids) > 1:
            cos = dirs @ dirs.T - np.eye(len(kids))
            if cos.max() > 1 - 1e-9:
                raise ValueError(f"node {nid!r}: cannot separate {len(kids)} children in {dim} dimensions")
        lam = float(ball.conformal_factor(x, c))
        v = torch.as_tensor(dirs, dtype=torch.float64) * (tau / lam)
        children = ball.exp_map(x.expand_as(v), v, c)
        for kid, p in zip(kids, children):
            pts[kid] = p
            order.append(kid)
    ids = tree.node_ids
    return TreeEmbedding(ids, torch.stack([pts[i] for i in ids]), c, tau)


def _pair_terms(emb: TreeEmbedding, tree: CodonTree):
    dt = tree.distance_matrix
    idx = [tree.index[nid] for nid in emb.node_ids]
    dt = torch.as_tensor(dt[np.ix_(idx, idx)], dtype=torch.float64)
    iu = torch.triu_indices(len(idx), len(idx), offset=1)
    return iu, dt[iu[0], iu[1]]


def pairwise_dist(points: torch.Tensor, c: float) -> torch.Tensor:
    """All-pairs distance matrix from the Gram matrix (fine for separated points)."""
    sq = ball.sq_norm(points)
    gram = points @ points.T
    diff2 = (sq[:, None] + sq[None, :] - 2 * gram).clamp_min(0.0)
    den = (1 - c * sq)[:, None] * (1 - c * sq)[None, :]
    return acosh1p(2 * c * diff2 / den) / math.sqrt(c)


def distortion_objective(points: torch.Tensor, iu, dt_pairs, c: float, tau: float) -> torch.Tensor:
    d = pairwise_dist(points, c)[iu[0], iu[1]]
    return ((d / (tau * dt_pairs) - 1.0) ** 2).mean()


@dataclass
class RefineResult:
    embedding: TreeEmbedding
    objective: list[float] = field(default_factory=list)
    rejected: int = 0


def refine_embedding(emb: TreeEmbedding, tree: CodonTree, steps: int = 200, lr: float = 16.0) -> RefineResult:
    """Riemannian descent with monotone acceptance; the root stays put."""
    iu, dt_pairs = _pair_terms(emb, tree)
    c, tau = emb.c, emb.tau
    root = emb.index[tree.root]
    x = emb.points.clone()
    with torch.no_grad():
        obj = float(distortion_objective(x, iu, dt_pairs, c, tau))
    history = [obj]
    rejected = 0
    for _ in range(steps):
        xg = x.clone().requires_grad_(True)
        loss = distortion_objective(xg, iu, dt_pairs, c, tau)
        (g,) = torch.autograd.grad(loss, xg)
        g[root] = 0.0
        with torch.no_grad():
            cand = ball.exp_map(x, -lr * ball.riemannian_grad(x, g, c), c)
            cand[root] = x[root]
            new = float(distortion_objective(cand, iu, dt_pairs, c, tau))
        if new <= obj:
            x, obj = cand, new
            history.append(obj)
        else:
            lr *= 0.5
            rejected += 1
    return RefineResult(TreeEmbedding(list(emb.node_ids), x, c, tau), history, rejected)


def distortion_report(emb: TreeEmbedding, tree: CodonTree, tau: float | None = None) -> DistortionReport:
    missing = [nid for nid in tree.node_ids if nid not in emb.index]
    if missing:
        raise KeyError(f"embedding lacks nodes: {missing[:5]}")
    tau = emb.tau if tau is None else tau
    sub = TreeEmbedding(tree.node_ids, torch.stack([emb[n] for n in tree.node_ids]), emb.c, emb.tau)
    iu, dt_pairs = _pair_terms(sub, tree)
    with torch.no_grad():
        d = ball.dist(sub.points[iu[0]], sub.points[iu[1]], emb.c)
    rel = (d / (tau * dt_pairs) - 1.0).abs()
    classes = sorted({int(v) for v in dt_pairs.tolist()})
    return DistortionReport(
        mean=float(rel.mean()),
        worst=float(rel.max()),
        pairs=int(rel.numel()),
        class_mean_distance={k: float(d[dt_pairs == k].mean()) for k in classes},
        class_mean_distortion={k: float(rel[dt_pairs == k].mean()) for k in classes},
    )


# -- prototypes -----------------------------------------------------------------


@dataclass
class PrototypeSet:
    """One frozen ball point per vocabulary token (row ``i`` is token ``i``)."""

    points: torch.Tensor  # (tokens, dim) float64
    c: float
    tau: float
    K: float = 0.1
    eta: float = 1.05
    token_order: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def header(self) -> dict:
        return {
            "format": 1,
            "curvature": self.c,
            "tau": self.tau,
            "dim": self.dim,
            "K": self.K,
            "eta": self.eta,
            "count": len(self),
            "dtype": "<f8",
            "token_order": list(self.token_order),
        }


def leaf_prototypes(emb: TreeEmbedding, tree: CodonTree, K: float = 0.1, eta: float = 1.05) -> PrototypeSet:
    """Leaf points in token order, pushed out to at least the cone radius."""
    from .heads import cone_min_radius

    leaves = tree.leaves
    pts = torch.stack([emb[leaf] for leaf in leaves]).clone()
    floor = max(MIN_PROTO_NORM, cone_min_radius(K, emb.c) * (1 + 1e-6))
    norms = pts.norm(dim=1, keepdim=True)
    small = norms < floor
    if small.any():
        fallback = torch.zeros_like(pts)
        fallback[:, 0] = 1.0
        direction = torch.where(norms > 0, pts / norms.clamp_min(1e-300), fallback)
        pts = torch.where(small, direction * floor, pts)
    tokens = [tree.nodes[leaf].token or leaf for leaf in leaves]
    return PrototypeSet(pts, emb.c, emb.tau, K, eta, tokens)


def save_prototypes(protos: PrototypeSet, path: str | Path) -> None:
    """Layout: magic(8) | header length uint64 LE (8) | JSON header | float64 LE rows."""
    header = json.dumps(protos.header(), sort_keys=True).encode()
    body = protos.points.detach().to(torch.float64).contiguous().numpy().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(PROTO_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(body)


def load_prototypes(path: str | Path) -> PrototypeSet:
    raw = Path(path).read_bytes()
    if raw[:8] != PROTO_MAGIC:
        raise ValueError(f"{path}: not a prototype file (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen])
    count, dim = header["count"], header["dim"]
    body = raw[16 + hlen :]
    if len(body) != 8 * count * dim:
        raise ValueError(f"{path}: expected {count}x{dim} float64 rows, found {len(body)} bytes")
    arr = np.frombuffer(body, dtype="<f8").reshape(count, dim).copy()
    return PrototypeSet(
        torch.from_numpy(arr), header["curvature"], header["tau"], header["K"], header["eta"], header["token_order"]
    )


def codon_prototypes(dim: int = 128, c: float = 1.0, tau: float = 2.0, K: float = 0.1, eta: float = 1.05,
                     refine_steps: int = 200, seed: int = 0) -> tuple[PrototypeSet, DistortionReport]:
    """Build, refine and export the codon tree prototypes in one call."""
    from .hierarchy import build_codon_tree

    tree = build_codon_tree()
    emb = embed_tree_constructive(tree, dim, c, tau, seed)
    if refine_steps:
        emb = refine_embedding(emb, tree, refine_steps).embedding
    return leaf_prototypes(emb, tree, K, eta), distortion_report(emb, tree)
