"""Key-step discovery: clustering, per-video graph-cut labeling, ordering.

Frames of all videos are clustered jointly (k-means++ seeding, Lloyd
refinement). Each video is then labeled by alpha-expansion over a chain
graph whose unary cost is the squared distance to the cluster centers and
whose pairwise cost is a Potts penalty on consecutive frames; every binary
expansion move is solved exactly by a BFS augmenting-path max-flow. Key-step
order within a video is the ascending mean normalized frame time of each
label; the task-level order ranks per-video orders by frequency.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data_model import FrameFeatures, Hyperparams, LabelSequence
from .encoder import Encoder
from .errors import DegenerateData, EmptyVideo
from .kernels import worker_count
from .priors import background_mask, build_cost_bundle
from .solver import solve_fgwot


def init_centers(points: np.ndarray, k: int, rng: np.random.Generator,
                 lloyd_iters: int = 100, restarts: int = 10) -> np.ndarray:
    """Best of `restarts` k-means runs (k-means++ seeding, Lloyd refinement).

    Restarts matter here: a lone run can park a center on diffuse outlier
    mass and merge two real clusters, which a better-SSE run avoids.
    """
    pts = np.asarray(points, dtype=np.float64)
    if np.unique(pts, axis=0).shape[0] < k:
        raise DegenerateData(f"need at least {k} distinct points")
    best_centers = None
    best_sse = np.inf
    for _ in range(max(1, restarts)):
        centers = _one_kmeans_run(pts, k, rng, lloyd_iters)
        assign = _nearest(pts, centers)
        sse = float(np.sum((pts - centers[assign]) ** 2))
        if sse < best_sse:
            best_centers, best_sse = centers, sse
    return best_centers


def _one_kmeans_run(pts: np.ndarray, k: int, rng: np.random.Generator,
                    lloyd_iters: int) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining mass sits on chosen centers; pick any unseen point
            centers[c] = pts[rng.integers(n)]
        else:
            centers[c] = pts[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((pts - centers[c]) ** 2, axis=1))
    assign = _nearest(pts, centers)
    for _ in range(lloyd_iters):
        new_centers = centers.copy()
        for c in range(k):
            members = pts[assign == c]
            if members.shape[0]:
                new_centers[c] = members.mean(axis=0)
            else:
                # revive an empty cluster at the point that fits worst
                worst = np.argmax(np.sum((pts - new_centers[assign]) ** 2, axis=1))
                new_centers[c] = pts[worst]
        new_assign = _nearest(pts, new_centers)
        moved = not np.array_equal(new_assign, assign)
        centers, assign = new_centers, new_assign
        if not moved:
            break
    return centers


def _nearest(pts, centers):
    d2 = np.sum(pts * pts, axis=1)[:, None] - 2.0 * pts @ centers.T \
        + np.sum(centers * centers, axis=1)[None, :]
    return np.argmin(d2, axis=1)


@dataclass(frozen=True)
class GraphCutProblem:
    """Chain MRF: unary (N, K) costs plus a Potts weight on consecutive frames."""

    unary: np.ndarray
    pairwise_weight: float

    @property
    def n(self) -> int:
        return self.unary.shape[0]

    @property
    def k(self) -> int:
        return self.unary.shape[1]


def labeling_energy(problem: GraphCutProblem, labels: np.ndarray) -> float:
    e = float(problem.unary[np.arange(problem.n), labels].sum())
    e += problem.pairwise_weight * float(np.count_nonzero(labels[:-1] != labels[1:]))
    return e


class _MaxFlow:
    """Edmonds-Karp max flow; nodes n and n+1 are source and sink."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes + 2
        self.source = n_nodes
        self.sink = n_nodes + 1
        self.head: list[list[int]] = [[] for _ in range(self.n)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, c: float) -> None:
        if c <= 0.0:
            return
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)

    def run(self) -> None:
        while True:
            parent_edge = [-1] * self.n
            parent_edge[self.source] = -2
            queue = [self.source]
            qi = 0
            while qi < len(queue) and parent_edge[self.sink] == -1:
                u = queue[qi]
                qi += 1
                for eid in self.head[u]:
                    v = self.to[eid]
                    if parent_edge[v] == -1 and self.cap[eid] > 1e-14:
                        parent_edge[v] = eid
                        queue.append(v)
            if parent_edge[self.sink] == -1:
                return
            bottleneck = np.inf
            v = self.sink
            while v != self.source:
                eid = parent_edge[v]
                bottleneck = min(bottleneck, self.cap[eid])
                v = self.to[eid ^ 1]
            v = self.sink
            while v != self.source:
                eid = parent_edge[v]
                self.cap[eid] -= bottleneck
                self.cap[eid ^ 1] += bottleneck
                v = self.to[eid ^ 1]

    def source_side(self) -> np.ndarray:
        seen = np.zeros(self.n, dtype=bool)
        seen[self.source] = True
        queue = [self.source]
        qi = 0
        while qi < len(queue):
            u = queue[qi]
            qi += 1
            for eid in self.head[u]:
                v = self.to[eid]
                if not seen[v] and self.cap[eid] > 1e-14:
                    seen[v] = True
                    queue.append(v)
        return seen


def _expansion_move(problem: GraphCutProblem, labels: np.ndarray, alpha: int) -> np.ndarray:
    """Optimal binary move: each frame keeps its label or switches to alpha."""
    n = problem.n
    beta = problem.pairwise_weight
    phi0 = problem.unary[np.arange(n), labels].copy()  # cost of keeping
    phi1 = problem.unary[:, alpha].copy()  # cost of switching
    fixed = labels == alpha
    flow = _MaxFlow(n)
    for i in range(n - 1):
        j = i + 1
        if fixed[i] and fixed[j]:
            continue
        if fixed[i]:
            # neighbour already alpha: keeping label_j != alpha pays the Potts cost
            phi0[j] += beta if labels[j] != alpha else 0.0
            continue
        if fixed[j]:
            phi0[i] += beta if labels[i] != alpha else 0.0
            continue
        a = beta if labels[i] != labels[j] else 0.0
        b = beta if labels[i] != alpha else 0.0
        c = beta if labels[j] != alpha else 0.0
        d = 0.0
        # E(bi,bj) = a + (c-a)[bi] + (d-c)[bj] + (b+c-a-d)[bi=0][bj=1]
        phi1[i] += c - a
        phi1[j] += d - c
        flow.add_edge(i, j, b + c - a - d)
    for i in range(n):
        if fixed[i]:
            continue
        lo = min(phi0[i], phi1[i])
        flow.add_edge(flow.source, i, phi1[i] - lo)
        flow.add_edge(i, flow.sink, phi0[i] - lo)
    flow.run()
    keep = flow.source_side()
    new_labels = labels.copy()
    for i in range(n):
        if fixed[i] or not keep[i]:
            new_labels[i] = alpha
    return new_labels


def alpha_expansion(problem: GraphCutProblem, max_sweeps: int = 10):
    """Iterated expansion moves from the unary argmin labeling.

    Returns (labels, energy_trace); the trace starts at the initial energy
    and appends one entry per accepted move, never increasing.
    """
    labels = np.argmin(problem.unary, axis=1)
    energy = labeling_energy(problem, labels)
    trace = [energy]
    for _ in range(max_sweeps):
        improved = False
        for alpha in range(problem.k):
            candidate = _expansion_move(problem, labels, alpha)
            cand_energy = labeling_energy(problem, candidate)
            if cand_energy < energy - 1e-12:
                labels, energy = candidate, cand_energy
                trace.append(energy)
                improved = True
        if not improved:
            break
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:])), "energy increased"
    return labels, trace


def keystep_order(labels: np.ndarray, background_code: int = -1) -> list[int]:
    """Key steps sorted by mean normalized (1-based) frame time; ties by id."""
    arr = np.asarray(labels)
    n = arr.size
    present = sorted(set(int(v) for v in arr if v != background_code))
    if not present:
        raise EmptyVideo("no non-background frames")
    means = []
    for step in present:
        where = np.flatnonzero(arr == step) + 1
        means.append((float(where.mean()) / n, step))
    means.sort()
    return [step for _, step in means]


def rank_orders(orders: list[list[int]]) -> list[tuple[tuple[int, ...], int]]:
    """Distinct per-video orders ranked by frequency, ties lexicographic."""
    counts = Counter(tuple(o) for o in orders)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True)
class SegmentationResult:
    labels: tuple[LabelSequence, ...]
    orders: tuple[tuple[int, ...], ...]  # aligned with labels; empty if fully masked
    task_order: tuple[tuple[tuple[int, ...], int], ...]
    energy_traces: tuple[tuple[float, ...], ...]
    centers: np.ndarray


def compute_segment_masks(embeddings: list[np.ndarray], hyper: Hyperparams) -> list[np.ndarray]:
    """Background masks from solves of each video against the next (cyclic)."""
    v = len(embeddings)
    masks: list[np.ndarray] = []
    for i in range(v):
        bundle = build_cost_bundle(embeddings[i], embeddings[(i + 1) % v], hyper)
        coupling = solve_fgwot(bundle, hyper)
        mask_x, _ = background_mask(coupling, hyper.zeta)
        masks.append(mask_x)
    return masks


def segment_task(videos: list[FrameFeatures], enc: Encoder, k: int,
                 beta: float, hyper: Hyperparams, rng: np.random.Generator,
                 use_masks: bool = True) -> SegmentationResult:
    """Full segmentation of one task with a trained encoder.

    With use_masks, background frames are detected by pairwise alignment
    first, excluded from clustering, and forced to label -1.
    """
    embeddings = [enc.forward(v.data)[0] for v in videos]
    if use_masks and hyper.use_virtual and hyper.zeta > 0 and len(videos) >= 2:
        masks = compute_segment_masks(embeddings, hyper)
    else:
        masks = [np.zeros(e.shape[0], dtype=bool) for e in embeddings]
    pool = np.concatenate([e[~m] for e, m in zip(embeddings, masks)], axis=0)
    if pool.shape[0] < k:
        raise DegenerateData("all frames masked as background")
    centers = init_centers(pool, k, rng)

    def cut_one(idx: int):
        e = embeddings[idx]
        unary = np.sum((e[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels, trace = alpha_expansion(GraphCutProblem(unary=unary, pairwise_weight=beta))
        labels = labels.astype(np.int64)
        labels[masks[idx]] = -1
        return labels, trace

    workers = min(worker_count(), len(videos))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cut = list(ex.map(cut_one, range(len(videos))))
    else:
        cut = [cut_one(i) for i in range(len(videos))]

    label_seqs = []
    orders = []
    traces = []
    for video, (labels, trace) in zip(videos, cut):
        label_seqs.append(LabelSequence(video_id=video.video_id, labels=labels))
        if np.any(labels != -1):
            orders.append(tuple(keystep_order(labels)))
        else:
            orders.append(tuple())
        traces.append(tuple(trace))
    ranked = rank_orders([list(o) for o in orders if o])
    return SegmentationResult(
        labels=tuple(label_seqs),
        orders=tuple(orders),
        task_order=tuple(ranked),
        energy_traces=tuple(traces),
        centers=centers,
    )
