"""Poincare embeddings of a transitive-closure relation set.

Each observed pair ``(u, v)`` contributes the negative log-likelihood

    -log( exp(-d(u, v)) / sum_{w in {v} + negatives} exp(-d(u, w)) )

where the negatives are nouns ``w != u`` with ``(u, w)`` unobserved.  Every
noun is one component of a product of Poincare balls, so one optimizer step
on one positive pair updates the whole product.
"""

import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .manifold import ProductManifold
from .optim import RiemannianOptimizer, Schedule
from .poincare import CLIP_RADIUS, PoincareBall, _distance, _dot, _sqnorm

logger = logging.getLogger(__name__)


class EdgeListError(ValueError):
    pass


class RelationSet:
    """Observed ordered pairs over an interned symbol table.

    ``pairs`` is an ``(P, 2)`` integer array; ``adjacency[u]`` is the set of
    ``v`` with ``(u, v)`` observed.
    """

    def __init__(self, nouns, pairs):
        self.nouns = list(nouns)
        self.index = {s: i for i, s in enumerate(self.nouns)}
        if len(self.index) != len(self.nouns):
            raise ValueError("duplicate noun symbols")
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = len(self.nouns)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError("pair index out of range")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("self pairs are not allowed")
        self.pairs = pairs
        self.adjacency = [set() for _ in range(n)]
        for u, v in pairs:
            self.adjacency[u].add(int(v))
        self._negatives = {}

    def __len__(self):
        return len(self.pairs)

    @property
    def n_nouns(self):
        return len(self.nouns)

    def pair_set(self):
        return {(int(u), int(v)) for u, v in self.pairs}

    def negatives_for(self, u):
        """Indices ``w != u`` with ``(u, w)`` not observed, ascending."""
        cand = self._negatives.get(u)
        if cand is None:
            mask = np.ones(self.n_nouns, dtype=bool)
            mask[u] = False
            mask[list(self.adjacency[u])] = False
            cand = np.flatnonzero(mask)
            self._negatives[u] = cand
        return cand


def ingest_edges(lines):
    """Parse ``child<TAB>parent`` lines into a deduplicated :class:`RelationSet`.

    Blank lines and lines starting with ``#`` are skipped.  Symbols are
    interned in first-seen order.
    """
    index, nouns = {}, []
    seen, pairs = set(), []

    def intern(sym):
        i = index.get(sym)
        if i is None:
            i = index[sym] = len(nouns)
            nouns.append(sym)
        return i

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise EdgeListError(f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
        child, parent = fields
        if child == parent:
            raise EdgeListError(f"line {lineno}: self-loop on {child!r}")
        pair = (intern(child), intern(parent))
        if pair not in seen:
            seen.add(pair)
            pairs.append(pair)
    return RelationSet(nouns, pairs)


def read_edges(path):
    with open(path, encoding="utf-8") as f:
        return ingest_edges(f)


def transitive_closure(r):
    """Smallest superset of ``r.pairs`` closed under ``(a,b),(b,c) -> (a,c)``.

    Pairs come out ordered by source then target index.  Cycles are allowed,
    but the closure never adds self pairs.
    """
    out = []
    for u in range(r.n_nouns):
        reach, queue = set(), deque(r.adjacency[u])
        while queue:
            w = queue.popleft()
            if w in reach:
                continue
            reach.add(w)
            queue.extend(r.adjacency[w] - reach)
        reach.discard(u)
        out.extend((u, w) for w in sorted(reach))
    return RelationSet(r.nouns, out)


def sample_negatives(r, u, v, k, rng):
    """Draw ``k`` negatives for ``u`` uniformly, with replacement."""
    if k < 1:
        raise ValueError("need at least one negative")
    cand = r.negatives_for(u)
    if cand.size == 0:
        raise ValueError(f"noun {r.nouns[u]!r} is related to every other noun")
    return cand[rng.integers(0, cand.size, size=k)]


@dataclass
class EmbeddingTable:
    nouns: list
    coords: np.ndarray

    @property
    def dim(self):
        return self.coords.shape[1]


def _coords(table):
    return table.coords if isinstance(table, EmbeddingTable) else np.asarray(table)


def distance_grad(x, y):
    """Euclidean gradient of ``d(x, y)`` with respect to ``x``; rows broadcast.

    Returns zero where ``x == y`` (the distance is not differentiable there).
    """
    x2, y2 = _sqnorm(x), _sqnorm(y)
    a, b = 1 - x2, 1 - y2
    gm1 = 2 * _sqnorm(x - y) / (a * b)  # gamma - 1 without cancellation
    root = np.sqrt(gm1 * (gm1 + 2))
    coef = (1 + y2 - 2 * _dot(x, y)) / a**2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 4 / (b * root) * (coef * x - y / a)
    return np.where(root > 0, g, 0.0)


def _loss_and_grad(coords, u, v, negs):
    targets = np.concatenate(([v], np.asarray(negs, dtype=np.int64)))
    xu = coords[u]
    xt = coords[targets]
    d = _distance(xu[None, :], xt)
    shift = np.min(d)
    w = np.exp(-(d - shift))
    total = w.sum()
    p = w / total
    loss = d[0] - shift + np.log(total)
    dl_dd = -p
    dl_dd[0] += 1.0
    gu = distance_grad(xu[None, :], xt)
    gt = distance_grad(xt, xu[None, :])
    idx = np.concatenate(([u], targets))
    grads = np.concatenate(((dl_dd @ gu)[None, :], dl_dd[:, None] * gt))
    return float(loss), idx, grads


def loss_term(table, u, v, negs):
    """Negative log-softmax of ``-d(u, v)`` against ``{v} + negs``."""
    if len(negs) == 0:
        raise ValueError("need at least one negative")
    coords = _coords(table)
    targets = np.concatenate(([v], np.asarray(negs, dtype=np.int64)))
    d = _distance(coords[u][None, :], coords[targets])
    shift = np.min(d)
    return float(d[0] - shift + np.log(np.sum(np.exp(-(d - shift)))))


def loss_grad(table, u, v, negs):
    """Euclidean gradients of :func:`loss_term`, keyed by noun index.

    Repeated negatives contribute once per occurrence.
    """
    if len(negs) == 0:
        raise ValueError("need at least one negative")
    _, idx, grads = _loss_and_grad(_coords(table), u, v, negs)
    out = {}
    for i, g in zip(idx, grads):
        i = int(i)
        out[i] = out[i] + g if i in out else g.copy()
    return out


@dataclass
class EmbedConfig:
    dim: int = 5
    optimizer: str = "ramsgrad"
    schedule: Schedule = field(default_factory=Schedule)
    epochs: int = 50
    negatives: int = 10
    seed: int = 0
    init_scale: float = 1e-3
    accumulate_epsilon: bool = False
    record: str = None


def init_embedding(r, dim, seed, init_scale=1e-3):
    rng = np.random.default_rng(seed)
    return rng.uniform(-init_scale, init_scale, size=(r.n_nouns, dim))


def train_embeddings(r, cfg, callback=None):
    """Train an embedding of ``r``; returns ``(EmbeddingTable, RunTrace)``.

    Each epoch visits the pairs in a seeded random order and takes one
    optimizer step per pair.  ``trace.epochs`` gets one dict per epoch with
    ``mean_loss``; ``callback(epoch, table, stats)`` runs after each epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    coords0 = rng.uniform(-cfg.init_scale, cfg.init_scale, size=(r.n_nouns, cfg.dim))
    ball = PoincareBall(cfg.dim, CLIP_RADIUS)
    manifold = ProductManifold([(ball, r.n_nouns)])
    opt = RiemannianOptimizer(cfg.optimizer, manifold, [coords0], cfg.schedule,
                              accumulate_epsilon=cfg.accumulate_epsilon, record=cfg.record)
    trace = opt.trace
    n_pairs = len(r.pairs)
    egrad = np.zeros_like(coords0)
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n_pairs)
        total = 0.0
        for p in order:
            u, v = r.pairs[p]
            negs = sample_negatives(r, u, v, cfg.negatives, rng)
            x = opt.x[0]
            loss, idx, grads = _loss_and_grad(x, u, v, negs)
            total += loss
            if cfg.record:
                trace.objective.append(loss)
            egrad[:] = 0.0
            np.add.at(egrad, idx, grads)
            opt.step([ball.egrad_to_rgrad(x, egrad)], epoch=epoch)
        stats = {
            "epoch": epoch + 1,
            "mean_loss": total / max(n_pairs, 1),
            "alpha": cfg.schedule.alpha(max(opt.n - 1, 1), epoch),
            "beta1": cfg.schedule.beta1_at(max(opt.n - 1, 1)),
            "elapsed_ms": (time.perf_counter() - started) * 1000.0,
        }
        trace.epochs.append(stats)
        logger.debug("epoch %d mean loss %.6f", epoch + 1, stats["mean_loss"])
        if callback is not None:
            callback(epoch + 1, EmbeddingTable(r.nouns, opt.x[0]), stats)
    return EmbeddingTable(r.nouns, opt.x[0].copy()), trace


@dataclass
class EvalReport:
    mean_rank: float
    map: float
    ranks: np.ndarray


def evaluate_reconstruction(table, r):
    """Mean rank and MAP of every observed pair against its negatives.

    ``rank(u, v) = 1 + #{negatives w of u : d(u, w) < d(u, v)}``.  The
    average precision of ``u`` ranks its true neighbors against its negatives;
    ties between a neighbor and a negative favour the neighbor, consistently
    with the rank.
    """
    coords = _coords(table)
    if coords.shape[0] < r.n_nouns:
        raise ValueError(f"table has {coords.shape[0]} rows for {r.n_nouns} nouns")
    rank_of = {}
    aps = []
    for u in range(r.n_nouns):
        nbrs = r.adjacency[u]
        if not nbrs:
            continue
        d = _distance(coords[u][None, :], coords[: r.n_nouns])
        pos = np.array(sorted(nbrs))
        neg_d = np.sort(d[r.negatives_for(u)])
        pos_d = d[pos]
        closer_neg = np.searchsorted(neg_d, pos_d, side="left")
        hits = np.searchsorted(np.sort(pos_d), pos_d, side="right")
        aps.append(float(np.mean(hits / (hits + closer_neg))))
        for v, c in zip(pos, closer_neg):
            rank_of[(u, int(v))] = 1 + int(c)
    ranks = np.array([rank_of[(int(u), int(v))] for u, v in r.pairs], dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("relation set is empty")
    return EvalReport(float(ranks.mean()), float(np.mean(aps)), ranks)
