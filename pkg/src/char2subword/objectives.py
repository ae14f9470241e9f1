"""The four simulation losses and the frozen-table neighbor index.

The table E is never trainable: loss gradients flow to the predicted
vector only.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import cosine_similarity

TABLE_MAGIC = b"EMBT"


@dataclass(frozen=True)
class EmbeddingTable:
    """Frozen |V| x d matrix; the simulation target."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"embedding table must be 2-D, got shape {m.shape}")
        norms = np.linalg.norm(m, axis=1)
        bad = np.where(norms == 0.0)[0]
        if bad.size:
            raise ValueError(f"embedding table has zero-norm row(s): {bad.tolist()}")
        object.__setattr__(self, "matrix", m)
        m.setflags(write=False)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def dim(self):
        return self.matrix.shape[1]

    def row(self, i):
        return self.matrix[i]

    def checksum(self):
        return hash(self.matrix.tobytes())


def save_table_text(path, table):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.size} {table.dim}\n")
        for row in table.matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def save_table_binary(path, table):
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<II", table.size, table.dim))
        fh.write(np.ascontiguousarray(table.matrix, dtype="<f4").tobytes())


def load_table(path):
    """Auto-detect text ("v d" header) vs binary ("EMBT" magic) table files."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic == TABLE_MAGIC:
            v, d = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(v * d * 4), dtype="<f4")
            return EmbeddingTable(matrix=data.astype(np.float64).reshape(v, d))
    with open(path, encoding="utf-8") as fh:
        v, d = (int(x) for x in fh.readline().split())
        rows = [np.array(fh.readline().split(), dtype=np.float64) for _ in range(v)]
    m = np.stack(rows)
    if m.shape != (v, d):
        raise ValueError(f"table header says {v}x{d} but data is {m.shape}")
    return EmbeddingTable(matrix=m)


@dataclass(frozen=True)
class NeighborIndex:
    """Top-k cosine neighbors per table row (self-inclusive), exact brute force."""

    k: int
    ids: np.ndarray = field(repr=False)  # (|V|, k) int array

    def neighbors(self, i):
        return self.ids[i]


def build_neighbor_index(e_table, k):
    """Rank all rows by cosine similarity, ties broken by ascending id."""
    m = e_table.matrix
    if k > e_table.size:
        raise ValueError(f"k={k} exceeds table size {e_table.size}")
    normed = m / np.linalg.norm(m, axis=1, keepdims=True)
    sims = normed @ normed.T
    ids = np.empty((e_table.size, k), dtype=np.int64)
    col = np.arange(e_table.size)
    for i in range(e_table.size):
        order = np.lexsort((col, -sims[i]))
        ids[i] = order[:k]
    return NeighborIndex(k=k, ids=ids)


def rank_neighbors(e_table, vec, n):
    """Top-n table rows by cosine to an arbitrary vector, same tie-breaking."""
    m = e_table.matrix
    normed = m / np.linalg.norm(m, axis=1, keepdims=True)
    v = np.asarray(vec, dtype=np.float64)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("cannot rank neighbors of a zero vector")
    sims = normed @ (v / nv)
    order = np.lexsort((np.arange(e_table.size), -sims))[:n]
    return order, sims[order]


@dataclass(frozen=True)
class LossWeights:
    l_cos: float = 1.0
    l_ce: float = 1.0
    l_l2: float = 1.0
    l_nbr: float = 1.0

    def __post_init__(self):
        vals = (self.l_cos, self.l_ce, self.l_l2, self.l_nbr)
        if any(w < 0 for w in vals):
            raise ValueError("loss weights must be nonnegative")
        if all(w == 0 for w in vals):
            raise ValueError("at least one loss weight must be positive")


def loss_cos(e, e_hat):
    """Cosine distance 1 - cos(e, e_hat)."""
    return 1.0 - cosine_similarity(e, e_hat)


def loss_ce(target_id, e_hat, e_table):
    """-log softmax(e_hat . E^T)[target]; E is frozen."""
    if not 0 <= target_id < e_table.size:
        raise IndexError(f"target id {target_id} out of range for |V|={e_table.size}")
    logits = e_table.matrix @ np.asarray(e_hat, dtype=np.float64)
    shifted = logits - logits.max()
    logz = np.log(np.exp(shifted).sum())
    return float(logz - shifted[target_id])


def loss_l2(e, e_hat, squared=False):
    """Euclidean distance between target and prediction (optionally squared)."""
    d = np.asarray(e, dtype=np.float64) - np.asarray(e_hat, dtype=np.float64)
    sq = float(d @ d)
    return sq if squared else float(np.sqrt(sq))


def loss_nbr(target_id, e_hat, e_table, index):
    """MSE between the target's and the prediction's cosine distances to the
    target's top-k table neighbors."""
    if index.ids.shape[0] != e_table.size:
        raise ValueError("neighbor index does not match the table")
    e = e_table.row(target_id)
    total = 0.0
    for j in index.neighbors(target_id):
        nj = e_table.row(j)
        d_true = 1.0 - cosine_similarity(e, nj)
        d_pred = 1.0 - cosine_similarity(e_hat, nj)
        total += (d_true - d_pred) ** 2
    return total / index.k


def combined_loss(target_id, e, e_hat, e_table, index, weights, squared_l2=False):
    """Weighted sum of the four objectives; returns (total, components)."""
    parts = {
        "cos": loss_cos(e, e_hat) if weights.l_cos else 0.0,
        "ce": loss_ce(target_id, e_hat, e_table) if weights.l_ce else 0.0,
        "l2": loss_l2(e, e_hat, squared=squared_l2) if weights.l_l2 else 0.0,
        "nbr": loss_nbr(target_id, e_hat, e_table, index) if weights.l_nbr else 0.0,
    }
    total = (weights.l_cos * parts["cos"] + weights.l_ce * parts["ce"]
             + weights.l_l2 * parts["l2"] + weights.l_nbr * parts["nbr"])
    return total, parts


def _grad_cos_sim(v, other):
    """d cos(v, other) / dv."""
    nv = np.linalg.norm(v)
    no = np.linalg.norm(other)
    c = float(v @ other / (nv * no))
    return other / (nv * no) - c * v / (nv * nv)


def combined_loss_gradient(target_id, e, e_hat, e_table, index, weights,
                           squared_l2=False):
    """Exact gradient of combined_loss with respect to e_hat."""
    e = np.asarray(e, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    grad = np.zeros_like(e_hat)

    if weights.l_cos:
        grad += weights.l_cos * (-_grad_cos_sim(e_hat, e))

    if weights.l_ce:
        logits = e_table.matrix @ e_hat
        shifted = logits - logits.max()
        p = np.exp(shifted)
        p /= p.sum()
        p[target_id] -= 1.0
        grad += weights.l_ce * (e_table.matrix.T @ p)

    if weights.l_l2:
        diff = e_hat - e
        if squared_l2:
            grad += weights.l_l2 * 2.0 * diff
        else:
            norm = np.linalg.norm(diff)
            if norm > 0.0:  # gradient defined as 0 at e == e_hat
                grad += weights.l_l2 * diff / norm

    if weights.l_nbr:
        erow = e_table.row(target_id)
        acc = np.zeros_like(e_hat)
        for j in index.neighbors(target_id):
            nj = e_table.row(j)
            d_true = 1.0 - cosine_similarity(erow, nj)
            d_pred = 1.0 - cosine_similarity(e_hat, nj)
            # d d_pred / d e_hat = -d cos(e_hat, n_j)/d e_hat
            acc += 2.0 * (d_true - d_pred) * _grad_cos_sim(e_hat, nj)
        grad += weights.l_nbr * acc / index.k

    return grad
