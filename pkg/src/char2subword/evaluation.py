"""Measurement: prediction accuracy, neighbor precision, queries, stats, dumps."""

import io
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .objectives import rank_neighbors
from .vocab import char_sequence, tokenize_word, whitespace_split


@dataclass(frozen=True)
class PrecisionReport:
    accuracy: float
    precision_at: dict  # k -> mean precision over tokens
    avg_precision: float

    def to_text(self):
        lines = [f"accuracy {self.accuracy:.6f}"]
        for k in sorted(self.precision_at):
            lines.append(f"prec@{k} {self.precision_at[k]:.6f}")
        lines.append(f"avg_precision {self.avg_precision:.6f}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text):
        acc, per_k, avg = 0.0, {}, 0.0
        for line in text.splitlines():
            key, val = line.split()
            if key == "accuracy":
                acc = float(val)
            elif key == "avg_precision":
                avg = float(val)
            else:
                per_k[int(key.split("@")[1])] = float(val)
        return PrecisionReport(accuracy=acc, precision_at=per_k, avg_precision=avg)


def embed_vocab(params, vocab, alphabet, marker_on_full_words=True):
    """f_theta over every non-special vocabulary entry; returns (ids, matrix)."""
    ids = vocab.non_special_ids()
    vecs = np.empty((len(ids), params.config.d_out))
    for row, i in enumerate(ids):
        seq = char_sequence(vocab.token(i), False, alphabet,
                           max_chars=params.config.max_chars,
                           marker_on_full_words=marker_on_full_words)
        vecs[row], _, _ = model_mod.forward(params, seq)
    return ids, vecs


def accuracy(params, vocab, e_table, alphabet, embedded=None):
    """Fraction of non-special entries whose argmax over e_hat . E^T is themselves."""
    ids, vecs = embedded if embedded is not None else embed_vocab(params, vocab, alphabet)
    logits = vecs @ e_table.matrix.T
    pred = logits.argmax(axis=1)  # np.argmax takes the first max: ascending-id ties
    return float(np.mean(pred == np.asarray(ids)))


def precision_at_k(params, vocab, e_table, index, alphabet, k_max=15, embedded=None):
    """Neighbor-overlap precision for k = 1..k_max, averaged over tokens."""
    if k_max > index.k:
        raise ValueError(f"k_max={k_max} exceeds neighbor index depth {index.k}")
    ids, vecs = embedded if embedded is not None else embed_vocab(params, vocab, alphabet)
    overlaps = np.zeros(k_max)
    for row, i in enumerate(ids):
        truth = index.neighbors(i)
        pred, _ = rank_neighbors(e_table, vecs[row], k_max)
        for k in range(1, k_max + 1):
            overlaps[k - 1] += len(set(truth[:k]) & set(pred[:k])) / k
    per_k = {k: overlaps[k - 1] / len(ids) for k in range(1, k_max + 1)}
    acc = accuracy(params, vocab, e_table, alphabet, embedded=(ids, vecs))
    return PrecisionReport(
        accuracy=acc,
        precision_at=per_k,
        avg_precision=float(np.mean(list(per_k.values()))),
    )


def neighbor_query(params, e_table, vocab, alphabet, query, is_full_word=True, n=5,
                   marker_on_full_words=True):
    """Top-n vocabulary entries by cosine to f_theta(chars(query))."""
    if n > len(vocab):
        raise ValueError(f"n={n} exceeds vocabulary size {len(vocab)}")
    if n == 0:
        return []
    seq = char_sequence(query, is_full_word, alphabet,
                       max_chars=params.config.max_chars,
                       marker_on_full_words=marker_on_full_words)
    e_hat, _, _ = model_mod.forward(params, seq)
    order, sims = rank_neighbors(e_table, e_hat, n)
    return [(vocab.token(int(i)), float(s)) for i, s in zip(order, sims)]


@dataclass(frozen=True)
class SeqLengthStats:
    mean_tokens: float
    max_tokens: int
    mean_subwords: float
    max_subwords: int
    ratio: float

    def to_text(self):
        return (f"mean_tokens {self.mean_tokens:.4f}\nmax_tokens {self.max_tokens}\n"
                f"mean_subwords {self.mean_subwords:.4f}\nmax_subwords {self.max_subwords}\n"
                f"ratio {self.ratio:.4f}\n")


def seq_length_stats(sentences, vocab):
    """Whitespace-token vs WordPiece-piece counts over a corpus."""
    tok_counts, sub_counts = [], []
    for sentence in sentences:
        words = whitespace_split(sentence)
        if not words:
            continue
        tok_counts.append(len(words))
        sub_counts.append(sum(len(tokenize_word(vocab, w)) for w in words))
    if not tok_counts:
        return SeqLengthStats(0.0, 0, 0.0, 0, 0.0)
    total_tok, total_sub = sum(tok_counts), sum(sub_counts)
    return SeqLengthStats(
        mean_tokens=total_tok / len(tok_counts),
        max_tokens=max(tok_counts),
        mean_subwords=total_sub / len(sub_counts),
        max_subwords=max(sub_counts),
        ratio=total_sub / total_tok,
    )


def dump_attention(params, alphabet, query, is_full_word=True, marker_on_full_words=True):
    """Serialize per-layer per-head attention maps with character-labeled rows."""
    seq = char_sequence(query, is_full_word, alphabet,
                       max_chars=params.config.max_chars,
                       marker_on_full_words=marker_on_full_words)
    _, maps, _ = model_mod.forward(params, seq)
    labels = [alphabet.char(c) for c in seq.chars]
    out = io.StringIO()
    out.write(f"input {query}\nchars {' '.join(labels)}\n")
    for j, layer in enumerate(maps):
        for h, mat in enumerate(layer):
            out.write(f"layer {j} head {h}\n")
            for label, row in zip(labels, mat):
                out.write(label + " " + " ".join(f"{p:.6f}" for p in row) + "\n")
    return out.getvalue()
