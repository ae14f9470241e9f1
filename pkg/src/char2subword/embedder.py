"""Deployment-facing embedding provider: table-only, full, and hybrid modes."""

import enum
from dataclasses import dataclass

from . import model as model_mod
from .vocab import char_sequence, tokenize_word, whitespace_split


class EmbedMode(enum.Enum):
    TABLE_ONLY = "table_only"
    FULL = "full"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class EmbeddedSequence:
    vectors: list  # d-vectors
    provenance: list  # "table" | "char2subword", aligned with vectors
    pieces: list  # token strings, aligned with vectors


def _module_vector(params, word, alphabet, marker_on_full_words):
    seq = char_sequence(word, True, alphabet,
                       max_chars=params.config.max_chars,
                       marker_on_full_words=marker_on_full_words)
    vec, _, _ = model_mod.forward(params, seq)
    return vec


def embed_sequence(mode, sentence, vocab, e_table, params=None, alphabet=None,
                   marker_on_full_words=True):
    """Embed a whitespace-split sentence under the chosen mode.

    table_only splits into WordPiece pieces and looks each up; full runs
    every word through the module; hybrid looks whole words up and backs
    off to the module for out-of-vocabulary words.
    """
    if mode != EmbedMode.TABLE_ONLY and params is None:
        raise ValueError(f"{mode.value} mode requires trained module parameters")
    vectors, provenance, pieces = [], [], []
    for word in whitespace_split(sentence):
        if mode == EmbedMode.TABLE_ONLY:
            for piece in tokenize_word(vocab, word):
                vectors.append(e_table.row(vocab.id_of[piece]))
                provenance.append("table")
                pieces.append(piece)
        elif mode == EmbedMode.FULL:
            vectors.append(_module_vector(params, word, alphabet, marker_on_full_words))
            provenance.append("char2subword")
            pieces.append(word)
        else:  # hybrid: whole-word lookup, case-sensitive, else back off
            if word in vocab.id_of:
                vectors.append(e_table.row(vocab.id_of[word]))
                provenance.append("table")
            else:
                vectors.append(_module_vector(params, word, alphabet, marker_on_full_words))
                provenance.append("char2subword")
            pieces.append(word)
    return EmbeddedSequence(vectors=vectors, provenance=provenance, pieces=pieces)


def coverage_report(sentences, vocab):
    """Fraction of corpus words that are whole-vocabulary hits vs backoff."""
    hits, total = 0, 0
    for sentence in sentences:
        for word in whitespace_split(sentence):
            total += 1
            if word in vocab.id_of:
                hits += 1
    if total == 0:
        return 0.0, 0.0
    return hits / total, (total - hits) / total


def write_embeddings(fh, embedded, mode):
    """Batch output: header "n d mode", then token, provenance, values."""
    d = len(embedded.vectors[0]) if embedded.vectors else 0
    fh.write(f"{len(embedded.vectors)} {d} {mode.value}\n")
    for piece, tag, vec in zip(embedded.pieces, embedded.provenance, embedded.vectors):
        fh.write(piece + "\t" + tag + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")
