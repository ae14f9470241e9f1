"""Simulation training (mimic the frozen table under noise) and character-level
MLM pre-training.

Both trainers are deterministic per (seed, config, inputs) and never write to
the embedding table; a checksum asserts that after every run.
"""

import random
import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation, model as model_mod
from .noise import NoiseConfig, sample_noisy
from .objectives import (
    LossWeights,
    build_neighbor_index,
    combined_loss,
    combined_loss_gradient,
)
from .vocab import (
    MASK_CHAR_INDEX,
    UNK,
    CharSequence,
    char_sequence,
    tokenize_word,
    whitespace_split,
)


class TrainingError(RuntimeError):
    """Raised when training hits a non-finite loss or a config mismatch."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    noise: NoiseConfig = None  # None disables augmentation
    grad_clip: float = None
    nbr_k: int = 5
    eval_k: int = 15
    squared_l2: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class _Adam:
    def __init__(self, config):
        self.cfg = config
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = {k: np.zeros_like(g) for k, g in grads.items()}
            self.v = {k: np.zeros_like(g) for k, g in grads.items()}
        c = self.cfg
        if c.grad_clip is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > c.grad_clip:
                scale = c.grad_clip / total
                grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * (g * g)
            params.tensors[k] -= c.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def _accumulate(total, grads):
    if total is None:
        return grads
    for k, g in grads.items():
        total[k] += g
    return total


def simulation_sample_loss(params, seq, target_id, e_table, index, weights, squared_l2=False):
    """Forward, loss, and full parameter gradient for one simulation sample."""
    e_hat, _, cache = model_mod.forward(params, seq)
    e = e_table.row(target_id)
    total, parts = combined_loss(target_id, e, e_hat, e_table, index, weights,
                                 squared_l2=squared_l2)
    d_ehat = combined_loss_gradient(target_id, e, e_hat, e_table, index, weights,
                                    squared_l2=squared_l2)
    grads = model_mod.backward(params, seq, cache, d_ehat)
    return total, parts, grads


def train_simulation(params, vocab, e_table, alphabet, config, index=None,
                     marker_on_full_words=True, eval_every=1):
    """Train f_theta to mimic the frozen table over the vocabulary entries.

    Returns (trained params, per-epoch metrics list). Targets are the clean
    table rows even when the input characters are noised.
    """
    if e_table.dim != params.config.d_out:
        raise TrainingError(
            f"table width {e_table.dim} != model output width {params.config.d_out}"
        )
    checksum = e_table.checksum()
    if index is None:
        index = build_neighbor_index(e_table, min(config.nbr_k, e_table.size))
    eval_index = build_neighbor_index(e_table, min(config.eval_k, e_table.size))

    rng = random.Random(config.seed)
    params = params.copy()
    opt = _Adam(config)
    sample_ids = vocab.non_special_ids()

    clean_seqs = {
        i: char_sequence(vocab.token(i), False, alphabet,
                        max_chars=params.config.max_chars,
                        marker_on_full_words=marker_on_full_words)
        for i in sample_ids
    }

    metrics = []
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        order = list(sample_ids)
        rng.shuffle(order)
        sums = {"total": 0.0, "cos": 0.0, "ce": 0.0, "l2": 0.0, "nbr": 0.0}
        batch_grads, batch_n = None, 0
        for step, i in enumerate(order):
            token = vocab.token(i)
            if config.noise is not None:
                noised = sample_noisy(token, rng, config.noise)
                seq = (clean_seqs[i] if noised == token else
                       char_sequence(noised, False, alphabet,
                                     max_chars=params.config.max_chars,
                                     marker_on_full_words=marker_on_full_words))
            else:
                seq = clean_seqs[i]
            total, parts, grads = simulation_sample_loss(
                params, seq, i, e_table, index, config.weights,
                squared_l2=config.squared_l2)
            if not np.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}, token {token!r}"
                )
            sums["total"] += total
            for k, v in parts.items():
                sums[k] += v
            batch_grads = _accumulate(batch_grads, grads)
            batch_n += 1
            if batch_n == config.batch_size or step == len(order) - 1:
                scaled = {k: g / batch_n for k, g in batch_grads.items()}
                opt.step(params, scaled)
                batch_grads, batch_n = None, 0

        record = {"epoch": epoch}
        for k in ("total", "cos", "ce", "l2", "nbr"):
            record[k] = sums[k] / len(order)
        if eval_every and (epoch % eval_every == 0 or epoch == config.epochs - 1):
            embedded = evaluation.embed_vocab(params, vocab, alphabet,
                                              marker_on_full_words=marker_on_full_words)
            report = evaluation.precision_at_k(
                params, vocab, e_table, eval_index, alphabet,
                k_max=eval_index.k, embedded=embedded)
            record["accuracy"] = report.accuracy
            record["prec1"] = report.precision_at[1]
            record["prec15"] = report.precision_at.get(15, report.precision_at[eval_index.k])
        record["wall_time"] = time.monotonic() - t0
        metrics.append(record)

    if e_table.checksum() != checksum:
        raise TrainingError("embedding table changed during training")
    return params, metrics


@dataclass(frozen=True)
class MaskedToken:
    position: int
    target_id: int
    actions: tuple  # per character: "mask" | "randomize" | "keep"


@dataclass(frozen=True)
class MaskingPlan:
    entries: tuple

    def __len__(self):
        return len(self.entries)


def make_masking_plan(token_ids, char_seqs, rng, select_p=0.15,
                      mask_p=0.8, randomize_p=0.1):
    """Select ~15% of tokens; draw 80/10/10 per-character actions for each."""
    if len(token_ids) != len(char_seqs):
        raise ValueError("token_ids and char_seqs must be aligned")
    entries = []
    for pos, (tid, seq) in enumerate(zip(token_ids, char_seqs)):
        if rng.random() >= select_p:
            continue
        actions = []
        for _ in seq.chars:
            u = rng.random()
            if u < mask_p:
                actions.append("mask")
            elif u < mask_p + randomize_p:
                actions.append("randomize")
            else:
                actions.append("keep")
        entries.append(MaskedToken(position=pos, target_id=tid, actions=tuple(actions)))
    return MaskingPlan(entries=tuple(entries))


def apply_masking(plan, char_seqs, alphabet, rng):
    """Render the plan: MASK_CHAR for mask, a different ordinary character for
    randomize, untouched for keep. Returns masked sequences aligned to plan."""
    ordinary = list(alphabet.ordinary_indices())
    masked = []
    for entry in plan.entries:
        seq = char_seqs[entry.position]
        chars = list(seq.chars)
        for pos, action in enumerate(entry.actions):
            if action == "mask":
                chars[pos] = MASK_CHAR_INDEX
            elif action == "randomize":
                choices = [c for c in ordinary if c != chars[pos]]
                if choices:
                    chars[pos] = rng.choice(choices)
        masked.append(CharSequence(token=seq.token, chars=tuple(chars),
                                   is_full_word=seq.is_full_word))
    return masked


def mlm_step(params, masked_seqs, targets, e_table):
    """Mean CE of frozen-table predictions over the selected tokens.

    Returns (loss, grads); gradients flow only into char2subword parameters.
    """
    if not masked_seqs:
        zero = {name: np.zeros(shape)
                for name, shape in model_mod.tensor_shapes(params.config, params.alphabet_size)}
        return 0.0, zero
    n = len(masked_seqs)
    total_loss = 0.0
    grads = None
    for seq, target in zip(masked_seqs, targets):
        if not 0 <= target < e_table.size:
            raise IndexError(f"target id {target} out of range for |V|={e_table.size}")
        e_hat, _, cache = model_mod.forward(params, seq)
        logits = e_table.matrix @ e_hat
        shifted = logits - logits.max()
        p = np.exp(shifted)
        p /= p.sum()
        total_loss += float(-np.log(p[target]))
        dlogits = p.copy()
        dlogits[target] -= 1.0
        d_ehat = (e_table.matrix.T @ dlogits) / n
        grads = _accumulate(grads, model_mod.backward(params, seq, cache, d_ehat))
    return total_loss / n, grads


def corpus_samples(vocab, alphabet, lines, max_chars=32, marker_on_full_words=True):
    """Tokenize corpus lines into aligned (token_id, CharSequence) sequences.

    Single-piece words are full words (marker handling applies); OOV words
    keep their surface characters with an [UNK] target.
    """
    unk_id = vocab.id_of[UNK]
    sequences = []
    for line in lines:
        ids, seqs = [], []
        for word in whitespace_split(line):
            pieces = tokenize_word(vocab, word)
            if pieces == [UNK]:
                ids.append(unk_id)
                seqs.append(char_sequence(word, True, alphabet, max_chars=max_chars,
                                          marker_on_full_words=marker_on_full_words))
                continue
            full = len(pieces) == 1
            for piece in pieces:
                ids.append(vocab.id_of[piece])
                seqs.append(char_sequence(piece, full, alphabet, max_chars=max_chars,
                                          marker_on_full_words=marker_on_full_words))
        if ids:
            sequences.append((ids, seqs))
    return sequences


def pretrain_mlm(params, sequences, vocab, e_table, alphabet, config, select_p=0.15):
    """Dynamic character-level MLM over token-id sequences; E stays frozen.

    `sequences` is a list of (token_ids, char_seqs) pairs from corpus_samples.
    Returns (trained params, per-epoch metrics).
    """
    if not sequences:
        raise TrainingError("pretrain_mlm requires a nonempty corpus")
    if e_table.dim != params.config.d_out:
        raise TrainingError(
            f"table width {e_table.dim} != model output width {params.config.d_out}"
        )
    checksum = e_table.checksum()
    rng = random.Random(config.seed)
    params = params.copy()
    opt = _Adam(config)

    metrics = []
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        order = list(range(len(sequences)))
        rng.shuffle(order)
        epoch_loss, epoch_sel = 0.0, 0
        batch_grads, batch_n = None, 0
        for step, si in enumerate(order):
            ids, seqs = sequences[si]
            plan = make_masking_plan(ids, seqs, rng, select_p=select_p)
            masked = apply_masking(plan, seqs, alphabet, rng)
            targets = [entry.target_id for entry in plan.entries]
            loss, grads = mlm_step(params, masked, targets, e_table)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite MLM loss at epoch {epoch}, step {step}")
            if targets:
                epoch_loss += loss * len(targets)
                epoch_sel += len(targets)
                batch_grads = _accumulate(batch_grads, grads)
                batch_n += 1
            if batch_n and (batch_n == config.batch_size or step == len(order) - 1):
                scaled = {k: g / batch_n for k, g in batch_grads.items()}
                opt.step(params, scaled)
                batch_grads, batch_n = None, 0
        metrics.append({
            "epoch": epoch,
            "mlm_loss": epoch_loss / max(epoch_sel, 1),
            "selected": epoch_sel,
            "wall_time": time.monotonic() - t0,
        })

    if e_table.checksum() != checksum:
        raise TrainingError("embedding table changed during pre-training")
    return params, metrics
