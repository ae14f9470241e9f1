import numpy as np
import pytest

import char2subword as c2s
from char2subword import model as M
from char2subword.evaluation import (
    PrecisionReport,
    accuracy,
    dump_attention,
    embed_vocab,
    neighbor_query,
    precision_at_k,
    seq_length_stats,
)
from char2subword.objectives import build_neighbor_index, rank_neighbors
from char2subword.vocab import char_sequence


@pytest.fixture
def alphabet(toy_vocab):
    return c2s.build_alphabet(toy_vocab)


@pytest.fixture
def params(tiny_config, alphabet):
    return M.init_params(tiny_config, len(alphabet), seed=0)


class TestEmbedVocab:
    def test_shape_and_ids(self, params, toy_vocab, alphabet):
        ids, vecs = embed_vocab(params, toy_vocab, alphabet)
        assert vecs.shape == (len(ids), params.config.d_out)
        # [UNK] is special and excluded
        assert toy_vocab.id_of["[UNK]"] not in ids

    def test_rows_match_forward(self, params, toy_vocab, alphabet):
        ids, vecs = embed_vocab(params, toy_vocab, alphabet)
        i = ids[0]
        seq = char_sequence(toy_vocab.token(i), False, alphabet)
        expected, _, _ = M.forward(params, seq)
        np.testing.assert_array_equal(vecs[0], expected)


class TestAccuracy:
    def test_untrained_in_unit_interval(self, params, toy_vocab, toy_table, alphabet):
        a = accuracy(params, toy_vocab, toy_table, alphabet)
        assert 0.0 <= a <= 1.0

    def test_oracle_embeddings_give_one(self, params, toy_vocab, toy_table, alphabet):
        # feeding the true table rows as the "predictions" must score 1.0
        ids = toy_vocab.non_special_ids()
        vecs = toy_table.matrix[np.asarray(ids)]
        assert accuracy(params, toy_vocab, toy_table, alphabet,
                        embedded=(ids, vecs)) == 1.0

    def test_matches_loop_oracle(self, params, toy_vocab, toy_table, alphabet):
        ids, vecs = embed_vocab(params, toy_vocab, alphabet)
        hits = sum(int(np.argmax(toy_table.matrix @ v) == i)
                   for i, v in zip(ids, vecs))
        assert accuracy(params, toy_vocab, toy_table, alphabet,
                        embedded=(ids, vecs)) == pytest.approx(hits / len(ids))


class TestPrecisionAtK:
    def test_oracle_embeddings_perfect(self, params, toy_vocab, toy_table, alphabet):
        idx = build_neighbor_index(toy_table, 15)
        ids = toy_vocab.non_special_ids()
        vecs = toy_table.matrix[np.asarray(ids)]
        rep = precision_at_k(params, toy_vocab, toy_table, idx, alphabet,
                             embedded=(ids, vecs))
        assert rep.avg_precision == pytest.approx(1.0)
        assert all(v == pytest.approx(1.0) for v in rep.precision_at.values())

    def test_avg_is_mean_of_per_k(self, params, toy_vocab, toy_table, alphabet):
        idx = build_neighbor_index(toy_table, 15)
        rep = precision_at_k(params, toy_vocab, toy_table, idx, alphabet)
        assert rep.avg_precision == pytest.approx(
            np.mean(list(rep.precision_at.values())))
        assert sorted(rep.precision_at) == list(range(1, 16))

    def test_k_max_exceeding_index_rejected(self, params, toy_vocab, toy_table, alphabet):
        idx = build_neighbor_index(toy_table, 5)
        with pytest.raises(ValueError):
            precision_at_k(params, toy_vocab, toy_table, idx, alphabet, k_max=15)

    def test_report_text_round_trip(self, params, toy_vocab, toy_table, alphabet):
        idx = build_neighbor_index(toy_table, 5)
        rep = precision_at_k(params, toy_vocab, toy_table, idx, alphabet, k_max=5)
        back = PrecisionReport.from_text(rep.to_text())
        assert back.accuracy == pytest.approx(rep.accuracy, abs=1e-6)
        assert sorted(back.precision_at) == sorted(rep.precision_at)


class TestNeighborQuery:
    def test_returns_n_sorted(self, params, toy_vocab, toy_table, alphabet):
        out = neighbor_query(params, toy_table, toy_vocab, alphabet, "apple", n=5)
        assert len(out) == 5
        sims = [s for _, s in out]
        assert sims == sorted(sims, reverse=True)

    def test_matches_rank_neighbors(self, params, toy_vocab, toy_table, alphabet):
        out = neighbor_query(params, toy_table, toy_vocab, alphabet, "badge",
                             is_full_word=True, n=3)
        seq = char_sequence("badge", True, alphabet)
        e_hat, _, _ = M.forward(params, seq)
        order, _ = rank_neighbors(toy_table, e_hat, 3)
        assert [t for t, _ in out] == [toy_vocab.token(int(i)) for i in order]

    def test_n_zero(self, params, toy_vocab, toy_table, alphabet):
        assert neighbor_query(params, toy_table, toy_vocab, alphabet, "x", n=0) == []

    def test_n_too_large(self, params, toy_vocab, toy_table, alphabet):
        with pytest.raises(ValueError):
            neighbor_query(params, toy_table, toy_vocab, alphabet, "x",
                           n=len(toy_vocab) + 1)


class TestSeqLengthStats:
    def test_hand_counts(self, toy_vocab):
        # every toy word is a single piece; "zzzzz" falls back to one [UNK]
        stats = seq_length_stats(["apple badge", "zzzzz"], toy_vocab)
        assert stats.mean_tokens == pytest.approx(1.5)
        assert stats.max_tokens == 2
        assert stats.mean_subwords == pytest.approx(1.5)
        assert stats.ratio == pytest.approx(1.0)

    def test_empty_corpus(self, toy_vocab):
        stats = seq_length_stats([], toy_vocab)
        assert stats.ratio == 0.0

    def test_ratio_definition(self, toy_vocab):
        sentences = ["apple badge alarm", "black blade"]
        stats = seq_length_stats(sentences, toy_vocab)
        assert stats.ratio == pytest.approx(stats.mean_subwords * 2 /
                                            (stats.mean_tokens * 2))


class TestDumpAttention:
    def test_structure(self, params, alphabet, tiny_config):
        text = dump_attention(params, alphabet, "apple")
        lines = text.splitlines()
        assert lines[0] == "input apple"
        assert lines[1].startswith("chars # # a p p l e")
        headers = [l for l in lines if l.startswith("layer ")]
        assert len(headers) == tiny_config.n_layers * tiny_config.n_heads

    def test_rows_sum_to_one(self, params, alphabet):
        text = dump_attention(params, alphabet, "badge", is_full_word=False)
        for line in text.splitlines()[2:]:
            if line.startswith("layer "):
                continue
            probs = [float(x) for x in line.split()[1:]]
            assert sum(probs) == pytest.approx(1.0, abs=1e-4)
