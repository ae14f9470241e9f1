import numpy as np
import pytest

import char2subword as c2s
from char2subword import model as M
from char2subword.numerics import finite_diff_gradient, layer_norm, softmax_rows, sinusoidal_pe, gelu
from char2subword.vocab import char_sequence


@pytest.fixture
def alphabet(toy_vocab):
    return c2s.build_alphabet(toy_vocab)


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


class TestInitParams:
    def test_deterministic_per_seed(self, tiny_config, alphabet):
        p1 = M.init_params(tiny_config, len(alphabet), seed=7)
        p2 = M.init_params(tiny_config, len(alphabet), seed=7)
        for name in p1.tensors:
            assert np.array_equal(p1.tensors[name], p2.tensors[name])

    def test_different_seeds_differ(self, tiny_config, alphabet):
        p1 = M.init_params(tiny_config, len(alphabet), seed=7)
        p2 = M.init_params(tiny_config, len(alphabet), seed=8)
        assert not np.array_equal(p1.tensors["We"], p2.tensors["We"])

    def test_biases_zero_norms_identity(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        assert np.all(p.tensors["be"] == 0.0)
        assert np.all(p.tensors["L0.b1"] == 0.0)
        assert np.all(p.tensors["L0.ln1.g"] == 1.0)
        assert np.all(p.tensors["ln_out.b"] == 0.0)

    def test_xavier_bound(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        w = p.tensors["L0.W1"]
        bound = np.sqrt(6.0 / sum(w.shape))
        assert np.all(np.abs(w) <= bound)


class TestForward:
    def test_single_char_attention_is_one(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        seq = char_sequence("a", False, alphabet)
        _, maps, _ = M.forward(p, seq)
        for layer in maps:
            for a in layer:
                assert a.shape == (1, 1)
                assert a[0, 0] == pytest.approx(1.0)

    def test_output_dim(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        for token in ("apple", "a", "blank"):
            emb, _, _ = M.forward(p, char_sequence(token, False, alphabet))
            assert emb.shape == (tiny_config.d_out,)

    def test_attention_rows_stochastic(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=1)
        _, maps, _ = M.forward(p, char_sequence("garden", True, alphabet))
        for layer in maps:
            for a in layer:
                np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
                assert np.all(a >= 0.0) and np.all(a <= 1.0)

    def test_deterministic(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=2)
        seq = char_sequence("apple", False, alphabet)
        e1, _, _ = M.forward(p, seq)
        e2, _, _ = M.forward(p, seq)
        assert np.array_equal(e1, e2)

    def test_permutation_sensitive(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=3)
        e1, _, _ = M.forward(p, char_sequence("ab", False, alphabet))
        e2, _, _ = M.forward(p, char_sequence("ba", False, alphabet))
        assert not np.allclose(e1, e2)

    def test_empty_sequence_rejected(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        seq = char_sequence("a", False, alphabet)
        object.__setattr__(seq, "chars", ())
        with pytest.raises(ValueError):
            M.forward(p, seq)

    def test_matches_step_by_step_trace(self, alphabet):
        # independent re-derivation of the layer equations at hand size
        cfg = M.ModelConfig(d_char=2, d_out=2, n_layers=1, n_heads=1)
        p = M.init_params(cfg, len(alphabet), seed=5)
        seq = char_sequence("ab", False, alphabet)
        t = p.tensors
        x = np.stack([t["char_emb"][seq.chars[0]] + sinusoidal_pe(0, 2),
                      t["char_emb"][seq.chars[1]] + sinusoidal_pe(1, 2)])
        xb = layer_norm(x, t["L0.ln1.g"], t["L0.ln1.b"], cfg.ln_eps)
        q, k, v = xb @ t["L0.Wq.0"], xb @ t["L0.Wk.0"], xb @ t["L0.Wv.0"]
        a = softmax_rows(q @ k.T / np.sqrt(2.0))
        xp = (a @ v) @ t["L0.Wo"] + xb
        xbp = layer_norm(xp, t["L0.ln2.g"], t["L0.ln2.b"], cfg.ln_eps)
        xo = gelu(xbp @ t["L0.W1"] + t["L0.b1"]) @ t["L0.W2"] + t["L0.b2"] + xbp
        y = xo @ t["We"] + t["be"]
        expected = layer_norm(y.max(axis=0), t["ln_out.g"], t["ln_out.b"], cfg.ln_eps)
        emb, _, _ = M.forward(p, seq)
        np.testing.assert_allclose(emb, expected, atol=1e-12)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        seq = char_sequence("apple", False, alphabet)
        _, _, cache = M.forward(p, seq)
        grads = M.backward(p, seq, cache, np.zeros(tiny_config.d_out))
        for g in grads.values():
            assert np.all(g == 0.0)

    def test_unused_char_rows_zero(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        seq = char_sequence("apple", False, alphabet)
        _, _, cache = M.forward(p, seq)
        grads = M.backward(p, seq, cache, np.ones(tiny_config.d_out))
        used = set(seq.chars)
        for row in range(p.alphabet_size):
            if row not in used:
                assert np.all(grads["char_emb"][row] == 0.0)

    def test_mismatched_cache_rejected(self, tiny_config, alphabet):
        p = M.init_params(tiny_config, len(alphabet), seed=0)
        seq = char_sequence("apple", False, alphabet)
        other = char_sequence("blank", False, alphabet)
        _, _, cache = M.forward(p, seq)
        with pytest.raises(ValueError):
            M.backward(p, other, cache, np.zeros(tiny_config.d_out))

    @pytest.mark.parametrize("standard_preln", [False, True])
    def test_matches_finite_differences(self, alphabet, standard_preln):
        cfg = M.ModelConfig(d_char=8, d_out=6, n_layers=2, n_heads=2,
                            standard_preln=standard_preln)
        p = M.init_params(cfg, len(alphabet), seed=11)
        seq = char_sequence("badge", False, alphabet)
        u = np.random.default_rng(12).normal(size=cfg.d_out)
        _, _, cache = M.forward(p, seq)
        grads = M.backward(p, seq, cache, u)

        def loss():
            e, _, _ = M.forward(p, seq)
            return float(e @ u)

        for name in ("We", "be", "char_emb", "L0.Wq.0", "L0.Wk.1", "L0.Wv.0",
                     "L0.Wo", "L1.W1", "L1.b1", "L1.W2", "L1.b2",
                     "L0.ln1.g", "L1.ln2.b", "ln_out.g", "ln_out.b"):
            fd = finite_diff_gradient(lambda _: loss(), p.tensors[name], h=1e-5)
            assert rel_err(grads[name], fd).max() < 1e-4, name


class TestParamCount:
    def test_paper_scale_table(self):
        assert M.table_param_count(119547, 768) == 91_812_096

    def test_hand_summed_toy(self):
        cfg = M.ModelConfig(d_char=8, d_out=16, n_layers=1, n_heads=2)
        # char_emb 10*8; per layer: 2 LN pairs 4*8, qkv 3*2*(8*4), Wo 64,
        # W1 8*32 + 32, W2 32*8 + 8; head: We 8*16 + 16 + 2*16
        expected = 80 + (32 + 192 + 64 + 256 + 32 + 256 + 8) + (128 + 16 + 32)
        assert M.param_count(cfg, 10) == expected

    def test_zero_layer_boundary(self):
        cfg = M.ModelConfig(d_char=8, d_out=16, n_layers=0, n_heads=2)
        assert M.param_count(cfg, 10) == 80 + 128 + 16 + 32


class TestCheckpoint:
    def test_round_trip(self, tiny_config, alphabet, tmp_path):
        p = M.init_params(tiny_config, len(alphabet), seed=4)
        path = tmp_path / "model.c2sw"
        M.save_checkpoint(path, p, alphabet, marker_on_full_words=False)
        loaded, chars, marker = M.load_checkpoint(path)
        assert loaded.config == tiny_config
        assert chars == list(alphabet.chars)
        assert marker is False
        for name in p.tensors:
            assert np.array_equal(p.tensors[name], loaded.tensors[name])

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            M.load_checkpoint(path)

    def test_magic_bytes_present(self, tiny_config, alphabet, tmp_path):
        p = M.init_params(tiny_config, len(alphabet), seed=4)
        path = tmp_path / "model.c2sw"
        M.save_checkpoint(path, p, alphabet)
        assert path.read_bytes()[:4] == b"C2SW"
