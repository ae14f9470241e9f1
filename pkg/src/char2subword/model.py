"""The char2subword transformer: characters in, one subword-width vector out.

The forward pass follows pre-norm attention/FFN blocks whose residual adds
the *normalized* input (see ModelConfig.standard_preln for the conventional
variant), and finishes with a linear projection, max-pool over positions,
and a final layer norm. backward() is a hand-written exact reverse pass.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    gelu,
    gelu_backward,
    layer_norm,
    layer_norm_backward,
    sinusoidal_pe,
    softmax_rows,
)
CHECKPOINT_MAGIC = b"C2SW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    d_char: int
    d_out: int
    n_layers: int
    n_heads: int
    max_chars: int = 32
    ln_eps: float = 1e-5
    standard_preln: bool = False

    def __post_init__(self):
        if self.d_char < 1 or self.d_out < 1 or self.n_heads < 1 or self.max_chars < 1:
            raise ValueError("all ModelConfig counts must be >= 1 (n_layers may be 0)")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.d_char % self.n_heads != 0:
            raise ValueError(
                f"d_char ({self.d_char}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.ln_eps <= 0:
            raise ValueError("ln_eps must be > 0")

    @property
    def d_head(self):
        return self.d_char // self.n_heads


@dataclass
class Char2SubwordParams:
    """All trainable tensors, keyed by name."""

    config: ModelConfig
    alphabet_size: int
    tensors: dict = field(repr=False)

    def copy(self):
        return Char2SubwordParams(
            config=self.config,
            alphabet_size=self.alphabet_size,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )


@dataclass(frozen=True)
class AttentionMaps:
    """Per layer, per head: an n x n row-stochastic attention matrix."""

    maps: tuple  # tuple over layers of tuples over heads

    def __iter__(self):
        return iter(self.maps)

    def __len__(self):
        return len(self.maps)


def tensor_shapes(config, alphabet_size):
    """Ordered (name, shape) list for every trainable tensor."""
    d, dh, dout = config.d_char, config.d_head, config.d_out
    shapes = [("char_emb", (alphabet_size, d))]
    for j in range(config.n_layers):
        shapes += [(f"L{j}.ln1.g", (d,)), (f"L{j}.ln1.b", (d,))]
        for i in range(config.n_heads):
            shapes += [
                (f"L{j}.Wq.{i}", (d, dh)),
                (f"L{j}.Wk.{i}", (d, dh)),
                (f"L{j}.Wv.{i}", (d, dh)),
            ]
        shapes += [
            (f"L{j}.Wo", (d, d)),
            (f"L{j}.ln2.g", (d,)),
            (f"L{j}.ln2.b", (d,)),
            (f"L{j}.W1", (d, 4 * d)),
            (f"L{j}.b1", (4 * d,)),
            (f"L{j}.W2", (4 * d, d)),
            (f"L{j}.b2", (d,)),
        ]
    shapes += [
        ("We", (d, dout)),
        ("be", (dout,)),
        ("ln_out.g", (dout,)),
        ("ln_out.b", (dout,)),
    ]
    return shapes


def init_params(config, alphabet_size, seed):
    """Xavier-uniform weights, zero biases, identity layer norms; seeded."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(config, alphabet_size):
        leaf = name.rsplit(".", 1)[-1]
        if "ln" in name and leaf == "g":
            tensors[name] = np.ones(shape)
        elif "ln" in name and leaf == "b":
            tensors[name] = np.zeros(shape)
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return Char2SubwordParams(config=config, alphabet_size=alphabet_size, tensors=tensors)


def param_count(config, alphabet_size):
    """Exact trainable-parameter total for the module."""
    return sum(int(np.prod(shape)) for _, shape in tensor_shapes(config, alphabet_size))


def table_param_count(v, d):
    """Parameter count of a v x d embedding lookup table."""
    return int(v) * int(d)


def forward(params, seq):
    """Run the module on a CharSequence.

    Returns (embedding, attention_maps, cache); cache feeds backward().
    """
    cfg = params.config
    t = params.tensors
    n = len(seq)
    if n == 0:
        raise ValueError("forward requires a nonempty character sequence")
    if n > cfg.max_chars:
        raise ValueError(f"sequence length {n} exceeds max_chars {cfg.max_chars}")

    pe = np.stack([sinusoidal_pe(p, cfg.d_char) for p in range(n)])
    x = t["char_emb"][list(seq.chars)] + pe

    scale = 1.0 / np.sqrt(cfg.d_char)
    layers = []
    maps = []
    for j in range(cfg.n_layers):
        xin = x
        xb = layer_norm(xin, t[f"L{j}.ln1.g"], t[f"L{j}.ln1.b"], cfg.ln_eps)
        heads = []
        layer_maps = []
        for i in range(cfg.n_heads):
            q = xb @ t[f"L{j}.Wq.{i}"]
            k = xb @ t[f"L{j}.Wk.{i}"]
            v = xb @ t[f"L{j}.Wv.{i}"]
            a = softmax_rows((q @ k.T) * scale)
            heads.append({"q": q, "k": k, "v": v, "a": a})
            layer_maps.append(a)
        c = np.concatenate([h["a"] @ h["v"] for h in heads], axis=1)
        m = c @ t[f"L{j}.Wo"]
        res1 = xin if cfg.standard_preln else xb
        xp = m + res1
        xbp = layer_norm(xp, t[f"L{j}.ln2.g"], t[f"L{j}.ln2.b"], cfg.ln_eps)
        u = xbp @ t[f"L{j}.W1"] + t[f"L{j}.b1"]
        g = gelu(u)
        f = g @ t[f"L{j}.W2"] + t[f"L{j}.b2"]
        res2 = xp if cfg.standard_preln else xbp
        xout = f + res2
        layers.append({"xin": xin, "xb": xb, "heads": heads, "c": c,
                       "xp": xp, "xbp": xbp, "u": u, "g": g})
        maps.append(tuple(layer_maps))
        x = xout

    y = x @ t["We"] + t["be"]
    arg = y.argmax(axis=0)
    pooled = y[arg, np.arange(cfg.d_out)]
    emb = layer_norm(pooled, t["ln_out.g"], t["ln_out.b"], cfg.ln_eps)

    cache = {"seq": seq, "n": n, "layers": layers, "x_final": x,
             "y": y, "arg": arg, "pooled": pooled}
    return emb, AttentionMaps(maps=tuple(maps)), cache


def backward(params, seq, cache, upstream):
    """Exact gradients of <upstream, forward(params, seq)> for every tensor."""
    cfg = params.config
    t = params.tensors
    if cache.get("seq") is not seq and cache.get("seq") != seq:
        raise ValueError("backward cache does not match the given sequence")
    n = cache["n"]
    scale = 1.0 / np.sqrt(cfg.d_char)
    grads = {name: np.zeros(shape) for name, shape in tensor_shapes(cfg, params.alphabet_size)}

    upstream = np.asarray(upstream, dtype=np.float64)
    d_pooled, g_g, g_b = layer_norm_backward(cache["pooled"], t["ln_out.g"], cfg.ln_eps, upstream)
    grads["ln_out.g"] += g_g
    grads["ln_out.b"] += g_b

    dy = np.zeros_like(cache["y"])
    dy[cache["arg"], np.arange(cfg.d_out)] = d_pooled

    grads["We"] += cache["x_final"].T @ dy
    grads["be"] += dy.sum(axis=0)
    dx = dy @ t["We"].T

    for j in reversed(range(cfg.n_layers)):
        layer = cache["layers"][j]
        df = dx
        d_res2 = dx
        grads[f"L{j}.W2"] += layer["g"].T @ df
        grads[f"L{j}.b2"] += df.sum(axis=0)
        dg = df @ t[f"L{j}.W2"].T
        du = gelu_backward(layer["u"], dg)
        grads[f"L{j}.W1"] += layer["xbp"].T @ du
        grads[f"L{j}.b1"] += du.sum(axis=0)
        dxbp_ffn = du @ t[f"L{j}.W1"].T

        if cfg.standard_preln:
            dxp, g2g, g2b = layer_norm_backward(layer["xp"], t[f"L{j}.ln2.g"], cfg.ln_eps, dxbp_ffn)
            dxp = dxp + d_res2
        else:
            dxp, g2g, g2b = layer_norm_backward(
                layer["xp"], t[f"L{j}.ln2.g"], cfg.ln_eps, dxbp_ffn + d_res2
            )
        grads[f"L{j}.ln2.g"] += g2g
        grads[f"L{j}.ln2.b"] += g2b

        dm = dxp
        d_res1 = dxp
        grads[f"L{j}.Wo"] += layer["c"].T @ dm
        dc = dm @ t[f"L{j}.Wo"].T

        dh = cfg.d_head
        dxb_attn = np.zeros_like(layer["xb"])
        for i in range(cfg.n_heads):
            head = layer["heads"][i]
            dhead = dc[:, i * dh:(i + 1) * dh]
            da = dhead @ head["v"].T
            dv = head["a"].T @ dhead
            # softmax backward, row-wise
            a = head["a"]
            ds = a * (da - (da * a).sum(axis=1, keepdims=True))
            ds = ds * scale
            dq = ds @ head["k"]
            dk = ds.T @ head["q"]
            grads[f"L{j}.Wq.{i}"] += layer["xb"].T @ dq
            grads[f"L{j}.Wk.{i}"] += layer["xb"].T @ dk
            grads[f"L{j}.Wv.{i}"] += layer["xb"].T @ dv
            dxb_attn += dq @ t[f"L{j}.Wq.{i}"].T
            dxb_attn += dk @ t[f"L{j}.Wk.{i}"].T
            dxb_attn += dv @ t[f"L{j}.Wv.{i}"].T

        if cfg.standard_preln:
            dxin, g1g, g1b = layer_norm_backward(layer["xin"], t[f"L{j}.ln1.g"], cfg.ln_eps, dxb_attn)
            dxin = dxin + d_res1
        else:
            dxin, g1g, g1b = layer_norm_backward(
                layer["xin"], t[f"L{j}.ln1.g"], cfg.ln_eps, dxb_attn + d_res1
            )
        grads[f"L{j}.ln1.g"] += g1g
        grads[f"L{j}.ln1.b"] += g1b
        dx = dxin

    for p, ch in enumerate(seq.chars):
        grads["char_emb"][ch] += dx[p]
    return grads


def save_checkpoint(path, params, alphabet, marker_on_full_words=True):
    """Write the binary checkpoint: magic, version, JSON header, payloads."""
    cfg = params.config
    manifest = []
    names = []
    for name, shape in tensor_shapes(cfg, params.alphabet_size):
        rows, cols = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 0)
        manifest.append([name, rows, cols])
        names.append(name)
    header = {
        "config": {
            "d_char": cfg.d_char, "d_out": cfg.d_out,
            "n_layers": cfg.n_layers, "n_heads": cfg.n_heads,
            "max_chars": cfg.max_chars, "ln_eps": cfg.ln_eps,
            "standard_preln": cfg.standard_preln,
        },
        "alphabet": list(alphabet.chars),
        "marker_on_full_words": marker_on_full_words,
        "manifest": manifest,
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, alphabet_chars, marker_on_full_words)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hlen, = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        tensors = {}
        for name, rows, cols in header["manifest"]:
            shape = (rows,) if cols == 0 else (rows, cols)
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
            tensors[name] = data.reshape(shape)
    alphabet_size = tensors["char_emb"].shape[0]
    params = Char2SubwordParams(config=cfg, alphabet_size=alphabet_size, tensors=tensors)
    return params, header["alphabet"], header["marker_on_full_words"]
