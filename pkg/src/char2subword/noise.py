"""Single-character noise augmentation with keyboard-layout mistyping.

Each operation applies exactly one edit to a token. Tokens of fewer than
five editable characters and special tokens are left alone, and a leading
"##" marker is never edited.
"""

import json
from dataclasses import dataclass, field

from .vocab import MARKER, SPECIAL_TOKENS

OPERATIONS = ("mistype", "repeat", "swap", "drop", "toggle", "punctuation")
DEFAULT_PUNCTUATION = ("(", ")", "-", ".", ",", "'", ":", ";")
_MAX_RETRIES = 16


class NoiseError(ValueError):
    """Raised when an operation cannot be applied to a token."""


class LayoutError(ValueError):
    """Raised for malformed keyboard layout documents."""


@dataclass(frozen=True)
class KeyboardLayout:
    name: str
    neighbors: dict = field(repr=False)

    def __post_init__(self):
        for ch, nbrs in self.neighbors.items():
            if not nbrs:
                raise LayoutError(f"layout {self.name!r}: key {ch!r} has no neighbors")
            if ch in nbrs:
                raise LayoutError(f"layout {self.name!r}: key {ch!r} lists itself as a neighbor")


# A small QWERTY fragment, enough for latin-script toy vocabularies.
_QWERTY_ROWS = ["qwertyuiop", "asdfghjkl", "zxcvbnm"]


def _qwerty_neighbors():
    nbrs = {}
    for r, row in enumerate(_QWERTY_ROWS):
        for c, ch in enumerate(row):
            adj = []
            if c > 0:
                adj.append(row[c - 1])
            if c + 1 < len(row):
                adj.append(row[c + 1])
            for rr in (r - 1, r + 1):
                if 0 <= rr < len(_QWERTY_ROWS):
                    other = _QWERTY_ROWS[rr]
                    for cc in (c - 1, c):
                        if 0 <= cc < len(other):
                            adj.append(other[cc])
            nbrs[ch] = adj
            nbrs[ch.upper()] = [a.upper() for a in adj]
    return nbrs


def default_layouts():
    return [KeyboardLayout(name="qwerty", neighbors=_qwerty_neighbors())]


def load_layouts(source):
    """Parse a JSON layout document: {name: {char: [neighbor, ...]}}."""
    try:
        doc = json.loads(source) if isinstance(source, str) else json.load(source)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"malformed layout document at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise LayoutError("layout document must be an object mapping layout names to key maps")
    layouts = []
    for name, mapping in doc.items():
        if not isinstance(mapping, dict):
            raise LayoutError(f"layout {name!r}: expected an object of key -> neighbor list")
        layouts.append(KeyboardLayout(name=name, neighbors={k: list(v) for k, v in mapping.items()}))
    return layouts


@dataclass(frozen=True)
class NoiseConfig:
    enabled_ops: tuple = OPERATIONS
    layouts: tuple = ()
    punctuation_set: tuple = DEFAULT_PUNCTUATION
    min_length: int = 5
    p_noise: float = 0.5

    def __post_init__(self):
        if self.min_length < 2:
            raise ValueError("min_length must be >= 2")
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError("p_noise must be in [0, 1]")
        bad = [op for op in self.enabled_ops if op not in OPERATIONS]
        if bad:
            raise ValueError(f"unknown noise operation(s): {bad}")
        if self.p_noise > 0 and not self.enabled_ops:
            raise ValueError("p_noise > 0 requires at least one enabled operation")
        object.__setattr__(self, "layouts", tuple(self.layouts))
        object.__setattr__(self, "enabled_ops", tuple(self.enabled_ops))
        object.__setattr__(self, "punctuation_set", tuple(self.punctuation_set))


def _split_marker(token):
    if token.startswith(MARKER):
        return MARKER, token[len(MARKER):]
    return "", token


def _mistype(body, rng, config):
    all_keys = sorted({k for lay in config.layouts for k in lay.neighbors})
    for _ in range(_MAX_RETRIES):
        pos = rng.randrange(len(body))
        ch = body[pos]
        covering = [lay for lay in config.layouts if ch in lay.neighbors]
        if covering:
            lay = rng.choice(covering)
            repl = rng.choice(lay.neighbors[ch])
        else:
            # key absent from every layout: any non-identical layout key
            candidates = [k for k in all_keys if k != ch]
            if not candidates:
                raise NoiseError("mistype: no layout characters available")
            repl = rng.choice(candidates)
        if repl != ch:
            return body[:pos] + repl + body[pos + 1:]
    raise NoiseError("mistype: retries exhausted without a change")


def _repeat(body, rng):
    pos = rng.randrange(len(body))
    return body[:pos] + body[pos] + body[pos:]


def _swap(body, rng):
    # last position has no next character; choose among 0..len-2
    for _ in range(_MAX_RETRIES):
        pos = rng.randrange(len(body) - 1)
        if body[pos] != body[pos + 1]:
            return body[:pos] + body[pos + 1] + body[pos] + body[pos + 2:]
    raise NoiseError("swap: retries exhausted without a change")


def _drop(body, rng):
    pos = rng.randrange(len(body))
    return body[:pos] + body[pos + 1:]


def _toggle(body, rng):
    # len check guards oddities like 'ß' -> 'SS' that would change length
    cased = [i for i, ch in enumerate(body) if ch.swapcase() != ch and len(ch.swapcase()) == 1]
    if not cased:
        raise NoiseError("toggle: token has no case-bearing character")
    pos = rng.choice(cased)
    return body[:pos] + body[pos].swapcase() + body[pos + 1:]


def _punctuation(body, rng, config):
    pos = rng.randrange(len(body) + 1)
    mark = rng.choice(config.punctuation_set)
    return body[:pos] + mark + body[pos:]


def apply_op(token, op, rng, config):
    """Apply one named edit operation to a token; the result always differs.

    A "##" prefix is excluded from the editable region. Raises NoiseError for
    special tokens, too-short tokens, or ops that cannot change the token.
    """
    if token in SPECIAL_TOKENS:
        raise NoiseError(f"refusing to noise special token {token!r}")
    if op not in OPERATIONS:
        raise ValueError(f"unknown operation {op!r}")
    marker, body = _split_marker(token)
    if len(body) < config.min_length:
        raise NoiseError(
            f"token {token!r} has {len(body)} editable characters; need >= {config.min_length}"
        )
    if op == "mistype":
        body = _mistype(body, rng, config)
    elif op == "repeat":
        body = _repeat(body, rng)
    elif op == "swap":
        body = _swap(body, rng)
    elif op == "drop":
        body = _drop(body, rng)
    elif op == "toggle":
        body = _toggle(body, rng)
    else:
        body = _punctuation(body, rng, config)
    return marker + body


def sample_noisy(token, rng, config):
    """With probability p_noise, apply one uniformly chosen enabled op.

    Short tokens, special tokens, and op-level failures fall through to the
    unchanged token.
    """
    if config.p_noise <= 0.0 or not config.enabled_ops:
        return token
    if token in SPECIAL_TOKENS:
        return token
    _, body = _split_marker(token)
    if len(body) < config.min_length:
        return token
    if rng.random() >= config.p_noise:
        return token
    op = config.enabled_ops[rng.randrange(len(config.enabled_ops))]
    try:
        return apply_op(token, op, rng, config)
    except NoiseError:
        return token
