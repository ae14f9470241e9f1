import numpy as np
import pytest

import char2subword as c2s
from char2subword.noise import DEFAULT_PUNCTUATION, NoiseConfig, default_layouts

TOY_WORDS = """apple about above actor admit after again agent
alarm alert alike alive allow alone among anger angle
ankle apart arena argue arise armor array aside asset
avoid awake award aware badge baker basic batch beach
beard begin being below bench berry birth black blade
blame blank""".split()


# filled by tests/test_acceptance.py; echoed after the run so the
# per-criterion verdicts survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_vocab():
    return c2s.load_vocabulary("\n".join(TOY_WORDS[:49] + ["[UNK]"]))


@pytest.fixture(scope="session")
def toy_alphabet(toy_vocab):
    # uppercase and punctuation only ever appear via noise, so they must be
    # representable even though no vocabulary entry contains them
    extra = "".join(sorted(set("".join(TOY_WORDS).upper())))
    extra += "".join(DEFAULT_PUNCTUATION)
    return c2s.build_alphabet(toy_vocab, extra_chars=extra)


@pytest.fixture(scope="session")
def toy_table():
    rng = np.random.default_rng(42)
    e = rng.normal(size=(50, 16))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    return c2s.EmbeddingTable(matrix=e)


@pytest.fixture(scope="session")
def tiny_config():
    return c2s.ModelConfig(d_char=8, d_out=16, n_layers=2, n_heads=2)


@pytest.fixture(scope="session")
def noise_config():
    return NoiseConfig(layouts=tuple(default_layouts()))
