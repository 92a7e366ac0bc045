import numpy as np
from scipy import stats

from app.core.constants import STREAM_BLOCK_NODES, StreamDomain
from app.services.rng import CounterSampler, derive_stream, node_integers, node_words


def test_derive_stream_is_a_pure_function():
    assert derive_stream(7, 3, 12, 1) == derive_stream(7, 3, 12, 1)


def test_derive_stream_separates_every_coordinate():
    base = derive_stream(7, 3, 12, 1)
    others = {
        derive_stream(8, 3, 12, 1),
        derive_stream(7, 4, 12, 1),
        derive_stream(7, 3, 13, 1),
        derive_stream(7, 3, 12, 2),
        derive_stream(7, 3, 12, 1, StreamDomain.COIN),
    }
    assert base not in others
    assert len(others) == 5


def test_node_words_agree_with_single_node_derivation():
    words = node_words(5, 2, 0, 10, start=STREAM_BLOCK_NODES - 4)
    singles = [derive_stream(5, 2, STREAM_BLOCK_NODES - 4 + i, 0) for i in range(10)]
    assert words.tolist() == singles


def test_targets_do_not_depend_on_chunking():
    n = 2 * STREAM_BLOCK_NODES + 1234
    sampler = CounterSampler(99)
    whole = sampler.targets(4, 1, n)
    cut = STREAM_BLOCK_NODES + 17
    pieces = np.concatenate([sampler.targets(4, 1, n, 0, cut), sampler.targets(4, 1, n, cut, n)])
    assert np.array_equal(whole, pieces)
    assert whole.min() >= 0 and whole.max() < n


def test_coins_do_not_depend_on_chunking():
    n = STREAM_BLOCK_NODES + 500
    sampler = CounterSampler(3)
    whole = sampler.uniforms(0, n)
    pieces = np.concatenate([sampler.uniforms(0, n, 0, 1000), sampler.uniforms(0, n, 1000, n)])
    assert np.array_equal(whole, pieces)
    assert ((whole >= 0.0) & (whole < 1.0)).all()


def test_partner_choice_is_uniform():
    n, rounds = 100, 10_000
    counts = np.zeros(n, dtype=np.int64)
    for r in range(rounds):
        counts += np.bincount(node_integers(2024, r, 0, n, 0, n), minlength=n)
    statistic, _ = stats.chisquare(counts)
    mean, sd = n - 1, np.sqrt(2 * (n - 1))
    assert abs(statistic - mean) <= 3 * sd, f"chi-square {statistic:.1f} outside mean {mean} ± 3·{sd:.1f}"
