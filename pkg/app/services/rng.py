"""Counter-based random streams.

Every random quantity in a run is addressed by (seed, round, slot, domain) and
read out of numpy Philox streams whose key is the seed and whose counter
encodes the address. Nodes are grouped in fixed blocks of STREAM_BLOCK_NODES;
node ``v`` reads position ``v % STREAM_BLOCK_NODES`` of block
``v // STREAM_BLOCK_NODES``, so a draw depends only on its address and never
on evaluation order or on how the node range is split into chunks.
"""

import logging
from typing import Iterator, Optional, Protocol, Tuple

import numpy as np

from app.core.constants import STREAM_BLOCK_NODES, StreamDomain

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1


def _counter(round_index: int, slot: int, domain: StreamDomain, block: int) -> int:
    if round_index < 0 or slot < 0 or block < 0:
        raise ValueError("round, slot and block must be non-negative")
    return (
        ((int(domain) & MASK32) << 224)
        | ((block & MASK32) << 192)
        | ((round_index & MASK64) << 128)
        | ((slot & MASK64) << 64)
    )


def bit_generator(seed: int, round_index: int, slot: int,
                  domain: StreamDomain = StreamDomain.PULL, block: int = 0) -> np.random.Philox:
    return np.random.Philox(key=seed & MASK64, counter=_counter(round_index, slot, domain, block))


def stream(seed: int, round_index: int, slot: int,
           domain: StreamDomain = StreamDomain.PULL, block: int = 0) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, round_index, slot, domain, block))


def blocks(start: int, stop: int) -> Iterator[Tuple[int, int, int]]:
    """(block, first offset, end offset) triples covering node ids [start, stop)."""
    position = start
    while position < stop:
        block = position // STREAM_BLOCK_NODES
        base = block * STREAM_BLOCK_NODES
        end = min(stop, base + STREAM_BLOCK_NODES)
        yield block, position - base, end - base
        position = end


def node_words(seed: int, round_index: int, draw_index: int, n: int,
               domain: StreamDomain = StreamDomain.PULL, start: int = 0) -> np.ndarray:
    """Raw 64-bit words for nodes start..start+n-1 at one (round, draw) address."""
    parts = [
        bit_generator(seed, round_index, draw_index, domain, block).random_raw(hi)[lo:]
        for block, lo, hi in blocks(start, start + n)
    ]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.uint64)


def derive_stream(seed: int, round_index: int, node_id: int, draw_index: int,
                  domain: StreamDomain = StreamDomain.PULL) -> int:
    """Pseudorandom 64-bit word, a pure function of its arguments."""
    if node_id < 0:
        raise ValueError("node_id must be non-negative")
    return int(node_words(seed, round_index, draw_index, 1, domain, start=node_id)[0])


def node_integers(seed: int, round_index: int, slot: int, high: int,
                  start: int, stop: int,
                  domain: StreamDomain = StreamDomain.PULL) -> np.ndarray:
    """Uniform integers in [0, high) for nodes [start, stop)."""
    parts = [
        stream(seed, round_index, slot, domain, block).integers(0, high, size=hi)[lo:]
        for block, lo, hi in blocks(start, stop)
    ]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def node_uniforms(seed: int, round_index: int, slot: int,
                  start: int, stop: int,
                  domain: StreamDomain = StreamDomain.COIN) -> np.ndarray:
    """Uniform reals in [0, 1) for nodes [start, stop)."""
    parts = [
        stream(seed, round_index, slot, domain, block).random(hi)[lo:]
        for block, lo, hi in blocks(start, stop)
    ]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.float64)


class PartnerSampler(Protocol):
    def targets(self, round_index: int, slot: int, n: int,
                start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        ...

    def uniforms(self, round_index: int, n: int,
                 start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        ...


class CounterSampler:
    """Uniform partner choice (self included) and per-node coins keyed by the run seed."""

    def __init__(self, seed: int):
        self.seed = seed

    def targets(self, round_index: int, slot: int, n: int,
                start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        stop = n if stop is None else stop
        return node_integers(self.seed, round_index, slot, n, start, stop, StreamDomain.PULL)

    def uniforms(self, round_index: int, n: int,
                 start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        stop = n if stop is None else stop
        return node_uniforms(self.seed, round_index, 0, start, stop, StreamDomain.COIN)
