#!/usr/bin/env python3
"""
ConeWalk - Random Streams
Counter-based splittable streams: every (master seed, purpose, index) triple owns an independent
Philox generator, so path blocks never share RNG state.
"""
import hashlib
from dataclasses import dataclass

import numpy as np

SEED_MASK = (1 << 64) - 1


def purpose_code(purpose: str) -> int:
    """Stable 32-bit code for a stream purpose label"""
    return int(hashlib.sha256(purpose.encode("utf-8")).hexdigest()[:8], 16)


@dataclass(frozen=True)
class StreamFactory:
    master_seed: int

    def seed_sequence(self, purpose: str, index: int, *extra: int) -> np.random.SeedSequence:
        words = [self.master_seed & SEED_MASK, purpose_code(purpose), int(index)]
        words.extend(int(e) & SEED_MASK for e in extra)
        return np.random.SeedSequence(words)

    def stream(self, purpose: str, index: int = 0, *extra: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(purpose, index, *extra)))

    def child(self, purpose: str) -> "StreamFactory":
        """Factory for a sub-experiment; its seed is drawn from this factory's stream"""
        seed = int(self.seed_sequence(purpose, 0).generate_state(2, dtype=np.uint32).view(np.uint64)[0])
        return StreamFactory(seed)
