import zlib

import numpy as np


class RngStream:
    """Seeded random stream with named, reproducible sub-streams.

    ``child("dropout")`` always yields the same stream for the same parent
    seed path, independent of how many draws the parent has made.
    """

    def __init__(self, seed, _path=()):
        self.seed = int(seed)
        self.path = tuple(_path)
        key = [self.seed] + [zlib.crc32(p.encode("utf-8")) for p in self.path]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

    def child(self, name):
        return RngStream(self.seed, self.path + (str(name),))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def random(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={'/'.join(self.path) or '-'})"
