"""Antisymmetric pair basis for two-particle matrices over spin orbitals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PairBasis:
    """Ordered pairs (i < j) of spin orbitals, lexicographically ordered.

    The packed representation of a two-particle matrix indexes rows and
    columns by these pairs; dimension is P = r_so*(r_so-1)/2.
    """

    r_so: int
    pairs: list[tuple[int, int]] = field(init=False, repr=False)
    index: dict[tuple[int, int], int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.r_so < 2:
            raise ValueError(f"need at least two spin orbitals, got {self.r_so}")
        pairs = [(i, j) for i in range(self.r_so) for j in range(i + 1, self.r_so)]
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "index", {p: a for a, p in enumerate(pairs)})

    @property
    def size(self) -> int:
        return self.r_so * (self.r_so - 1) // 2

    def pair_index(self, i: int, j: int) -> tuple[int, int]:
        """Packed index of the unordered pair {i, j} and its sign (-1 if i > j)."""
        if i == j:
            raise ValueError(f"diagonal pair ({i},{i}) has no packed index")
        if i < j:
            return self.index[(i, j)], 1
        return self.index[(j, i)], -1

    def spin_blocks(self) -> dict[str, np.ndarray]:
        """Packed indices grouped by spin signature under blocked ordering.

        Spin orbital i is alpha when i < r_so/2 and beta otherwise, so pairs
        split into 'aa', 'bb' and 'ab' groups.  Useful because spatial-orbital
        rotations never mix these groups.
        """
        r = self.r_so // 2
        groups: dict[str, list[int]] = {"aa": [], "ab": [], "bb": []}
        for a, (i, j) in enumerate(self.pairs):
            if j < r:
                groups["aa"].append(a)
            elif i >= r:
                groups["bb"].append(a)
            else:
                groups["ab"].append(a)
        return {k: np.asarray(v, dtype=np.intp) for k, v in groups.items()}
