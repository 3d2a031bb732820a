"""Sets of token ids stored as sorted runs of consecutive ids.

Epoch-level runs can hold astronomically many tokens (wealth grows
geometrically per epoch), so every set operation here works on runs, never on
individual ids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class TokenSet:
    runs: tuple[tuple[int, int], ...] = ()  # (first id, count), ascending, non-adjacent

    @classmethod
    def from_ids(cls, ids: Iterable[int]) -> "TokenSet":
        runs: list[list[int]] = []
        for i in sorted(set(ids)):
            if runs and runs[-1][0] + runs[-1][1] == i:
                runs[-1][1] += 1
            else:
                runs.append([i, 1])
        return cls(tuple((a, n) for a, n in runs))

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[int, int]]) -> "TokenSet":
        merged: list[list[int]] = []
        for a, n in sorted(r for r in runs if r[1] > 0):
            if merged and merged[-1][0] + merged[-1][1] > a:
                raise ValueError("overlapping runs")
            if merged and merged[-1][0] + merged[-1][1] == a:
                merged[-1][1] += n
            else:
                merged.append([a, n])
        return cls(tuple((a, n) for a, n in merged))

    def __len__(self) -> int:
        return sum(n for _, n in self.runs)

    @property
    def size(self) -> int:
        # len() is capped at sys.maxsize; use this for huge sets
        return sum(n for _, n in self.runs)

    def __iter__(self) -> Iterator[int]:
        for a, n in self.runs:
            yield from range(a, a + n)

    def __contains__(self, token_id: int) -> bool:
        return any(a <= token_id < a + n for a, n in self.runs)

    def __bool__(self) -> bool:
        return bool(self.runs)

    def min(self) -> int:
        return self.runs[0][0]

    def max(self) -> int:
        a, n = self.runs[-1]
        return a + n - 1

    def count_below(self, token_id: int) -> int:
        total = 0
        for a, n in self.runs:
            if a >= token_id:
                break
            total += min(n, token_id - a)
        return total

    def __str__(self) -> str:
        parts = [str(a) if n == 1 else f"{a}-{a + n - 1}" for a, n in self.runs]
        return "{" + ",".join(parts) + "}"
