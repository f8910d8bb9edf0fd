"""Portable deterministic randomness.

Every randomized operation in this package draws from the splitmix64
sequence generator below rather than ``random`` or numpy.  The stdlib only
guarantees stream stability for ``Random.random()`` itself, and numpy's
``Generator`` method streams may change between releases; datasets here
must be bit-identical across platforms and library versions, so the
generator is owned outright.  It is ~20 lines and well studied.

Stream splitting: :func:`derive_seed` folds a root seed plus a sequence of
labels (strings or integers) into a new 64-bit seed, so each collection of
a ruleset, each dataset problem, and each bootstrap set gets its own
independent stream addressed by name, never by draw order.
"""

from __future__ import annotations

from typing import Iterable, Sequence, TypeVar

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")


def _mix(z: int) -> int:
    """splitmix64 finalizer: bijective avalanche on 64-bit words."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(root: int, *tokens: int | str) -> int:
    """Fold ``root`` and a label path into a child seed.

    Tokens are absorbed as length-prefixed UTF-8 (strings) or 8-byte words
    (integers), each followed by a finalizer pass, so distinct paths give
    unrelated streams.
    """
    h = _mix(root ^ _GOLDEN)
    for token in tokens:
        if isinstance(token, str):
            data = token.encode("utf-8")
            h = _mix(h ^ len(data))
            for i in range(0, len(data), 8):
                h = _mix(h ^ int.from_bytes(data[i : i + 8], "little"))
        else:
            h = _mix(h ^ (token & _MASK) ^ _GOLDEN)
    return h


class SplitMix64:
    """splitmix64 stream with unbiased integer draws and shuffles."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        if n == 1:
            return 0
        limit = _MASK + 1 - ((_MASK + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list[T]) -> None:
        """In-place Fisher-Yates shuffle (uniform over all permutations)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def cycle(self, items: Sequence[T]) -> dict[T, T]:
        """Uniform full cycle on ``items``, as an item -> image mapping.

        Sattolo's variant of Fisher-Yates: restricting the swap index to
        ``j < i`` yields exactly the cyclic permutations, each with
        probability 1/(n-1)!.  Requires at least two items, since a
        1-element collection admits no fixed-point-free arrangement.
        """
        if len(items) < 2:
            raise ValueError("a full cycle needs at least 2 items")
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i)
            out[i], out[j] = out[j], out[i]
        return {src: img for src, img in zip(items, out)}

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]


def stream(root: int, *tokens: int | str) -> SplitMix64:
    """Named child stream of ``root``; shorthand for SplitMix64(derive_seed(...))."""
    return SplitMix64(derive_seed(root, *tokens))


def shuffled(rng: SplitMix64, items: Iterable[T]) -> list[T]:
    out = list(items)
    rng.shuffle(out)
    return out
