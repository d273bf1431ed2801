"""Subkey streams for the block cipher.

A master key is four independent 64-bit seeds, one per subkey K1..K4:

    K1 drives block scrambling,
    K2 drives block rotation/flip,
    K3 drives negative-positive flags,
    K4 drives color-component shuffling.

Each subkey seeds its own SplitMix64 generator.  SplitMix64 is used because
it is a published, trivially portable algorithm whose outputs are bit-exact
in any language; no cryptographic strength is claimed.  The "random tape"
of a stream is its raw 64-bit output sequence: every draw, including draws
rejected by ``uniform_below``, advances the tape by exactly one step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import UsageError

_MASK64 = (1 << 64) - 1

SUBKEY_NAMES = ("K1", "K2", "K3", "K4")


@dataclass(frozen=True)
class MasterKey:
    """Four 64-bit seeds, one per subkey stream."""

    seeds: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.seeds) != 4:
            raise UsageError("master key needs exactly four seeds")
        for s in self.seeds:
            if not 0 <= s <= _MASK64:
                raise UsageError(f"seed {s} is not a 64-bit unsigned integer")


class KeyStream:
    """Sequential SplitMix64 stream for one subkey.

    Single consumer at a time: draws mutate ``state`` and ``draw_count``.
    To parallelize work that shares one stream, materialize the needed
    draws first, then distribute the values.
    """

    def __init__(self, subkey_id: str, seed: int):
        if subkey_id not in SUBKEY_NAMES:
            raise UsageError(f"unknown subkey id {subkey_id!r}")
        self.subkey_id = subkey_id
        self.state = seed & _MASK64
        self.draw_count = 0

    def next_raw(self) -> int:
        """One SplitMix64 step; returns a 64-bit value and advances the tape."""
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        self.draw_count += 1
        return z ^ (z >> 31)

    def uniform_below(self, n: int) -> int:
        """Unbiased draw from [0, n) by bitmask rejection.

        The raw output is masked to the smallest power-of-two width that
        can represent n-1; masked values >= n are rejected and redrawn.
        Rejected draws still consume tape.
        """
        if n < 1:
            raise UsageError(f"uniform_below needs n >= 1, got {n}")
        mask = (1 << (n - 1).bit_length()) - 1
        while True:
            v = self.next_raw() & mask
            if v < n:
                return v

    def bernoulli_half(self) -> int:
        """Fair bit: least significant bit of one raw draw."""
        return self.next_raw() & 1


def derive_streams(master: MasterKey) -> tuple[KeyStream, KeyStream, KeyStream, KeyStream]:
    """One stream per subkey, seeded directly with the matching 64-bit seed."""
    return tuple(
        KeyStream(name, seed) for name, seed in zip(SUBKEY_NAMES, master.seeds)
    )


_KEY_LINE = re.compile(r"^K([1-4])=([0-9a-f]{16})$")


def format_key_file(master: MasterKey) -> str:
    """Key file text: one `K<i>=<16 lowercase hex digits>` line per subkey."""
    return "".join(
        f"{name}={seed:016x}\n" for name, seed in zip(SUBKEY_NAMES, master.seeds)
    )


def parse_key_file(text: str) -> MasterKey:
    seeds = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        m = _KEY_LINE.match(line)
        if m is None:
            raise UsageError(f"bad key file line {lineno}: {line!r}")
        seeds[int(m.group(1))] = int(m.group(2), 16)
    if sorted(seeds) != [1, 2, 3, 4]:
        raise UsageError("key file must define K1..K4 exactly once each")
    return MasterKey(tuple(seeds[i] for i in (1, 2, 3, 4)))


def load_key_file(path) -> MasterKey:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_key_file(fh.read())


def save_key_file(path, master: MasterKey) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_key_file(master))
