"""Digest, signature, and proof-of-work puzzle primitives.

Two signature backends ship.  ``ed25519`` is a real asymmetric scheme
(deterministic signatures, which the reproducible-trace guarantee needs);
``null`` is a test backend in which the signature is just a digest over
address and message.  The null signature binds content to an address but
anyone knowing the address can forge it; it must never be read as
unforgeable.

Puzzle targets derive from an external difficulty ``m`` and a sloping
parameter ``alpha``: ``target = floor(2^(8*L) / (m * 2^floor(alpha*n)))``
with ``L`` the digest length and ``n`` the covered-transaction count.
``alpha = 0`` gives the familiar inverse-linear difficulty; ``alpha > 0``
makes the problem grow exponentially with ``n`` for deployments that want
history rewrites discouraged harder.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

from .meadow import RAT_ZERO, Rat

__all__ = [
    "digest",
    "KeyPair",
    "Signer",
    "NullSigner",
    "Ed25519Signer",
    "get_signer",
    "MalformedKey",
    "MalformedSignature",
    "Puzzle",
    "make_puzzle",
    "check",
    "solve",
    "solve_attempts",
    "PuzzleExhausted",
    "SOLUTION_LEN",
    "ADDRESS_LEN",
    "NONCE_LEN",
]

DIGEST_LENGTHS = (16, 32, 64)
ADDRESS_LEN = 32
NONCE_LEN = 16
SOLUTION_LEN = 8


def digest(data: bytes, length: int = 32) -> bytes:
    """Digest over canonical bytes. 32 = SHA-256, 16 = truncated SHA-256,
    64 = SHA-512 (the higher-entropy option)."""
    if length == 32:
        return hashlib.sha256(data).digest()
    if length == 16:
        return hashlib.sha256(data).digest()[:16]
    if length == 64:
        return hashlib.sha512(data).digest()
    raise ValueError(f"unsupported digest length {length}, pick one of {DIGEST_LENGTHS}")


class MalformedKey(ValueError):
    pass


class MalformedSignature(ValueError):
    pass


@dataclass(frozen=True)
class KeyPair:
    """Public address (the account identifier) and the secret that controls it."""

    address: bytes
    secret: bytes


class Signer:
    """Signature backend interface."""

    name: str = "abstract"

    def gen_keypair(self, rng: random.Random) -> KeyPair:
        secret = rng.getrandbits(256).to_bytes(32, "big")
        return self.keypair_from_secret(secret)

    def keypair_from_secret(self, secret: bytes) -> KeyPair:
        raise NotImplementedError

    def sign(self, secret: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, address: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


class NullSigner(Signer):
    """Integrity-binding test backend: sig = digest(address || message).

    Not unforgeable -- the address alone suffices to produce a valid
    signature.  Useful for fast deterministic simulation runs.
    """

    name = "null"

    def keypair_from_secret(self, secret: bytes) -> KeyPair:
        if len(secret) != 32:
            raise MalformedKey(f"null secret must be 32 bytes, got {len(secret)}")
        address = digest(b"null-address:" + secret, ADDRESS_LEN)
        return KeyPair(address=address, secret=secret)

    def sign(self, secret: bytes, message: bytes) -> bytes:
        address = digest(b"null-address:" + secret, ADDRESS_LEN)
        return digest(address + message, 32)

    def verify(self, address: bytes, message: bytes, signature: bytes) -> bool:
        if len(address) != ADDRESS_LEN:
            raise MalformedKey(f"address must be {ADDRESS_LEN} bytes, got {len(address)}")
        if len(signature) != 32:
            raise MalformedSignature(f"null signature must be 32 bytes, got {len(signature)}")
        return signature == digest(address + message, 32)


class Ed25519Signer(Signer):
    """Ed25519 via the ``cryptography`` package; signatures are deterministic."""

    name = "ed25519"

    def __init__(self):
        from cryptography.hazmat.primitives.asymmetric import ed25519 as _ed

        self._ed = _ed

    def keypair_from_secret(self, secret: bytes) -> KeyPair:
        if len(secret) != 32:
            raise MalformedKey(f"ed25519 secret must be 32 bytes, got {len(secret)}")
        priv = self._ed.Ed25519PrivateKey.from_private_bytes(secret)
        address = priv.public_key().public_bytes_raw()
        return KeyPair(address=address, secret=secret)

    def sign(self, secret: bytes, message: bytes) -> bytes:
        if len(secret) != 32:
            raise MalformedKey(f"ed25519 secret must be 32 bytes, got {len(secret)}")
        priv = self._ed.Ed25519PrivateKey.from_private_bytes(secret)
        return priv.sign(message)

    def verify(self, address: bytes, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature

        if len(address) != ADDRESS_LEN:
            raise MalformedKey(f"ed25519 address must be {ADDRESS_LEN} bytes, got {len(address)}")
        if len(signature) != 64:
            raise MalformedSignature(f"ed25519 signature must be 64 bytes, got {len(signature)}")
        try:
            pub = self._ed.Ed25519PublicKey.from_public_bytes(address)
        except Exception as exc:
            raise MalformedKey(str(exc)) from exc
        try:
            pub.verify(signature, message)
            return True
        except InvalidSignature:
            return False


_SIGNERS: dict[str, Signer] = {}


def get_signer(name: str) -> Signer:
    if name not in _SIGNERS:
        if name == "null":
            _SIGNERS[name] = NullSigner()
        elif name == "ed25519":
            _SIGNERS[name] = Ed25519Signer()
        else:
            raise ValueError(f"unknown signer backend {name!r}")
    return _SIGNERS[name]


# -- proof of work -------------------------------------------------------------


@dataclass(frozen=True)
class Puzzle:
    """Search problem: find s with digest(seed || s) below target."""

    seed: bytes
    m: int
    target: int
    digest_len: int = 32


class PuzzleExhausted(RuntimeError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"no solution within {budget} attempts")


def make_puzzle(seed: bytes, m: int, n: int = 0, alpha: Rat = RAT_ZERO, digest_len: int = 32) -> Puzzle:
    """Derive the target from difficulty m, coverage n and sloping alpha."""
    if m < 1:
        raise ValueError("difficulty m must be a positive integer")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    shift = math.floor(alpha * Rat(n)) if alpha != RAT_ZERO else 0
    target = (1 << (8 * digest_len)) // (m << shift)
    return Puzzle(seed=seed, m=m, target=max(target, 1), digest_len=digest_len)


def check(puzzle: Puzzle, s: bytes) -> bool:
    """One digest evaluation; true iff s solves the puzzle."""
    if len(s) != SOLUTION_LEN:
        return False
    value = int.from_bytes(digest(puzzle.seed + s, puzzle.digest_len), "big")
    return value < puzzle.target


def solve(puzzle: Puzzle, budget: int, start: int = 0, stride: int = 1) -> bytes:
    """Search s = start, start+stride, ... deterministically.

    ``start``/``stride`` let parallel workers scan disjoint ranges; merging
    results by smallest s keeps the winner deterministic.  Raises
    :class:`PuzzleExhausted` when the budget runs out.
    """
    if budget <= 0:
        raise ValueError("solve budget must be positive")
    counter = start
    for _ in range(budget):
        s = counter.to_bytes(SOLUTION_LEN, "big")
        if check(puzzle, s):
            return s
        counter += stride
    raise PuzzleExhausted(budget)


def solve_attempts(puzzle: Puzzle, budget: int) -> tuple[bytes, int]:
    """Like :func:`solve` but also reports how many digest evaluations it took."""
    if budget <= 0:
        raise ValueError("solve budget must be positive")
    for attempt in range(budget):
        s = attempt.to_bytes(SOLUTION_LEN, "big")
        if check(puzzle, s):
            return s, attempt + 1
    raise PuzzleExhausted(budget)
