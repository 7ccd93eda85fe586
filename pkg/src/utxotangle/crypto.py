"""Keyed-hash stand-ins for signatures and the verifiable random function.

The simulated world is closed: every identity is created through
:class:`Identity` and registered in a :class:`KeyRegistry`, so "verifying" a
signature means recomputing the keyed hash with the registered secret. The
registry only ever maps an address to the one secret whose hash it is, so
registering the same identity twice is harmless.
"""

from __future__ import annotations

import hashlib
import hmac
import threading
from dataclasses import dataclass, field

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def keyed_hash(secret: bytes, message: bytes) -> bytes:
    return hmac.new(secret, message, hashlib.sha256).digest()


class KeyRegistry:
    def __init__(self) -> None:
        self._secrets: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def register(self, identity: "Identity") -> None:
        with self._lock:
            self._secrets[identity.address] = identity.secret

    def secret_of(self, address: bytes) -> bytes | None:
        return self._secrets.get(address)

    def verify(self, address: bytes, message: bytes, signature: bytes) -> bool:
        secret = self._secrets.get(address)
        if secret is None:
            return False
        return hmac.compare_digest(keyed_hash(secret, message), signature)


DEFAULT_REGISTRY = KeyRegistry()


@dataclass(frozen=True)
class Identity:
    secret: bytes
    address: bytes = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "address", digest(self.secret))

    @classmethod
    def create(cls, label: str, registry: KeyRegistry | None = None) -> "Identity":
        """Deterministic identity for ``label``, registered for verification."""
        ident = cls(digest(b"identity:", label.encode()))
        (registry or DEFAULT_REGISTRY).register(ident)
        return ident

    def sign(self, message: bytes) -> bytes:
        return keyed_hash(self.secret, message)
