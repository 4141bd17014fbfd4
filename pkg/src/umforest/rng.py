"""Counter-based random streams keyed by ``(seed, label, ...)``.

Two flavours share one key derivation:

* :func:`stream` returns a numpy ``Generator`` over a Philox bit generator
  whose 128-bit key is derived from the seed and labels.
* :func:`stream_key` returns a 64-bit key for the kernel-level counter
  generator (``umforest._kernels.counter_uniform``).

Labels are stable strings or integers, so a stream never depends on the
order in which other streams were created.
"""

import hashlib

import numpy as np


def _digest(seed, labels, size):
    h = hashlib.blake2b(digest_size=size, person=b"umforest-rng")
    h.update(repr(int(seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return h.digest()


def stream_key(seed, *labels):
    """64-bit key for the counter generator."""
    return int.from_bytes(_digest(seed, labels, 8), "little")


def stream(seed, *labels):
    """Independent ``numpy.random.Generator`` for ``(seed, *labels)``."""
    raw = _digest(seed, labels, 16)
    key = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
