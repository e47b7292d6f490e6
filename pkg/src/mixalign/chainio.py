"""Versioned little-endian binary layout for saved chains.

Layout (all integers and floats little-endian):

    offset  size  field
    0       8     magic ``b"MXALNCH1"``
    8       4     format version (u32, currently 1)
    12      8     n   (u64) observations
    20      4     p   (u32) dimensions
    24      4     J   (u32) samples
    28      4     K   (u32) cluster truncation
    32      4     count (u32) number of stored sweeps

followed by ``count`` records, each the concatenation of

    eta      f64                  scalar
    weights  f64[J*K]             row-major (J, K)
    T        i32[n]               0-based labels
    xi_j     f64[J*K*p]           row-major (J, K, p)
    xi_0     f64[K*p]
    G        f64[K*p*p]
    psi      f64[K*p]
    E        f64[K*p*p]

Weights and labels are exactly the stored sweep's values; readers
reconstruct ``log_weights`` as log(weights) and zero-fill the latent z
column, which is not persisted.
"""

import struct

import numpy as np

from .state import ChainState

MAGIC = b"MXALNCH1"
VERSION = 1
_HEADER = struct.Struct("<8sIQIIII")


class ChainFormatError(RuntimeError):
    """Raised for unreadable or corrupt chain files."""


def write_chain(path, chain, n):
    """Write a list of :class:`ChainState` snapshots to ``path``."""
    if not chain:
        raise ValueError("cannot write an empty chain")
    first = chain[0]
    J, K = first.weights.shape
    p = first.xi_0.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, p, J, K, len(chain)))
        for snap in chain:
            fh.write(np.float64(snap.eta).astype("<f8").tobytes())
            for arr, dt in (
                (snap.weights, "<f8"),
                (snap.T, "<i4"),
                (snap.xi_j, "<f8"),
                (snap.xi_0, "<f8"),
                (snap.G, "<f8"),
                (snap.psi, "<f8"),
                (snap.E, "<f8"),
            ):
                fh.write(np.ascontiguousarray(arr).astype(dt).tobytes())


def read_chain(path):
    """Read a chain file written by :func:`write_chain`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ChainFormatError("file too short for a chain header")
    magic, version, n, p, J, K, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ChainFormatError("bad magic; not a chain file")
    if version != VERSION:
        raise ChainFormatError(f"unsupported chain format version {version}")
    off = _HEADER.size
    rec = 8 + 8 * (J * K + J * K * p + K * p + K * p * p + K * p + K * p * p) + 4 * n
    if len(raw) != off + count * rec:
        raise ChainFormatError("truncated chain file")

    def take(dt, shape):
        nonlocal off
        count_items = int(np.prod(shape))
        out = np.frombuffer(raw, dtype=dt, count=count_items, offset=off)
        off += count_items * np.dtype(dt).itemsize
        # copy into native byte order so downstream linalg is unaffected
        return np.ascontiguousarray(out.reshape(shape), dtype=np.dtype(dt).newbyteorder("="))

    chain = []
    with np.errstate(divide="ignore"):
        for _ in range(count):
            eta = float(take("<f8", (1,))[0])
            weights = take("<f8", (J, K))
            T = take("<i4", (n,)).astype(np.int64)
            xi_j = take("<f8", (J, K, p))
            xi_0 = take("<f8", (K, p))
            G = take("<f8", (K, p, p))
            psi = take("<f8", (K, p))
            E = take("<f8", (K, p, p))
            chain.append(
                ChainState(
                    weights,
                    np.log(weights),
                    T,
                    xi_j,
                    xi_0,
                    G,
                    psi,
                    E,
                    eta,
                    np.zeros(n),
                )
            )
    return chain
