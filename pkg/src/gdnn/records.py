"""Named-tensor record IO shared by the checkpoint and dataset containers.

A record is: u32 name length, UTF-8 name, u32 rank, u32 dims, then the
tensor payload as little-endian float32. All integers are little-endian
u32. Truncation anywhere raises TruncatedError with a description of what
was being read.
"""

import struct

import numpy as np

from .errors import FormatError, TruncatedError

_U32 = struct.Struct("<I")
MAX_RANK = 8
MAX_DIM = 1 << 31


def write_u32(f, value: int):
    f.write(_U32.pack(value))


def read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedError(f"file ends inside {what} ({len(data)} of {n} bytes)")
    return data


def read_u32(f, what: str) -> int:
    return _U32.unpack(read_exact(f, 4, what))[0]


def write_record(f, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    write_u32(f, len(nb))
    f.write(nb)
    write_u32(f, arr.ndim)
    for d in arr.shape:
        write_u32(f, d)
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_record(f):
    """Read one record, or return None at a clean end of file."""
    head = f.read(4)
    if head == b"":
        return None
    if len(head) != 4:
        raise TruncatedError("file ends inside a record name length")
    (nlen,) = _U32.unpack(head)
    if nlen == 0 or nlen > 4096:
        raise FormatError(f"implausible record name length {nlen}")
    name = read_exact(f, nlen, "a record name").decode("utf-8", errors="replace")
    rank = read_u32(f, f"rank of record {name!r}")
    if rank > MAX_RANK:
        raise FormatError(f"record {name!r} has implausible rank {rank}")
    dims = tuple(read_u32(f, f"dims of record {name!r}") for _ in range(rank))
    count = 1
    for d in dims:
        if d >= MAX_DIM:
            raise FormatError(f"record {name!r} has implausible dim {d}")
        count *= d
    payload = read_exact(f, 4 * count, f"payload of record {name!r}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return name, np.ascontiguousarray(arr).astype(np.float32, copy=False)
