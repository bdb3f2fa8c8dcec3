"""Walk through the integer wire format.

Every message on the simulated network is a sparse signed-integer
vector.  The encoding is self-delimiting: a header gives the number of
nonzeros, then each entry ships its gap from the previous position, one
sign bit, and its magnitude, all as Elias gamma codes.
"""

import numpy as np

from deedsim import BitStream, SparseIntVector, decode_sparse, elias_encode, encode_sparse

print("Elias gamma codes for small integers:")
for n in (1, 2, 3, 5, 17, 100):
    code = elias_encode(n)
    print(f"  {n:4d} -> {code.to01():>15s}  ({len(code)} bits)")

v = SparseIntVector(dim=12, positions=(2, 4, 11), values=(3, -1, 40))
stream = encode_sparse(v)
print(f"\nvector (dim 12) with entries {list(zip(v.positions, v.values))}")
print(f"  payload: {stream.to01()}  ({len(stream)} bits)")
print(f"  roundtrip ok: {decode_sparse(stream, 12) == v}")

data = stream.to_bytes()
print(f"  packed bytes: {data.hex()}  (unpadded length {len(stream)} recorded separately)")
print(f"  unpacked ok: {BitStream.from_bytes(data, len(stream)) == stream}")

# Sparser vectors cost fewer bits: the format is built for messages whose
# mass collapses onto a few coordinates.
rng = np.random.default_rng(0)
print("\nbits vs. density at dim 1000, values ~ +-[1, 64]:")
for density in (0.01, 0.1, 0.5, 1.0):
    nnz = int(1000 * density)
    pos = tuple(int(p) + 1 for p in np.sort(rng.choice(1000, nnz, replace=False)))
    val = tuple(int(x) for x in rng.integers(1, 65, nnz) * rng.choice([-1, 1], nnz))
    bits = len(encode_sparse(SparseIntVector(1000, pos, val)))
    print(f"  density {density:4.0%}: {bits:6d} bits ({bits / 1000:.2f} per coordinate)")
