"""Block measurement and the patch operators on one synthetic frame.

Run with ``python3 demos/01_measure_and_patch.py``.
"""

import numpy as np

from cvsdl.patches import aggregate_patches, extract_patches, make_layout
from cvsdl.sensing import apply_global_adjoint, gen_sensing_matrix, measure_frame
from cvsdl.synthetic import piecewise_frame

frame = piecewise_frame(64, 64, seed=1)

# A 32x32 block operator at 30% keeps floor(0.3 * 1024) rows per block.
phi = gen_sensing_matrix(seed=0, mr=0.3, block_side=32)
f = measure_frame(frame, phi)
print(f"blocks: {f.shape[0]}, measurements per block: {phi.m_b} of {phi.n_b}")
print("rows orthonormal:", np.allclose(phi.entries @ phi.entries.T, np.eye(phi.m_b)))

# Back-projection alone is a poor image; the decoders fix that.
back = apply_global_adjoint(f, phi, frame.shape)
print(f"back-projection RMS error: {np.sqrt(np.mean((back - frame) ** 2)):.1f}")

# Overlapping 8x8 patches at stride 4, averaged back exactly.
layout = make_layout(frame.shape, 8, 4)
P = extract_patches(frame, layout)
print(f"patch matrix {P.shape}, coverage range {layout.coverage.min()}..{layout.coverage.max()}")
print("aggregate(extract(u)) == u:", np.array_equal(aggregate_patches(P, layout), frame))
