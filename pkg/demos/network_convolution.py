"""
Network convolution on a small linear network
=============================================

Build a five-segment star-plus-tail network, look at its weight matrix,
and check that repeated convolution matches the explicit walk sums.
"""

import numpy as np

from cnhpp import NeighborConfig, build_network, build_weights
from cnhpp.convolution import nc_nfold
from cnhpp.network import enumerate_walks, generation_neighbors, matrix_power_apply

# three spokes meet at the origin; a tail hangs off the end of spoke 0
segments = [
    ((0, 0), (1, 0)),
    ((0, 0), (0, 1)),
    ((0, 0), (-1, 0)),
    ((1, 0), (2, 0)),
    ((2, 0), (3, 0)),
]
net = build_network(segments)
print("adjacency:", net.adjacency)

cfg = NeighborConfig(include_self=True)
W = build_weights(net, cfg)
print("equal weights (rows sum to one):")
print(np.round(W.toarray(), 3))

# generations of neighbours seen from the far end of the tail
for m in range(4):
    print(f"generation {m} of segment 4:", sorted(generation_neighbors(net, 4, m, cfg)))

# a spike on segment 4 spreads one generation per convolution
f = np.zeros(5)
f[4] = 1.0
for n in range(4):
    print(f"{n}-fold convolution:", np.round(nc_nfold(W, f, n), 4))

# W^k entries are weighted sums over k-step walks
k = 3
P = matrix_power_apply(W, k, np.eye(5))
B = np.array([[enumerate_walks(net, W, j, i, k) for j in range(5)] for i in range(5)])
print("max |W^3 - walk sums| =", np.abs(P - B).max())

# exponential kernel on midpoint distances, for comparison
Wexp = build_weights(net, NeighborConfig(include_self=False, scheme="exponential"))
print("exponential weights, row 0:", Wexp.rows[0])
