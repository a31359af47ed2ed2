"""Reverse-mode gradients on a tiny graph, checked against finite differences.

Run: python3 demos/01_gradients.py
"""
import numpy as np

from saliency_hash import Tensor
from saliency_hash.attention import spatial_attention
from saliency_hash.gradcheck import EXTENDED, finite_diff_check
from saliency_hash.tensor import make_rng

rng = make_rng(0)

# f(x) = sum(relu(x @ w)^2), differentiated by hand and by the tape.
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
h = x @ w
r = h.relu()
(r * r).sum().backward()
by_hand = 2 * np.maximum(h.data, 0) @ w.data.T
print("d/dx by hand vs tape, max abs diff:", np.abs(by_hand - x.grad).max())

# The attention gate mixes a channel max and a channel mean, so its gradient
# takes both routes. Central differences in extended precision agree.
x = Tensor(rng.standard_normal((2, 3, 4, 4)))
err = finite_diff_check(lambda t: (spatial_attention(t) * t).sum(), x, oracle_dtype=EXTENDED)
print(f"spatial attention, worst relative error: {err:.2e}")
