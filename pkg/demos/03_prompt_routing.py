"""Discrete prompt routing with usable gradients.

Each token picks exactly one row of a learnable prompt pool. The pick
is a hard argmax over Gumbel-perturbed logits, so the forward pass is
genuinely discrete; gradients flow anyway because the backward pass
pretends the softmax relaxation was used (straight-through). The token
order for the scan then comes from grouping tokens by their picks.

    python3 demos/03_prompt_routing.py
"""

import numpy as np

from promptscan.prompts import PromptPool, gumbel_noise, route_tokens
from promptscan.scan import semantic_order
from promptscan.tensor import Tensor

rng = np.random.default_rng(4)
pool = PromptPool(pool=Tensor(rng.standard_normal((3, 5)), requires_grad=True),
                  temperature=1.0, rng_seed=7)
logits = Tensor(rng.standard_normal((1, 8, 3)), requires_grad=True)

# Training mode draws noise from the pool's own seeded stream, so runs
# replay exactly. The result is one-hot row by row.
routed = route_tokens(logits, pool, train_mode=True)
print("routing matrix (rows are tokens):")
print(routed.data[0].astype(int))
print("every row one-hot:", bool(np.all(routed.data.sum(-1) == 1.0)))

# Backward: the hard output is not differentiable, but the surrogate
# gradient is the softmax one. A quick finite-difference comparison on
# the soft path shows they agree.
weights = rng.standard_normal(routed.shape)
(routed * Tensor(weights)).sum().backward()
print("straight-through grad on logits, first token:", logits.grad[0, 0].round(4))

noise = gumbel_noise(logits.shape, np.random.default_rng(0))
lt = Tensor(logits.data.copy(), requires_grad=True)
(route_tokens(lt, pool, True, noise=noise) * Tensor(weights)).sum().backward()

def soft_val(arr):
    s = route_tokens(Tensor(arr), pool, True, route_mode="soft", noise=noise)
    return float((s.data * weights).sum())

h = 1e-6
bump = logits.data.copy()
bump[0, 0, 0] += h
up = soft_val(bump)
bump[0, 0, 0] -= 2 * h
dn = soft_val(bump)
print(f"entry [0,0,0]: surrogate {lt.grad[0, 0, 0]:+.8f}  soft FD {(up - dn) / (2 * h):+.8f}")

# Inference drops the noise and takes the plain argmax, deterministic.
eval_route = route_tokens(Tensor(logits.data), pool, train_mode=False)
print("\neval picks:", np.argmax(eval_route.data[0], axis=-1))

# The scan order groups tokens by their picked prompt, ties staying in
# raster order. Tokens that chose prompt 0 come first, and so on.
order = semantic_order(eval_route)
keys = np.argmax(eval_route.data[0], axis=-1)
print("scan order:", order.perm[0], "-> keys along the scan:", keys[order.perm[0]])
