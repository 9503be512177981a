"""A tour of the reverse-mode engine: build a graph, backprop, verify.

Run from the repository root after an editable install:

    python3 demos/autodiff_basics.py
"""

import numpy as np

from foleygen.engine import Tensor, backward, conv1d_causal, grad_check, linear

# A tiny expression graph: y = tanh(x W + b), loss = sum(y^2)
rng = np.random.default_rng(0)
x = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
W = Tensor(rng.uniform(-1, 1, (3, 2)), requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)

y = linear(x, W, b).tanh()
loss = (y ** 2).sum()
backward(loss)

print("loss:", float(loss.data))
print("dL/db:", b.grad)

# The engine's own verifier: central finite differences vs. backprop.
err = grad_check(lambda x, W, b: (linear(x, W, b).tanh() ** 2).sum(),
                 [x, W, b])
print(f"max relative gradient error: {err:.2e}")

# Causal convolution never looks ahead: changing the last input sample
# cannot affect earlier outputs.
k = Tensor(rng.uniform(-1, 1, (2, 2, 3)))
sig = rng.uniform(-1, 1, (2, 8))
out_a = conv1d_causal(Tensor(sig), k, 1).data
sig[:, -1] += 1.0
out_b = conv1d_causal(Tensor(sig), k, 1).data
print("outputs before the perturbed sample identical:",
      np.array_equal(out_a[:, :-1], out_b[:, :-1]))
