"""
Checking analytic gradients against central differences
========================================================

"""

import numpy as np

from anchorlab.nn import (Batch, batch_loss_and_grad, ce_loss, forward,
                          init_network, input_grad, params_flat,
                          with_params_flat)

# a small two-hidden-layer net and a random labelled batch
rng = np.random.default_rng(0)
net = init_network([6, 5, 4, 3], seed=0)
batch = Batch(rng.normal(size=(4, 6)), rng.integers(0, 3, size=4),
              np.zeros(4, dtype=np.int64))

loss, grad = batch_loss_and_grad(net, batch)
print(f"batch loss {loss:.4f}, {grad.flat().size} parameters")

# perturb each parameter by +-h and compare the finite-difference slope
# with the backprop value
base = params_flat(net)
analytic = grad.flat()
h = 1e-5
worst = 0.0
for i in range(base.size):
    up, down = base.copy(), base.copy()
    up[i] += h
    down[i] -= h
    fd = (batch_loss_and_grad(with_params_flat(net, up), batch)[0]
          - batch_loss_and_grad(with_params_flat(net, down), batch)[0]) / (2 * h)
    if abs(fd) > 1e-8:
        worst = max(worst, abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd)))
print(f"worst relative error over parameters: {worst:.2e}")

# the same check works for the gradient with respect to the input,
# which is what anchor learning ascends
x = rng.normal(size=6)
label = 1
gi = input_grad(net, x, label)
worst = 0.0
for i in range(6):
    up, down = x.copy(), x.copy()
    up[i] += h
    down[i] -= h
    fd = (ce_loss(forward(net, up), label)
          - ce_loss(forward(net, down), label)) / (2 * h)
    if abs(fd) > 1e-8:
        worst = max(worst, abs(gi[i] - fd) / max(abs(gi[i]), abs(fd)))
print(f"worst relative error over inputs:     {worst:.2e}")

# near a ReLU kink the loss is not differentiable and central differences
# straddle the corner, so checks like the above only make sense at points
# with some margin from every kink; the verification module handles the
# rejection sampling for you
from anchorlab.verification import gradient_check_suite

worst_param, worst_input = gradient_check_suite(n_cases=10)
print(f"suite over 10 random nets: params {worst_param:.2e}, "
      f"inputs {worst_input:.2e}")
