"""
Reverse-mode gradients by hand, then by finite differences
============================================================

A dilated 3x3 convolution feeding a sigmoid, reduced to a scalar. We backprop once
and compare a few weight gradients with central differences.
"""

import numpy as np

from caranet import tensor as T
from caranet.gradcheck import check, numeric_gradient
from caranet.tensor import ConvSpec, Tensor

rng = np.random.default_rng(0)

# a 2-channel 9x9 input and a dilation-2 kernel; padding defaults to "same"
x = Tensor(rng.normal(size=(1, 2, 9, 9)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.3, requires_grad=True)
spec = ConvSpec(2, 3, dilation=2)

def loss():
    return T.sum(T.sigmoid(T.conv2d(x, w, spec)))

out = loss()
out.backward()
print("loss", out.item())
print("dL/dw shape", w.grad.shape)

# central differences for three weight entries
for idx in [(0, 0, 0, 0), (1, 1, 1, 1), (2, 0, 2, 1)]:
    fd = numeric_gradient(lambda: loss().item(), w.data, idx)
    print(idx, "analytic %.8f  numeric %.8f" % (w.grad[idx], fd))

# the same comparison over every entry of both tensors
report = check("dilated conv + sigmoid", loss, [x, w])
print(report.name, "max relative error %.2e over %d entries" % (report.max_error, report.checked))

# bilinear resize is a pair of interpolation matrices, so its gradient is their transpose
small = Tensor(rng.normal(size=(1, 1, 4, 4)), requires_grad=True)
up = T.bilinear_resize(small, 8, 8)
T.sum(up).backward()
print("resize 4->8, gradient of the sum per input pixel:\n", small.grad[0, 0])
