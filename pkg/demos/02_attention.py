"""
Axial attention and the reverse gate
======================================

The gate along each axis is sigmoid(Q K^T / sqrt(C)), not a softmax, so rows of the
attention matrix need not sum to one. Reverse attention then weights features by
1 - sigmoid(S): confident foreground is switched off and the stage looks elsewhere.
"""

import numpy as np

from caranet.ara import AraStage, AxialAttention, ara_combine, reverse
from caranet.tensor import Tensor

rng = np.random.default_rng(1)

# a 4-channel 6x5 feature map
x = Tensor(rng.normal(size=(1, 4, 6, 5)))
att = AxialAttention(rng, 4)
mid = att.height(x)   # each column attends over its 6 rows
out = att(x)          # then each row over its 5 columns
print("height pass", mid.shape, "both passes", out.shape)

# the reverse gate for a coarse map that is confident on the left half
s = np.full((1, 1, 6, 5), -6.0)
s[..., :2] = 6.0
r = reverse(Tensor(s))
print("reverse gate, first row:", np.round(r.data[0, 0, 0], 4))
print("R(0) =", reverse(Tensor(np.zeros((1, 1, 1, 1)))).item())

# gated features vanish where the gate is near zero
gated = ara_combine(out, r)
print("mean |feature| left %.2e, right %.2e" % (np.abs(gated.data[..., :2]).mean(),
                                                 np.abs(gated.data[..., 2:]).mean()))

# a freshly built stage starts as the identity on the incoming map
stage = AraStage(rng, 4)
refined = stage(x, Tensor(s))
print("untrained stage returns its input map:", np.array_equal(refined.data, s))
