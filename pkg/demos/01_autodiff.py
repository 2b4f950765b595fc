"""
Reverse-mode autodiff in a few lines
====================================

Tensors record the op that made them; ``backward`` walks the tape in
reverse. Everything the model needs is built from these pieces.
"""

import numpy as np

from infnet import numerics as nx

rng = np.random.default_rng(0)

# a scalar function of a matrix
x = nx.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = nx.Tensor(rng.normal(size=(4, 2)))
loss = nx.sum_all(nx.tanh(nx.matmul(x, w)))
nx.backward(loss)
print("loss", loss.item())
print("d loss / d x\n", x.grad)

# backprop agrees with central differences
f = lambda t: nx.sum_all(nx.tanh(nx.matmul(t, w)))  # noqa: E731
print("max relative error vs finite differences:", nx.grad_check(f, nx.Tensor(x.data.copy())))

# attention weights over segments always sum to one per segment
logits = nx.Tensor(rng.normal(size=6))
seg = np.array([0, 0, 1, 2, 2, 2])
alpha = nx.segment_softmax(logits, seg, 3)
print("softmax per segment", np.round(alpha.data, 3), "sums", np.bincount(seg, weights=alpha.data))

# a tiny logistic regression fitted with Adam
X = rng.normal(size=(500, 2))
y = (X @ np.array([2.0, -1.0]) + 0.3 * rng.normal(size=500) > 0).astype(float)
W = nx.Tensor(np.zeros((2, 1)), requires_grad=True)
b = nx.Tensor(np.zeros(1), requires_grad=True)
state = nx.AdamState(lr=0.1)
for it in range(200):
    for p in (W, b):
        p.zero_grad()
    p_hat = nx.reshape(nx.sigmoid(nx.linear(nx.Tensor(X), W, b)), (-1,))
    bce = nx.binary_cross_entropy(y, p_hat)
    nx.backward(bce)
    nx.adam_step([W, b], [W.grad, b.grad], state)
print("fitted weights", W.data.ravel(), "final loss", round(bce.item(), 4))
