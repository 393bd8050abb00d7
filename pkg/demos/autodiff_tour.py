"""A short walk through the array autodiff used by every loss in the package."""

import numpy as np

from phasediff import tensor as tc

# Leaves that want gradients are flagged at construction.
x = tc.Value(np.array([[0.5, -1.0, 2.0]]), requires_grad=True)
w = tc.Value(np.array([[1.0, 2.0], [0.0, 1.0], [-1.0, 0.5]]), requires_grad=True)

# A tiny two-layer expression: softplus(x @ w), summed.
y = tc.softplus(x @ w).sum()
y.backward()
print("value:", y.item())
print("d/dx:", x.grad)
print("d/dw:\n", w.grad)

# The same gradient by central differences.
err = tc.grad_check(lambda v: tc.softplus(v.reshape(1, 3) @ w.data).sum(), x.data)
print(f"relative error against finite differences: {err:.2e}")

# A tape can be walked once; a second backward on the same root is refused.
try:
    y.backward()
except RuntimeError as exc:
    print("second backward:", exc)

# Dilated convolution keeps the length: padding is taken from the dilation.
signal = tc.Value(np.random.default_rng(0).normal(size=(12, 2)), requires_grad=True)
kernel = tc.Value(np.ones((3, 2, 1)) / 6, requires_grad=True)
out = tc.conv1d(signal, kernel, dilation=4)
print("conv output shape:", out.shape)
