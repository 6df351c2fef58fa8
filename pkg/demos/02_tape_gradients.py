"""The reverse-mode tape in isolation: record a few operations, run backward,
and confront the result with central finite differences."""

import numpy as np

from topofield import Tape
from topofield import autodiff as ad
from topofield.oracle import finite_difference_gradient

tape = Tape()
x = tape.leaf(np.array([0.4, 1.2, 2.0]))
y = ad.sigmoid(x * x - 1.0) + ad.sqrt(x)
loss = (y * np.array([1.0, -2.0, 0.5])).sum()
grads = tape.backward(loss)

print("forward value:", float(loss.value))
print("tape gradient:", grads.of(x))


def replay(v):
    t = Tape()
    xv = t.leaf(v)
    yv = ad.sigmoid(xv * xv - 1.0) + ad.sqrt(xv)
    return float((yv * np.array([1.0, -2.0, 0.5])).sum().value)


fd = finite_difference_gradient(replay, np.array([0.4, 1.2, 2.0]), h=1e-6)
print("finite differences:", fd)
print("max abs deviation:", np.abs(grads.of(x) - fd).max())

# a value consumed twice accumulates both adjoint paths
tape.reset()
z = tape.leaf(3.0)
print("\nd(z + z)/dz =", tape.backward(z + z).of(z), "(additive accumulation)")
