"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def block_mean(a, kx, ky, kz, kt):
    a = np.asarray(a, dtype=np.float64)
    bx, by, bz, bt = (a.shape[0] // kx, a.shape[1] // ky,
                      a.shape[2] // kz, a.shape[3] // kt)
    trimmed = a[:bx * kx, :by * ky, :bz * kz, :bt * kt]
    blocks = trimmed.reshape(bx, kx, by, ky, bz, kz, bt, kt)
    return blocks.mean(axis=(1, 3, 5, 7))


def bias_elu(z, b, alpha, h, dh):
    z += b
    neg = z < 0.0
    h[...] = np.where(neg, alpha * np.expm1(np.minimum(z, 0.0)), z)
    dh[...] = np.where(neg, alpha * np.exp(np.minimum(z, 0.0)), 1.0)


def adam_update(theta, g, m, v, lr, beta1, beta2, delta, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + delta)
