"""Adam with named parameter groups and structural row editing.

Map densification appends and removes Gaussians mid-optimization; moment
rows follow along (new rows start at zero, pruned rows are dropped).
"""

import numpy as np


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def ensure(self, name, shape):
        if name not in self.m or self.m[name].shape != tuple(shape):
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)
            self.t[name] = 0

    def step(self, name, grad, lr):
        """Returns the update to subtract from the parameters."""
        grad = np.asarray(grad, dtype=np.float64)
        self.ensure(name, grad.shape)
        self.t[name] += 1
        t = self.t[name]
        m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
        v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad ** 2
        mhat = m / (1 - self.beta1 ** t)
        vhat = v / (1 - self.beta2 ** t)
        return lr * mhat / (np.sqrt(vhat) + self.eps)

    def keep_rows(self, keep):
        for name in self.m:
            self.m[name] = self.m[name][keep]
            self.v[name] = self.v[name][keep]

    def append_rows(self, n):
        for name in self.m:
            pad = (n,) + self.m[name].shape[1:]
            self.m[name] = np.concatenate([self.m[name], np.zeros(pad)])
            self.v[name] = np.concatenate([self.v[name], np.zeros(pad)])
