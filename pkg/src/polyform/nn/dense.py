"""Dense layer stacks with batch normalisation and explicit backward passes."""
from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class DenseLayer:
    def __init__(self, din: int, dout: int, rng: np.random.Generator, norm: bool, act: bool):
        bound = 1.0 / np.sqrt(din)
        self.W = rng.uniform(-bound, bound, (din, dout))
        self.b = rng.uniform(-bound, bound, dout)
        self.norm = norm
        self.act = act
        if norm:
            self.gamma = np.ones(dout)
            self.beta = np.zeros(dout)
            self.running_mean = np.zeros(dout)
            self.running_var = np.ones(dout)

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = [("W", self.W), ("b", self.b)]
        if self.norm:
            out += [("gamma", self.gamma), ("beta", self.beta)]
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        if not self.norm:
            return []
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, training):
        z = x @ self.W + self.b
        cache = {"x": x}
        if self.norm:
            if training:
                mu = z.mean(0)
                var = z.var(0)
                n = len(z)
                self.running_mean *= 1 - BN_MOMENTUM
                self.running_mean += BN_MOMENTUM * mu
                unbiased = var * n / (n - 1) if n > 1 else var
                self.running_var *= 1 - BN_MOMENTUM
                self.running_var += BN_MOMENTUM * unbiased
            else:
                mu, var = self.running_mean, self.running_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mu) * inv_std
            cache.update(zhat=zhat, inv_std=inv_std, training=training)
            z = self.gamma * zhat + self.beta
        if self.act:
            cache["mask"] = z > 0
            z = z * cache["mask"]
        return z, cache

    def backward(self, dy, cache, need_dx=True):
        if self.act:
            dy = dy * cache["mask"]
        grads = []
        if self.norm:
            zhat, inv_std = cache["zhat"], cache["inv_std"]
            dgamma = (dy * zhat).sum(0)
            dbeta = dy.sum(0)
            dzhat = dy * self.gamma
            if cache["training"]:
                n = len(dy)
                dz = inv_std / n * (n * dzhat - dzhat.sum(0) - zhat * (dzhat * zhat).sum(0))
            else:
                dz = dzhat * inv_std
            grads_norm = [dgamma, dbeta]
        else:
            dz = dy
            grads_norm = []
        grads = [cache["x"].T @ dz, dz.sum(0)] + grads_norm
        dx = dz @ self.W.T if need_dx else None
        return dx, grads


class DenseStack:
    """Chain of affine layers.

    Every layer except (with ``plain_last``) the final one is followed by
    batch normalisation when ``norm`` is set and ReLU when ``act`` is set.
    """

    def __init__(self, dims, rng, norm=True, act=True, plain_last=True):
        self.dims = list(dims)
        self.layers = []
        for li, (din, dout) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bare = plain_last and li == len(self.dims) - 2
            self.layers.append(DenseLayer(din, dout, rng, norm and not bare, act and not bare))

    @property
    def in_dim(self):
        return self.dims[0]

    @property
    def out_dim(self):
        return self.dims[-1]

    def params(self):
        return [(f"{i}.{n}", a) for i, layer in enumerate(self.layers) for n, a in layer.params()]

    def buffers(self):
        return [(f"{i}.{n}", a) for i, layer in enumerate(self.layers) for n, a in layer.buffers()]

    def forward(self, x, training=False):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, training)
            caches.append(c)
        return x, caches

    def backward(self, dy, caches, need_dx=True):
        grads = []
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            dy, g = layer.backward(dy, caches[idx], need_dx=need_dx or idx > 0)
            grads = g + grads
        return dy, grads
