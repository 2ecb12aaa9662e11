"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np


class AdamState:
    """Classic Adam (beta1=0.9, beta2=0.999, eps=1e-8) over a fixed set of
    named tensors.  Moments persist across epochs; missing gradients count
    as zero so momentum still decays."""

    def __init__(self, named_tensors, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = dict(named_tensors)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.tensors.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in self.tensors.items()}

    def step(self):
        """Apply one update using the gradients accumulated on the tensors."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.tensors.items():
            grad = tensor.grad
            if grad is None:
                grad = np.zeros_like(tensor.data)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            tensor.data = tensor.data - update.astype(tensor.dtype)

    def state_tensors(self):
        """Moment arrays and step counter keyed for checkpointing."""
        out = {}
        for name in self.tensors:
            out[f"adam/m/{name}"] = self.m[name]
            out[f"adam/v/{name}"] = self.v[name]
        out["adam/t"] = np.asarray([float(self.t)], dtype=np.float32)
        return out

    def load_state(self, arrays):
        for name in self.tensors:
            m_key, v_key = f"adam/m/{name}", f"adam/v/{name}"
            if m_key in arrays:
                self.m[name] = np.asarray(arrays[m_key],
                                          dtype=self.tensors[name].dtype).reshape(
                    self.m[name].shape)
            if v_key in arrays:
                self.v[name] = np.asarray(arrays[v_key],
                                          dtype=self.tensors[name].dtype).reshape(
                    self.v[name].shape)
        if "adam/t" in arrays:
            self.t = int(round(float(np.asarray(arrays["adam/t"]).reshape(-1)[0])))
