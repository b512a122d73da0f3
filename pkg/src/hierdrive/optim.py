"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

import numpy as np


def cosine_lr(step, lr0, lr_min, total_steps):
    """lr0 at step 0, lr_min at step >= total_steps, cosine in between."""
    t = min(max(step, 0), total_steps) / max(total_steps, 1)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * t))


class AdamW:
    def __init__(self, named_params, lr0=4e-4, lr_min=4e-6, total_steps=1,
                 weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(named_params)
        self.lr0 = lr0
        self.lr_min = lr_min
        self.total_steps = total_steps
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, schedule_step=None):
        """Apply one update from the gradients stored on the parameters.

        Parameters without a gradient this step are skipped. Raises on any
        non-finite gradient.
        """
        if schedule_step is None:
            schedule_step = self.t
        lr = cosine_lr(schedule_step, self.lr0, self.lr_min, self.total_steps)
        b1, b2 = self.betas
        self.t += 1
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient in {name}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= lr * (update + self.weight_decay * p.data)
            p.grad = None
        return lr

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self):
        """Flat name->array view of the optimizer state for checkpointing."""
        out = {"opt/step": np.array([float(self.t)])}
        for name in self.params:
            out[f"opt/m/{name}"] = self.m[name]
            out[f"opt/v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["opt/step"][0])
        for name in self.params:
            self.m[name] = arrays[f"opt/m/{name}"].reshape(self.m[name].shape).copy()
            self.v[name] = arrays[f"opt/v/{name}"].reshape(self.v[name].shape).copy()
