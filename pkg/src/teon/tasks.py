"""Synthetic training objectives with exact manual gradients.

Four desk-scale tasks, all full-batch and deterministic in their seed:

* quadratic          elementwise-anisotropic quadratic over a K-stack
* aligned_quadratic  quadratic whose gradients live on the shared-right-
                     vector rank-1 cone (the family that attains the sqrt(K)
                     norm gap), so stacked orthogonalization is provably at
                     its best case
* deep_linear        least squares through a product of square matrices,
                     teacher-generated targets, exact backprop
* micro_attention    a stack of minimal transformer blocks (single-head
                     softmax attention, tanh MLP, residuals, no norm layers)
                     with manual backprop for Q/K/V/O/MLP1/MLP2 per block
                     plus a shared readout matrix and bias

Every task exposes `layout` (named parameters with roles/blocks for
grouping), `init_weights(rng)`, and `loss_and_grads(weights)`. Gradient
correctness is checked by central finite differences; micro_attention runs
that check at construction time and refuses to instantiate if it fails.
"""

from __future__ import annotations

import numpy as np

from .linalg import stack_slices
from .norms import build_max_gain_tensor
from .optim import LayoutEntry

__all__ = [
    "TASK_NAMES",
    "QuadraticTask",
    "AlignedQuadraticTask",
    "DeepLinearTask",
    "MicroAttentionTask",
    "make_task",
    "finite_difference_check",
    "per_parameter_fd_errors",
]

TASK_NAMES = ("quadratic", "aligned_quadratic", "deep_linear", "micro_attention")


def _positive(**dims):
    for key, val in dims.items():
        if not isinstance(val, (int, np.integer)) or val < 1:
            raise ValueError(f"{key} must be a positive integer, got {val!r}")


class QuadraticTask:
    """f(W) = 1/2 sum_k <H^(k) . (W^(k) - T^(k)), W^(k) - T^(k)> with
    elementwise curvature H in [0.5, 1.5]; gradient H . (W - T)."""

    name = "quadratic"

    def __init__(self, m: int, n: int, K: int, seed: int):
        _positive(m=m, n=n, K=K)
        rng = np.random.default_rng([seed, 81])
        self.m, self.n, self.K = m, n, K
        self.curvature = rng.uniform(0.5, 1.5, (m, n, K))
        self.target = rng.standard_normal((m, n, K))
        self.layout = [LayoutEntry(f"layer{k}", "W", (m, n), k) for k in range(K)]

    def init_weights(self, rng) -> dict:
        return {f"layer{k}": np.zeros((self.m, self.n)) for k in range(self.K)}

    def loss_and_grads(self, weights: dict):
        w = stack_slices([weights[f"layer{k}"] for k in range(self.K)])
        d = w - self.target
        loss = 0.5 * float(np.sum(self.curvature * d * d))
        g = self.curvature * d
        return loss, {f"layer{k}": g[:, :, k] for k in range(self.K)}


class AlignedQuadraticTask:
    """f(W) = 1/2 ||W - c G*||_F^2 where G* has shared right vector v and
    orthonormal left vectors u^(k); the gradient W - c G* stays on that cone
    along the whole trajectory from W=0."""

    name = "aligned_quadratic"

    def __init__(self, m: int, n: int, K: int, seed: int, c: float = 1.5):
        _positive(m=m, n=n, K=K)
        if K > m:
            raise ValueError(f"the aligned cone needs K <= m, got K={K}, m={m}")
        if not (np.isfinite(c) and c != 0):
            raise ValueError(f"c must be finite and nonzero, got {c}")
        self.m, self.n, self.K, self.c = m, n, K, float(c)
        self.gstar = build_max_gain_tensor(m, n, K, mode=2, seed=seed)
        self.target = self.c * self.gstar
        self.layout = [LayoutEntry(f"layer{k}", "W", (m, n), k) for k in range(K)]

    def init_weights(self, rng) -> dict:
        return {f"layer{k}": np.zeros((self.m, self.n)) for k in range(self.K)}

    def loss_and_grads(self, weights: dict):
        w = stack_slices([weights[f"layer{k}"] for k in range(self.K)])
        d = w - self.target
        loss = 0.5 * float(np.sum(d * d))
        return loss, {f"layer{k}": d[:, :, k] for k in range(self.K)}


class DeepLinearTask:
    """Least squares through W^(N) ... W^(1) x with orthogonal-teacher
    targets. Exact layer gradients via backprop; depth 1 is plain linear
    regression with gradient (Wx - y) x^T / batch."""

    name = "deep_linear"

    def __init__(self, depth: int, width: int, batch: int, seed: int):
        _positive(depth=depth, width=width, batch=batch)
        rng = np.random.default_rng([seed, 82])
        self.depth, self.width, self.batch = depth, width, batch
        self.x = rng.standard_normal((width, batch))
        y = self.x
        for _ in range(depth):
            q = np.linalg.qr(rng.standard_normal((width, width)))[0]
            y = q @ y
        self.y = y
        self.layout = [LayoutEntry(f"w{i}", "W", (width, width), i) for i in range(depth)]

    def init_weights(self, rng) -> dict:
        eye = np.eye(self.width)
        scale = 0.05 / np.sqrt(self.width)
        return {
            f"w{i}": eye + scale * rng.standard_normal((self.width, self.width))
            for i in range(self.depth)
        }

    def loss_and_grads(self, weights: dict):
        ws = [weights[f"w{i}"] for i in range(self.depth)]
        hs = [self.x]
        for w in ws:
            hs.append(w @ hs[-1])
        resid = hs[-1] - self.y
        loss = 0.5 * float(np.sum(resid * resid)) / self.batch
        delta = resid / self.batch
        grads = {}
        for i in reversed(range(self.depth)):
            grads[f"w{i}"] = delta @ hs[i].T
            delta = ws[i].T @ delta
        return loss, grads


class MicroAttentionTask:
    """Residual transformer blocks on a fixed synthetic regression target.

    Per block: single-head attention (scores q k^T / sqrt(dim), softmax over
    keys), then a two-layer tanh MLP with hidden width 2*dim, both with
    residual connections and no normalization. A readout matrix and bias are
    shared across the sequence. All gradients are hand-derived; the
    constructor runs a central finite-difference gate and raises if any
    directional derivative disagrees beyond 1e-4.
    """

    name = "micro_attention"

    FD_GATE_TOL = 1e-4

    def __init__(
        self,
        dim: int,
        seq: int,
        batch: int,
        blocks: int,
        seed: int,
        heads: int = 1,
    ):
        _positive(dim=dim, seq=seq, batch=batch, blocks=blocks, heads=heads)
        if dim % heads != 0:
            raise ValueError(f"dim must be divisible by heads, got {dim} % {heads}")
        if heads != 1:
            raise ValueError("only single-head attention is implemented")
        if blocks < 2:
            raise ValueError(f"need at least 2 blocks, got {blocks}")
        rng = np.random.default_rng([seed, 83])
        self.dim, self.seq, self.batch, self.blocks = dim, seq, batch, blocks
        self.hidden = 2 * dim
        self.inputs = rng.standard_normal((batch, seq, dim))
        self.targets = 0.5 * rng.standard_normal((batch, seq, dim))
        layout = []
        for b in range(blocks):
            for role in ("Q", "K", "V", "O"):
                layout.append(LayoutEntry(f"b{b}.{role.lower()}", role, (dim, dim), b))
            layout.append(LayoutEntry(f"b{b}.mlp1", "MLP1", (self.hidden, dim), b))
            layout.append(LayoutEntry(f"b{b}.mlp2", "MLP2", (dim, self.hidden), b))
        layout.append(LayoutEntry("readout", "OUT", (dim, dim), None))
        layout.append(LayoutEntry("readout_bias", "bias", (dim,), None))
        self.layout = layout
        self._fd_gate(seed)

    def _fd_gate(self, seed: int):
        weights = self.init_weights(np.random.default_rng([seed, 84]))
        err = finite_difference_check(self, weights, directions=3, seed=seed)
        if err > self.FD_GATE_TOL:
            raise RuntimeError(
                f"micro_attention gradient check failed: max relative error {err:.3g}"
            )

    def init_weights(self, rng) -> dict:
        out = {}
        for e in self.layout:
            if len(e.shape) == 1:
                out[e.name] = np.zeros(e.shape)
            else:
                out[e.name] = rng.standard_normal(e.shape) / np.sqrt(e.shape[1])
        return out

    def _forward(self, weights: dict):
        x = self.inputs
        caches = []
        inv_sqrt_d = 1.0 / np.sqrt(self.dim)
        for b in range(self.blocks):
            wq, wk, wv = weights[f"b{b}.q"], weights[f"b{b}.k"], weights[f"b{b}.v"]
            wo, w1, w2 = weights[f"b{b}.o"], weights[f"b{b}.mlp1"], weights[f"b{b}.mlp2"]
            q = x @ wq.T
            k = x @ wk.T
            v = x @ wv.T
            scores = (q @ k.transpose(0, 2, 1)) * inv_sqrt_d
            scores -= scores.max(axis=-1, keepdims=True)  # stable softmax
            e = np.exp(scores)
            attn = e / e.sum(axis=-1, keepdims=True)
            ctx = attn @ v
            x1 = x + ctx @ wo.T
            h = x1 @ w1.T
            z = np.tanh(h)
            x2 = x1 + z @ w2.T
            caches.append((x, q, k, v, attn, ctx, x1, z))
            x = x2
        pred = x @ weights["readout"].T + weights["readout_bias"]
        return pred, x, caches

    def loss_and_grads(self, weights: dict):
        pred, x_final, caches = self._forward(weights)
        resid = pred - self.targets
        denom = self.batch * self.seq
        loss = 0.5 * float(np.sum(resid * resid)) / denom
        dpred = resid / denom
        grads = {
            "readout": np.einsum("bso,bsd->od", dpred, x_final),
            "readout_bias": dpred.sum(axis=(0, 1)),
        }
        dx = dpred @ weights["readout"]
        inv_sqrt_d = 1.0 / np.sqrt(self.dim)
        for b in reversed(range(self.blocks)):
            x, q, k, v, attn, ctx, x1, z = caches[b]
            wq, wk, wv = weights[f"b{b}.q"], weights[f"b{b}.k"], weights[f"b{b}.v"]
            wo, w1, w2 = weights[f"b{b}.o"], weights[f"b{b}.mlp1"], weights[f"b{b}.mlp2"]
            # x2 = x1 + tanh(x1 W1^T) W2^T
            dz = dx @ w2
            grads[f"b{b}.mlp2"] = np.einsum("bso,bsh->oh", dx, z)
            dh = (1.0 - z * z) * dz
            grads[f"b{b}.mlp1"] = np.einsum("bsh,bsd->hd", dh, x1)
            dx1 = dx + dh @ w1
            # x1 = x + (attn v) Wo^T
            grads[f"b{b}.o"] = np.einsum("bso,bsd->od", dx1, ctx)
            dctx = dx1 @ wo
            dattn = dctx @ v.transpose(0, 2, 1)
            dv = attn.transpose(0, 2, 1) @ dctx
            dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
            dq = (dscores @ k) * inv_sqrt_d
            dk = (dscores.transpose(0, 2, 1) @ q) * inv_sqrt_d
            grads[f"b{b}.q"] = np.einsum("bsd,bse->de", dq, x)
            grads[f"b{b}.k"] = np.einsum("bsd,bse->de", dk, x)
            grads[f"b{b}.v"] = np.einsum("bsd,bse->de", dv, x)
            dx = dx1 + dq @ wq + dk @ wk + dv @ wv
        return loss, grads


def make_task(name: str, seed: int, **params):
    """Instantiate a task by name; parameter names are task-specific and
    unknown ones are rejected."""
    builders = {
        "quadratic": QuadraticTask,
        "aligned_quadratic": AlignedQuadraticTask,
        "deep_linear": DeepLinearTask,
        "micro_attention": MicroAttentionTask,
    }
    if name not in builders:
        raise ValueError(f"unknown task {name!r}; valid: {TASK_NAMES}")
    try:
        return builders[name](seed=seed, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for task {name!r}: {exc}") from None


def finite_difference_check(
    task, weights: dict, *, directions: int = 20, h: float = 1e-5, seed: int = 0
) -> float:
    """Max relative error of <grad, delta> vs the central difference
    (f(w + h delta) - f(w - h delta)) / 2h over random directions."""
    rng = np.random.default_rng([seed, 85])
    _, grads = task.loss_and_grads(weights)
    worst = 0.0
    for _ in range(directions):
        delta = {key: rng.standard_normal(w.shape) for key, w in weights.items()}
        analytic = sum(float(np.sum(grads[key] * delta[key])) for key in weights)
        wp = {key: weights[key] + h * delta[key] for key in weights}
        wm = {key: weights[key] - h * delta[key] for key in weights}
        fd = (task.loss_and_grads(wp)[0] - task.loss_and_grads(wm)[0]) / (2.0 * h)
        worst = max(worst, abs(fd - analytic) / max(1.0, abs(analytic)))
    return worst


def per_parameter_fd_errors(
    task, weights: dict, *, directions: int = 3, h: float = 1e-5, seed: int = 0
) -> dict:
    """Like finite_difference_check but one parameter at a time, so a wrong
    gradient cannot hide behind a dominant one."""
    rng = np.random.default_rng([seed, 86])
    _, grads = task.loss_and_grads(weights)
    errors = {}
    for key, w in weights.items():
        worst = 0.0
        for _ in range(directions):
            delta = rng.standard_normal(w.shape)
            analytic = float(np.sum(grads[key] * delta))
            wp = dict(weights, **{key: w + h * delta})
            wm = dict(weights, **{key: w - h * delta})
            fd = (task.loss_and_grads(wp)[0] - task.loss_and_grads(wm)[0]) / (2.0 * h)
            worst = max(worst, abs(fd - analytic) / max(1.0, abs(analytic)))
        errors[key] = worst
    return errors
