"""Small tanh MLP trained on physics residual plus boundary/initial data,
serving as the production source of the Taylor prior.

The model itself is plain numpy (weights, biases) so jet-forward extraction
of higher-order derivatives stays dependency-light; training runs through
torch autograd on a float64 mirror of the same parameters, then copies the
weights back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jets
from .jets import Jet
from .problems import PdeProblem


@dataclass
class Mlp:
    """Fully-connected tanh network mapping a domain point to a scalar."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: (sizes[i+1], sizes[i])
    biases: list[np.ndarray]  # biases[i]: (sizes[i+1],)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError("only tanh networks are supported (smooth to all orders)")
        for w in self.weights + self.biases:
            if not np.isfinite(w).all():
                raise ValueError("non-finite network parameter")

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    def forward(self, pts) -> np.ndarray:
        """Batched scalar prediction; (N, d) -> (N,) or (d,) -> float."""
        x = np.asarray(pts, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
        h = h @ self.weights[-1].T + self.biases[-1]
        out = h[:, 0]
        return float(out[0]) if single else out

    def eval_coeffs(self, pts: np.ndarray, axis, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, N) along ``axis`` via jet propagation.

        ``axis`` may be an int or a per-point int array (mixed-axis batch).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        # input coefficients: (K+1, N, d)
        h = np.zeros((order + 1, n, self.in_dim))
        h[0] = pts
        if np.ndim(axis) == 0:
            h[1, :, axis] = 1.0
        else:
            h[1, np.arange(n), axis] = 1.0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T  # affine maps act order-wise
            z[0] += b
            h = z if i == len(self.weights) - 1 else jets.tanh_coeffs(z)
        return h[:, :, 0]

    def forward_jet(self, point, axis: int, order: int) -> Jet:
        coeffs = self.eval_coeffs(np.asarray(point, dtype=float)[None, :], axis, order)
        return Jet(coeffs[:, 0])

    def save(self, path: str | Path) -> None:
        payload = {
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
        }
        Path(path).write_text(json.dumps(payload))

    @staticmethod
    def load(path: str | Path) -> "Mlp":
        payload = json.loads(Path(path).read_text())
        return Mlp(
            sizes=tuple(payload["sizes"]),
            weights=[np.asarray(w, dtype=float) for w in payload["weights"]],
            biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
            activation=payload["activation"],
        )


def init_mlp(in_dim: int, hidden: tuple[int, ...], rng: np.random.Generator) -> Mlp:
    """Xavier-initialized tanh network with scalar output."""
    sizes = (in_dim,) + tuple(hidden) + (1,)
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, size=(b, a)))
        biases.append(np.zeros(b))
    return Mlp(sizes, weights, biases)


@dataclass
class TrainConfig:
    n_collocation: int = 2000
    n_condition: int = 200  # per deterministic condition
    lr: float = 2e-3
    steps: int = 10000
    seed: int = 0
    w_res: float = 1.0
    w_data: float = 10.0
    hidden: tuple[int, ...] = (32, 32, 32)
    polish_steps: int = 1500  # full-batch L-BFGS iterations after the Adam phase

    def __post_init__(self):
        if self.n_collocation < 1 or self.n_condition < 1 or self.steps < 0:
            raise ValueError("counts must be positive and steps non-negative")
        if self.polish_steps < 0:
            raise ValueError("polish_steps must be non-negative")


@dataclass
class TrainResult:
    model: Mlp
    loss_trace: list[float] = field(default_factory=list)


class _TorchField:
    """Autograd-backed field protocol matching problems.JetField."""

    def __init__(self, net, pts):
        self.pts = pts
        self.u = net(pts).squeeze(-1)

    def values(self):
        return self.u

    def d(self, axis: int, order: int):
        import torch

        g = self.u
        for _ in range(order):
            g = torch.autograd.grad(g.sum(), self.pts, create_graph=True)[0][:, axis]
        return g


def _build_torch_net(model: Mlp):
    import torch

    layers = []
    for i in range(len(model.sizes) - 1):
        lin = torch.nn.Linear(model.sizes[i], model.sizes[i + 1], dtype=torch.float64)
        with torch.no_grad():
            lin.weight.copy_(torch.from_numpy(model.weights[i]))
            lin.bias.copy_(torch.from_numpy(model.biases[i]))
        layers.append(lin)
        if i < len(model.sizes) - 2:
            layers.append(torch.nn.Tanh())
    return torch.nn.Sequential(*layers)


def build_training_loss(problem: PdeProblem, cfg: TrainConfig, rng: np.random.Generator):
    """Sample the training sets once and return (torch net, loss closure).

    Exposed separately from ``train`` so gradient checks can probe the exact
    objective the optimizer sees.
    """
    import torch

    from .problems import sample_collocation

    model = init_mlp(problem.dim, cfg.hidden, rng)
    net = _build_torch_net(model)

    col_np = sample_collocation(problem, cfg.n_collocation, rng)
    col = torch.tensor(col_np, dtype=torch.float64, requires_grad=True)
    forcing = (
        torch.tensor(problem.forcing(col_np), dtype=torch.float64)
        if problem.forcing is not None
        else None
    )
    cond_sets = []
    for cond in problem.conditions:
        pts_np = cond.sample(cfg.n_condition, rng)
        cond_sets.append(
            (
                torch.tensor(pts_np, dtype=torch.float64),
                torch.tensor(cond.target(pts_np), dtype=torch.float64),
            )
        )

    def loss_fn():
        f = _TorchField(net, col)
        r = problem.lhs(f)
        if forcing is not None:
            r = r - forcing
        loss = cfg.w_res * (r**2).mean()
        for pts, target in cond_sets:
            loss = loss + cfg.w_data * ((net(pts).squeeze(-1) - target) ** 2).mean()
        return loss

    return net, loss_fn


def _net_to_mlp(net, sizes: tuple[int, ...]) -> Mlp:
    import torch

    weights, biases = [], []
    for layer in net:
        if isinstance(layer, torch.nn.Linear):
            weights.append(layer.weight.detach().numpy().copy())
            biases.append(layer.bias.detach().numpy().copy())
    return Mlp(sizes, weights, biases)


def train(problem: PdeProblem, cfg: TrainConfig, rng: np.random.Generator) -> TrainResult:
    """Adam on residual + condition data, then a full-batch L-BFGS polish.

    First-order optimizers stall with second-derivative residual accuracy
    around 1e-1 relative; the quasi-Newton phase is what makes the extracted
    higher-order coefficients usable as a structural prior.  Aborts on a
    non-finite loss.
    """
    import torch

    net, loss_fn = build_training_loss(problem, cfg, rng)
    sizes = (problem.dim,) + tuple(cfg.hidden) + (1,)
    trace: list[float] = []
    if cfg.steps == 0 and cfg.polish_steps == 0:
        return TrainResult(_net_to_mlp(net, sizes), trace)

    if cfg.steps > 0:
        opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.steps)
        for step in range(cfg.steps):
            opt.zero_grad()
            loss = loss_fn()
            value = loss.detach().item()
            if not math.isfinite(value):
                raise RuntimeError(f"non-finite training loss at step {step}: {value}")
            loss.backward()
            opt.step()
            sched.step()
            trace.append(value)

    if cfg.polish_steps > 0:
        polish = torch.optim.LBFGS(
            net.parameters(),
            max_iter=cfg.polish_steps,
            history_size=50,
            tolerance_grad=1e-14,
            tolerance_change=1e-16,
            line_search_fn="strong_wolfe",
        )

        def closure():
            polish.zero_grad()
            loss = loss_fn()
            loss.backward()
            return loss

        polish.step(closure)
        final = loss_fn().detach().item()
        if not math.isfinite(final):
            raise RuntimeError(f"non-finite loss after quasi-Newton polish: {final}")
        trace.append(final)
    return TrainResult(_net_to_mlp(net, sizes), trace)
