"""FGSM attacks, robust-accuracy sweeps, and sampled worst-case oracles."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .polynet import QuadraticClassifier, TwoLayerNetwork
from .polynet import evaluate as poly_evaluate
from .polynet import gradient as poly_gradient
from .relutrain import dual_exponent


def _evaluate(model, x):
    if isinstance(model, QuadraticClassifier):
        return poly_evaluate(model, x)
    if isinstance(model, TwoLayerNetwork):
        return model.forward(x)
    raise DomainError(f"unsupported model type {type(model).__name__}")


def _gradient(model, x):
    x = np.asarray(x, dtype=float)
    if isinstance(model, QuadraticClassifier):
        return poly_gradient(model, x)
    if isinstance(model, TwoLayerNetwork):
        if not model.neurons:
            return np.zeros_like(x)
        U = np.stack([u for u, _ in model.neurons])
        al = np.array([a for _, a in model.neurons])
        pre = U @ x
        if model.activation == "relu":
            # subgradient convention: zero preactivation uses the inactive branch
            return U.T @ (al * (pre > 0.0))
        a, b = model.activation.a, model.activation.b
        return U.T @ (al * (2.0 * a * pre + b))
    raise DomainError(f"unsupported model type {type(model).__name__}")


@dataclass(frozen=True)
class AttackReport:
    eps_grid: tuple
    accuracies: tuple
    model_id: str = ""
    attack: str = "fgsm"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_grid)
        acc = tuple(float(a) for a in self.accuracies)
        if len(eps) != len(acc):
            raise DomainError("eps grid and accuracy lists must have equal length")
        if any(e < 0 for e in eps):
            raise DomainError("attack magnitudes must be nonnegative")
        if any(not 0.0 <= a <= 1.0 for a in acc):
            raise DomainError("accuracies must lie in [0, 1]")
        object.__setattr__(self, "eps_grid", eps)
        object.__setattr__(self, "accuracies", acc)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "accuracy"])
            for e, a in zip(self.eps_grid, self.accuracies):
                w.writerow([repr(e), repr(a)])

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(
                {
                    "model_id": self.model_id,
                    "attack": self.attack,
                    "eps_grid": list(self.eps_grid),
                    "accuracies": list(self.accuracies),
                    "metadata": self.metadata,
                },
                fh,
                indent=2,
            )


def fgsm(model, x, y, eps):
    """Signed-gradient step decreasing the margin: x + eps * sign(-y * grad f)."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if y not in (-1, 1, -1.0, 1.0):
        raise DomainError("y must be +/-1")
    x = np.asarray(x, dtype=float)
    if eps == 0:
        return x.copy()
    return x + eps * np.sign(-y * _gradient(model, x))


def _gradient_batch(model, X):
    """Per-row gradients, n x d; mirrors _gradient."""
    if isinstance(model, QuadraticClassifier):
        a, b = model.coeffs.a, model.coeffs.b
        return 2.0 * a * (X @ model.Q) + b * model.g
    if isinstance(model, TwoLayerNetwork):
        if not model.neurons:
            return np.zeros_like(X)
        U = np.stack([u for u, _ in model.neurons])
        al = np.array([a for _, a in model.neurons])
        pre = X @ U.T
        if model.activation == "relu":
            return ((pre > 0.0) * al) @ U
        a, b = model.activation.a, model.activation.b
        return ((2.0 * a * pre + b) * al) @ U
    raise DomainError(f"unsupported model type {type(model).__name__}")


def robust_accuracy(model, data, eps_grid, model_id="", metadata=None):
    """Accuracy under per-example FGSM at each magnitude in the grid."""
    eps_grid = [float(e) for e in eps_grid]
    if any(e < 0 for e in eps_grid):
        raise DomainError("attack magnitudes must be nonnegative")
    G = _gradient_batch(model, data.X)
    step = np.sign(-data.y[:, None] * G)
    accs = []
    for eps in eps_grid:
        Xp = data.X + eps * step if eps > 0 else data.X
        preds = np.sign(_evaluate(model, Xp))
        accs.append(float(np.mean(preds == data.y)))
    return AttackReport(eps_grid, accs, model_id=model_id, metadata=metadata or {})


def empirical_worst_case(model, x, y, r, p, n_samples, seed):
    """Sampled upper bound on min of y*f over the lp ball of radius r.

    Draws boundary and interior points plus the FGSM corner; the clean point
    itself is always included, so the result never exceeds y*f(x).
    """
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if r < 0:
        raise DomainError("radius must be nonnegative")
    dual_exponent(p)  # validates p
    x = np.asarray(x, dtype=float)
    best = y * _evaluate(model, x)
    if r == 0:
        return float(best)
    rng = np.random.default_rng(seed)
    d = x.size

    # FGSM corner scaled into the ball
    g = np.sign(-y * _gradient(model, x))
    nrm = np.linalg.norm(g, ord=p) if np.any(g) else 0.0
    if nrm > 0:
        best = min(best, y * _evaluate(model, x + (r / nrm) * g))

    # per-sample stream so a larger n_samples with the same seed extends the
    # same point sequence (the minimum can only decrease)
    for k in range(n_samples):
        z = rng.standard_normal(d)
        if p == 2:
            nz = np.linalg.norm(z)
            direction = z / nz if nz > 0 else np.eye(1, d, 0).ravel()
        elif p == np.inf:
            direction = np.sign(z)
            direction[direction == 0] = 1.0
        elif p == 1:
            # extreme points of the l1 ball: signed coordinate vectors
            direction = np.zeros(d)
            j = int(np.argmax(np.abs(z)))
            direction[j] = 1.0 if z[j] >= 0 else -1.0
        else:
            direction = z / np.linalg.norm(z, ord=p)
        # alternate boundary points with uniformly scaled interior points
        u = rng.uniform()
        scale = 1.0 if k % 2 == 0 else u
        val = y * _evaluate(model, x + r * scale * direction)
        if val < best:
            best = val
    return float(best)
