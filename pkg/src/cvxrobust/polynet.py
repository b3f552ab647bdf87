"""Polynomial-activation networks: quadratic-form classifiers, activation
fitting, and the rank-one (neural) decomposition of PSD training blocks."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError


@dataclass(frozen=True)
class ActivationCoeffs:
    """sigma(u) = a*u^2 + b*u + c."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not all(np.isfinite([self.a, self.b, self.c])):
            raise DomainError("activation coefficients must be finite")
        if self.a == 0:
            raise DomainError("quadratic coefficient a must be nonzero")

    def __call__(self, u):
        return self.a * u**2 + self.b * u + self.c


def default_coeffs():
    """Least-squares ReLU fit over [-5, 5], rounded to two decimals."""
    return ActivationCoeffs(0.09, 0.50, 0.47)


def fit_relu_poly(interval=(-5.0, 5.0), grid_points=10001):
    """Least-squares quadratic fit of max(u, 0) on a uniform grid."""
    lo, hi = interval
    if not (lo < 0.0 < hi):
        raise DomainError(f"fit interval must straddle 0, got [{lo}, {hi}]")
    if grid_points < 3:
        raise DomainError("need at least 3 grid points")
    u = np.linspace(lo, hi, grid_points)
    V = np.column_stack([u**2, u, np.ones_like(u)])
    target = np.maximum(u, 0.0)
    coef, _, rank, _ = np.linalg.lstsq(V, target, rcond=None)
    if rank < 3:
        raise NumericalError("degenerate fit grid: normal equations are singular")
    return ActivationCoeffs(*coef)


class QuadraticClassifier:
    """f(x) = a x'Qx + b g'x + c h, the SDP-native network parameterization."""

    def __init__(self, Q, g, h, coeffs=None):
        Q = np.asarray(Q, dtype=float)
        g = np.asarray(g, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DomainError(f"Q must be square, got shape {Q.shape}")
        if g.shape != (Q.shape[0],):
            raise DomainError(f"g has shape {g.shape}, expected ({Q.shape[0]},)")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-9 * max(1.0, np.abs(Q).max(initial=0.0)):
            raise DomainError("Q must be symmetric within 1e-9")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(g)) and np.isfinite(h)):
            raise DomainError("classifier weights must be finite")
        self.Q = 0.5 * (Q + Q.T)
        self.g = g
        self.h = float(h)
        self.coeffs = coeffs or default_coeffs()

    @property
    def dim(self):
        return self.Q.shape[0]

    def to_json_dict(self):
        return {
            "kind": "quadratic_classifier",
            "d": self.dim,
            "Q": self.Q.tolist(),
            "g": self.g.tolist(),
            "h": self.h,
            "coeffs": [self.coeffs.a, self.coeffs.b, self.coeffs.c],
        }

    @classmethod
    def from_json_dict(cls, obj):
        return cls(
            np.array(obj["Q"]), np.array(obj["g"]), obj["h"], ActivationCoeffs(*obj["coeffs"])
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def evaluate(clf, x):
    """Classifier output a x'Qx + b g'x + c h; x may be a vector or n x d batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.dim:
        raise DomainError(f"input dimension {x.shape[-1]} != classifier dimension {clf.dim}")
    a, b, c = clf.coeffs.a, clf.coeffs.b, clf.coeffs.c
    quad = np.einsum("...i,ij,...j->...", x, clf.Q, x)
    return a * quad + b * (x @ clf.g) + c * clf.h


def gradient(clf, x):
    """d f / d x = 2a Qx + b g."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.dim:
        raise DomainError(f"input dimension {x.shape[-1]} != classifier dimension {clf.dim}")
    return 2.0 * clf.coeffs.a * (x @ clf.Q) + clf.coeffs.b * clf.g


class TwoLayerNetwork:
    """Explicit neuron list (u_j, alpha_j); activation either 'relu' or coeffs."""

    def __init__(self, neurons, activation="relu"):
        self.neurons = [(np.asarray(u, dtype=float), float(a)) for u, a in neurons]
        if isinstance(activation, str) and activation != "relu":
            raise DomainError(f"unknown activation {activation!r}")
        self.activation = activation
        if isinstance(activation, ActivationCoeffs):
            for u, _ in self.neurons:
                if abs(np.linalg.norm(u) - 1.0) > 1e-8:
                    raise DomainError("polynomial-activation neurons must have unit norm")

    @property
    def dim(self):
        return self.neurons[0][0].size if self.neurons else None

    def __len__(self):
        return len(self.neurons)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if not self.neurons:
            return np.zeros(x.shape[:-1])
        U = np.stack([u for u, _ in self.neurons])
        al = np.array([a for _, a in self.neurons])
        pre = x @ U.T
        if self.activation == "relu":
            return np.maximum(pre, 0.0) @ al
        return self.activation(pre) @ al

    def to_json_dict(self):
        act = (
            "relu"
            if self.activation == "relu"
            else [self.activation.a, self.activation.b, self.activation.c]
        )
        return {
            "kind": "two_layer_network",
            "d": self.dim,
            "activation": act,
            "neurons": [{"u": u.tolist(), "alpha": a} for u, a in self.neurons],
        }

    @classmethod
    def from_json_dict(cls, obj):
        act = obj["activation"]
        if act != "relu":
            act = ActivationCoeffs(*act)
        return cls([(np.array(n["u"]), n["alpha"]) for n in obj["neurons"]], act)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _balance(col):
    return float(col[:-1] @ col[:-1] - col[-1] ** 2)


def neural_decomposition(Z, trace_tol=1e-6, balance_tol=1e-12):
    """Split a PSD block with tr(Z1) = Z4 into balanced rank-one factors.

    Returns [(u_j, alpha_j)] with unit u_j and alpha_j = s_j^2 >= 0, where the
    factors p_j = (r_j, s_j) satisfy sum p_j p_j' = Z and ||r_j|| = |s_j|.
    Factorization starts from the eigendecomposition; unbalanced column pairs
    with opposite-sign balance ||r||^2 - s^2 are rotated so one of them lands
    exactly on the balance manifold (the rotation quadratic always has a real
    root when the signs differ).
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise DomainError("Z must be square")
    Z = 0.5 * (Z + Z.T)
    scale = max(np.abs(Z).max(initial=0.0), 1.0)
    tr1, z4 = np.trace(Z[:-1, :-1]), Z[-1, -1]
    if abs(tr1 - z4) > trace_tol * scale:
        raise DomainError(
            f"trace coupling violated: tr(Z1)={tr1:.6e} vs Z4={z4:.6e}"
        )
    w, V = np.linalg.eigh(Z)
    keep = w > max(w.max(initial=0.0) * 1e-12, 1e-14 * scale)
    if not np.any(keep):
        return []
    cols = list((V[:, keep] * np.sqrt(w[keep])).T)

    drop_tol = 1e-9 * max(np.trace(Z), 1e-300)
    balanced = []
    while cols:
        bal = [_balance(c) for c in cols]
        tol = balance_tol * scale
        j = int(np.argmax(bal))
        k = int(np.argmin(bal))
        if bal[j] <= tol and bal[k] >= -tol:
            balanced.extend(cols)
            break
        if bal[j] > tol and bal[k] >= -tol:
            # residual positive imbalance of the order of the trace gap
            balanced.extend(cols)
            break
        if bal[k] < -tol and bal[j] <= tol:
            balanced.extend(cols)
            break
        vj, vk = cols[j], cols[k]
        h = float(vj[:-1] @ vk[:-1] - vj[-1] * vk[-1])
        # solve bal_k * t^2 + 2 h t + bal_j = 0 for the rotation parameter
        disc = h * h - bal[k] * bal[j]
        sq = np.sqrt(max(disc, 0.0))
        qterm = -(h + np.copysign(sq, h)) if h != 0 else sq
        if qterm != 0:
            t = bal[j] / qterm
        else:
            t = np.sqrt(-bal[j] / bal[k])
        norm = np.sqrt(1.0 + t * t)
        p = (vj + t * vk) / norm
        q = (-t * vj + vk) / norm
        balanced.append(p)
        cols = [c for i, c in enumerate(cols) if i not in (j, k)]
        cols.append(q)

    neurons = []
    for p in balanced:
        if p @ p <= drop_tol:
            continue
        if p[-1] < 0:
            p = -p
        r, s = p[:-1], p[-1]
        nr = np.linalg.norm(r)
        if nr <= 0:
            continue
        neurons.append((r / nr, s * s))
    return neurons


def classifier_from_neurons(pos_neurons, neg_neurons, coeffs=None, dim=None):
    """Rebuild (Q, g, h) from the two decomposed neuron lists (Z side minus Z' side)."""
    if dim is None:
        if pos_neurons:
            dim = pos_neurons[0][0].size
        elif neg_neurons:
            dim = neg_neurons[0][0].size
        else:
            raise DomainError("cannot infer dimension from empty neuron lists")
    Q = np.zeros((dim, dim))
    g = np.zeros(dim)
    h = 0.0
    for sign, neurons in ((1.0, pos_neurons), (-1.0, neg_neurons)):
        for u, alpha in neurons:
            Q += sign * alpha * np.outer(u, u)
            g += sign * alpha * u
            h += sign * alpha
    return QuadraticClassifier(Q, g, h, coeffs)
