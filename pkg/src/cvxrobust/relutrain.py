"""Convex gated-linear training of two-layer ReLU networks.

The ReLU nonlinearity is replaced by sampled diagonal sign-pattern matrices
with paired weight vectors (v_i, w_i); training minimizes a hinge loss over
robust margins plus group regularization, with the cone constraints enforced
through squared positive-part penalties.  Zero initialization is feasible, so
violations stay negligible throughout training.
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import DomainError, NumericalError
from .polynet import TwoLayerNetwork

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignPatternSet:
    """Distinct ReLU activation indicator vectors on the training rows.

    patterns[i] is the diagonal of D_i as a 0/1 vector of length n.
    """

    patterns: np.ndarray
    seed: int = None
    requested: int = None

    def __post_init__(self):
        pats = np.asarray(self.patterns, dtype=np.uint8)
        if pats.ndim != 2:
            raise DomainError("patterns must be a P x n matrix")
        if not np.all((pats == 0) | (pats == 1)):
            raise DomainError("pattern entries must be 0 or 1")
        if len(np.unique(pats, axis=0)) != pats.shape[0]:
            raise DomainError("patterns must be distinct")
        pats.setflags(write=False)
        object.__setattr__(self, "patterns", pats)

    @property
    def P(self):
        return self.patterns.shape[0]

    @property
    def n(self):
        return self.patterns.shape[1]


def sample_sign_patterns(X, P_target, seed):
    """Draw standard-normal directions u, keep distinct indicator(Xu >= 0)."""
    if P_target < 1:
        raise DomainError("P_target must be at least 1")
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((P_target, X.shape[1]))
    raw = (U @ X.T >= 0).astype(np.uint8)
    _, first = np.unique(raw, axis=0, return_index=True)
    pats = raw[np.sort(first)]
    if pats.shape[0] < P_target:
        log.info("pattern dedup: %d requested, %d distinct", P_target, pats.shape[0])
    return SignPatternSet(pats, seed=seed, requested=P_target)


def dual_exponent(p):
    if p == 1:
        return np.inf
    if p == np.inf or p == float("inf"):
        return 1.0
    if p > 1:
        return p / (p - 1.0)
    raise DomainError(f"invalid norm order p={p}; need 1 <= p <= inf")


def linear_min_over_ball(c, b, r, p):
    """min of c'x + b over the lp ball of radius r: -r ||c||_q + b."""
    if r < 0:
        raise DomainError("ball radius must be nonnegative")
    q = dual_exponent(p)
    return float(-r * np.linalg.norm(np.asarray(c, dtype=float), ord=q) + b)


def _row_norms(M, q):
    return np.linalg.norm(M, ord=q, axis=1) if M.size else np.zeros(M.shape[0])


def _row_norm_subgrad(M, q):
    """Row-wise subgradient of the lq norm, 0 at the origin row."""
    G = np.zeros_like(M)
    if M.size == 0:
        return G
    if q == 2:
        nrm = np.linalg.norm(M, axis=1)
        nz = nrm > 0
        G[nz] = M[nz] / nrm[nz, None]
    elif q == 1:
        G = np.sign(M)
    elif q == np.inf:
        idx = np.argmax(np.abs(M), axis=1)
        rows = np.arange(M.shape[0])
        vals = np.sign(M[rows, idx])
        G[rows, idx] = vals
    else:
        nrm = np.linalg.norm(M, ord=q, axis=1)
        nz = nrm > 0
        G[nz] = np.sign(M[nz]) * (np.abs(M[nz]) / nrm[nz, None]) ** (q - 1.0)
    return G


@dataclass
class PenaltyConfig:
    """Penalty-method schedule: rho continuation outside, and inside each rho
    stage a smoothing continuation (mu_init * mu_decay**k) solved by L-BFGS
    with at most max_epochs iterations per stage."""

    rho: float = 100.0
    max_epochs: int = 2000
    feas_tol: float = 1e-4
    rho_growth: float = 10.0
    rho_max: float = 1e5
    mu_init: float = 1e-1
    mu_decay: float = 1e-2
    mu_stages: int = 3

    def __post_init__(self):
        if self.rho <= 0:
            raise DomainError("penalty weight rho must be positive")
        if not 0 < self.mu_decay < 1 or self.mu_init <= 0 or self.mu_stages < 1:
            raise DomainError("smoothing schedule must have mu_init > 0, 0 < mu_decay < 1, mu_stages >= 1")


@dataclass
class GatedLinearModel:
    V: np.ndarray
    W: np.ndarray
    patterns: SignPatternSet
    p: float
    r: float
    beta: float
    objective_trace: list = field(default_factory=list)
    residual: float = 0.0
    feasible: bool = True

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.V.shape != self.W.shape or self.V.shape[0] != self.patterns.P:
            raise DomainError("weight shapes must be P x d and match the pattern set")
        if not (np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.W))):
            raise DomainError("weights must be finite")

    @property
    def q(self):
        return dual_exponent(self.p)

    @property
    def d(self):
        return self.V.shape[1]

    def theta(self, k=None):
        """Effective linear weights on training row k (or the n x d stack)."""
        S = self.patterns.patterns.T.astype(float)
        U = self.V - self.W
        return S @ U if k is None else S[k] @ U

    def to_json_dict(self):
        return {
            "kind": "gated_linear_model",
            "d": self.d,
            "p": "inf" if self.p == np.inf else self.p,
            "r": self.r,
            "beta": self.beta,
            "residual": self.residual,
            "feasible": self.feasible,
            "seed": self.patterns.seed,
            "patterns": ["".join(map(str, row)) for row in self.patterns.patterns],
            "V": self.V.tolist(),
            "W": self.W.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj):
        pats = np.array([[int(ch) for ch in row] for row in obj["patterns"]], dtype=np.uint8)
        p = np.inf if obj["p"] == "inf" else float(obj["p"])
        return cls(
            np.array(obj["V"]),
            np.array(obj["W"]),
            SignPatternSet(pats, seed=obj.get("seed")),
            p,
            obj["r"],
            obj["beta"],
            residual=obj.get("residual", 0.0),
            feasible=obj.get("feasible", True),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def objective_terms(V, W, X, y, S, beta, r, p, rho):
    """All pieces of the penalized objective; S is the n x P indicator matrix."""
    q = dual_exponent(p)
    theta = S @ (V - W)
    margins = y * np.einsum("kd,kd->k", X, theta) - r * _row_norms(theta, q)
    hinge = float(np.mean(np.maximum(1.0 - margins, 0.0)))
    reg = 0.5 * beta * float(np.linalg.norm(V, axis=1).sum() + np.linalg.norm(W, axis=1).sum())
    signs = 2.0 * S - 1.0
    cv = np.maximum(r * _row_norms(V, q)[None, :] - (X @ V.T) * signs, 0.0)
    cw = np.maximum(r * _row_norms(W, q)[None, :] - (X @ W.T) * signs, 0.0)
    penalty = rho * float((cv**2).sum() + (cw**2).sum())
    viol = float(max(cv.max(initial=0.0), cw.max(initial=0.0)))
    return {
        "objective": hinge + reg + penalty,
        "hinge": hinge,
        "regularizer": reg,
        "penalty": penalty,
        "max_violation": viol,
    }


def _gradients(V, W, X, y, S, beta, r, p, rho):
    n = X.shape[0]
    q = dual_exponent(p)
    theta = S @ (V - W)
    margins = y * np.einsum("kd,kd->k", X, theta) - r * _row_norms(theta, q)
    active = (1.0 - margins) > 0.0  # subgradient convention: (0)_+' = 0
    Gq = _row_norm_subgrad(theta, q)
    dtheta = (active / n)[:, None] * (-y[:, None] * X + r * Gq)
    dU = S.T @ dtheta
    dV = dU.copy()
    dW = -dU

    for M, dM in ((V, dV), (W, dW)):
        nrm = np.linalg.norm(M, axis=1)
        nz = nrm > 0
        dM[nz] += 0.5 * beta * M[nz] / nrm[nz, None]

    signs = 2.0 * S - 1.0
    for M, dM in ((V, dV), (W, dW)):
        c = np.maximum(r * _row_norms(M, q)[None, :] - (X @ M.T) * signs, 0.0)
        colsum = c.sum(axis=0)
        dM += 2.0 * rho * (colsum[:, None] * r * _row_norm_subgrad(M, q) - (c * signs).T @ X)
    return dV, dW


def _smooth_row_norms(M, q, mu):
    """Smoothed lq row norms and their row-wise gradients (C^infty in M)."""
    if q == 2:
        s = np.sqrt((M**2).sum(axis=1) + mu * mu)
        return s - mu, M / s[:, None]
    if q == 1:
        s = np.sqrt(M**2 + mu * mu)
        return (s - mu).sum(axis=1), M / s
    if q == np.inf:
        Z = np.concatenate([M, -M], axis=1) / mu
        lse = logsumexp(Z, axis=1)
        val = mu * lse - mu * np.log(2 * M.shape[1])
        soft = np.exp(Z - lse[:, None])
        d = M.shape[1]
        return np.maximum(val, 0.0), soft[:, :d] - soft[:, d:]
    s = M**2 + mu * mu
    inner = (s ** (q / 2.0)).sum(axis=1)
    f = inner ** (1.0 / q)
    G = (inner ** (1.0 / q - 1.0))[:, None] * (s ** (q / 2.0 - 1.0)) * M
    return f - mu * M.shape[1] ** (1.0 / q), G


def _smooth_pos(t, mu):
    """Moreau envelope of max(t, 0) and its derivative (error <= mu/2)."""
    v = np.where(t <= 0.0, 0.0, np.where(t < mu, t * t / (2.0 * mu), t - 0.5 * mu))
    return v, np.clip(t / mu, 0.0, 1.0)


def _smoothed_value_grad(z, X, y, S, beta, r, p, rho, mu, P, d):
    """Smoothed penalized objective and gradient as a flat-vector function."""
    n = X.shape[0]
    q = dual_exponent(p)
    V = z[: P * d].reshape(P, d)
    W = z[P * d :].reshape(P, d)
    theta = S @ (V - W)
    tn, tng = _smooth_row_norms(theta, q, mu)
    margins = y * np.einsum("kd,kd->k", X, theta) - r * tn
    hv, hg = _smooth_pos(1.0 - margins, mu)
    dtheta = (hg / n)[:, None] * (-y[:, None] * X + r * tng)
    dU = S.T @ dtheta
    dV = dU.copy()
    dW = -dU
    total = float(hv.mean())

    signs = 2.0 * S - 1.0
    for M, dM in ((V, dV), (W, dW)):
        nv2, ng2 = _smooth_row_norms(M, 2, mu)
        total += 0.5 * beta * float(nv2.sum())
        dM += 0.5 * beta * ng2
        # squared positive part is already C^1, so only the norm is smoothed
        nvq, ngq = _smooth_row_norms(M, q, mu)
        c = np.maximum(r * nvq[None, :] - (X @ M.T) * signs, 0.0)
        total += rho * float((c**2).sum())
        colsum = c.sum(axis=0)
        dM += 2.0 * rho * (colsum[:, None] * r * ngq - (c * signs).T @ X)
    return total, np.concatenate([dV.ravel(), dW.ravel()])


def train_convex_relu(X, y, patterns, beta, r=0.0, p=1.0, cfg=None):
    """Penalty-method training from the feasible zero start.

    Each rho stage minimizes a smoothed penalized objective by L-BFGS over a
    decreasing smoothing schedule; rho is escalated until the gate-constraint
    residual falls below cfg.feas_tol or rho_max is reached.  Returns a
    GatedLinearModel carrying the objective trace and the final constraint
    residual; the model is flagged infeasible (never silently accepted) when
    the residual exceeds cfg.feas_tol.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise DomainError("X and y row counts differ")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +/-1")
    if patterns.P == 0:
        raise DomainError("pattern set is empty")
    if patterns.n != X.shape[0]:
        raise DomainError("pattern length must equal the number of training rows")
    dual_exponent(p)  # validate
    cfg = cfg or PenaltyConfig()
    S = patterns.patterns.T.astype(float)
    P, d = patterns.P, X.shape[1]
    z = np.zeros(2 * P * d)
    rho = cfg.rho
    epoch = 0
    trace = [{"epoch": 0, "rho": rho, **objective_terms(
        np.zeros((P, d)), np.zeros((P, d)), X, y, S, beta, r, p, rho)}]

    while True:
        for stage in range(cfg.mu_stages):
            mu = cfg.mu_init * cfg.mu_decay**stage
            res = minimize(
                _smoothed_value_grad,
                z,
                args=(X, y, S, beta, r, p, rho, mu, P, d),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": cfg.max_epochs, "ftol": 1e-18, "gtol": 1e-12},
            )
            if not math.isfinite(res.fun):
                err = NumericalError(f"objective diverged at rho={rho:g}, mu={mu:g}")
                err.last_iterate = (
                    z[: P * d].reshape(P, d).copy(),
                    z[P * d :].reshape(P, d).copy(),
                )
                raise err
            z = res.x
            epoch += max(int(res.nit), 1)
            V = z[: P * d].reshape(P, d)
            W = z[P * d :].reshape(P, d)
            trace.append({"epoch": epoch, "rho": rho,
                          **objective_terms(V, W, X, y, S, beta, r, p, rho)})
        if trace[-1]["max_violation"] <= cfg.feas_tol:
            break
        if rho * cfg.rho_growth > cfg.rho_max:
            break
        rho *= cfg.rho_growth
        log.info("penalty escalation: rho -> %g at epoch %d", rho, epoch)

    V = z[: P * d].reshape(P, d)
    W = z[P * d :].reshape(P, d)
    final = objective_terms(V, W, X, y, S, beta, r, p, rho)
    residual = final["max_violation"]
    feasible = residual <= cfg.feas_tol
    if not feasible:
        log.warning("final constraint residual %.3e exceeds tolerance %.1e", residual, cfg.feas_tol)
    return GatedLinearModel(
        V, W, patterns, p, r, beta, objective_trace=trace, residual=residual, feasible=feasible
    )


def worst_case_output(model, x_k, y_k, k):
    """Closed-form worst case of y * (gated output) over the lp ball at row k."""
    if not 0 <= k < model.patterns.n:
        raise DomainError(f"row index {k} out of range [0, {model.patterns.n})")
    theta_k = model.theta(k)
    x_k = np.asarray(x_k, dtype=float)
    if x_k.shape != (model.d,):
        raise DomainError("x_k dimension mismatch")
    return linear_min_over_ball(y_k * theta_k, y_k * float(x_k @ theta_k), model.r, model.p)


def recover_weights(model, prune_rel=1e-6):
    """Explicit ReLU neurons: v -> (v/sqrt(||v||), sqrt(||v||)), w with negated
    second layer; weights below prune_rel of the largest norm produce no neuron."""
    if not model.feasible:
        log.warning("recovering weights from a model flagged infeasible")
    norms_v = np.linalg.norm(model.V, axis=1)
    norms_w = np.linalg.norm(model.W, axis=1)
    cutoff = prune_rel * max(norms_v.max(initial=0.0), norms_w.max(initial=0.0))
    neurons = []
    for M, norms, sign in ((model.V, norms_v, 1.0), (model.W, norms_w, -1.0)):
        for i in range(model.patterns.P):
            if norms[i] > cutoff and norms[i] > 0:
                root = math.sqrt(norms[i])
                neurons.append((M[i] / root, sign * root))
    return TwoLayerNetwork(neurons, activation="relu")


def relu_forward(net, x):
    """sum_j (u_j'x)_+ alpha_j for a recovered ReLU network."""
    if net.activation != "relu":
        raise DomainError("relu_forward requires a relu-activation network")
    x = np.asarray(x, dtype=float)
    if net.neurons and x.shape[-1] != net.dim:
        raise DomainError(f"input dimension {x.shape[-1]} != network dimension {net.dim}")
    return net.forward(x)
