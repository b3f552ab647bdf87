"""SDP training for polynomial-activation networks.

Three cone programs are assembled and lowered to the standard form solved by
``cvxrobust.conic``: hinge-loss training over the coupled PSD block pair,
its adversarially robust variant (one multiplier LMI per training example),
and the two-variable decision-boundary-distance program.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conic import ProgramBuilder, SolverSettings, smat, solve, svec, svec_len
from .conic.cones import project_psd, triu_indices
from .errors import DomainError, SolverError
from .polynet import QuadraticClassifier, default_coeffs, evaluate
from .quadball import worst_case_margin

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclass
class SdpBlocks:
    """The coupled PSD pair (Z, Z'); Q, g, h are their block differences."""

    Z: np.ndarray
    Zp: np.ndarray

    @property
    def Z1(self):
        return self.Z[:-1, :-1]

    @property
    def Z2(self):
        return self.Z[:-1, -1]

    @property
    def Z4(self):
        return self.Z[-1, -1]

    @property
    def Z1p(self):
        return self.Zp[:-1, :-1]

    @property
    def Z2p(self):
        return self.Zp[:-1, -1]

    @property
    def Z4p(self):
        return self.Zp[-1, -1]

    @property
    def Q(self):
        return self.Z1 - self.Z1p

    @property
    def g(self):
        return self.Z2 - self.Z2p

    @property
    def h(self):
        return self.Z4 - self.Z4p


@dataclass
class RobustCertificate:
    """Per-example S-procedure multipliers and certified margins at radius r."""

    lam: np.ndarray
    delta: np.ndarray
    r: float


@dataclass
class TrainConfig:
    beta: float
    r: float = 0.0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError("regularization weight beta must be positive")


def _svec_index(side):
    """Map (i, j) with i <= j to the svec position for a matrix of this side."""
    def idx(i, j):
        return i * side - i * (i - 1) // 2 + (j - i)

    return idx


def _svec_outer_rows(X):
    """Row-stack of svec(x_i x_i') for every data row."""
    n, d = X.shape
    iu, ju = triu_indices(d)
    S = X[:, iu] * X[:, ju]
    S[:, iu != ju] *= SQRT2
    return S


def _add_block_structure(b, d, beta):
    """Variables Q, g, h, Z, Z' with coupling equalities, traces, PSD and
    regularization; shared by the standard and robust builders."""
    Ld, L1 = svec_len(d), svec_len(d + 1)
    Qv = b.add_var("Q", Ld)
    gv = b.add_var("g", d)
    hv = b.add_var("h", 1)
    Zv = b.add_var("Z", L1)
    Zpv = b.add_var("Zp", L1)
    idx1 = _svec_index(d + 1)
    iu, ju = triu_indices(d)
    z_sub = np.array([idx1(i, j) for i, j in zip(iu, ju)])
    # Q = Z1 - Z1'
    rows = np.arange(Ld)
    b.add_eq_rows(
        np.concatenate([rows, rows, rows]),
        np.concatenate([Qv, Zv[z_sub], Zpv[z_sub]]),
        np.concatenate([np.ones(Ld), -np.ones(Ld), np.ones(Ld)]),
        np.zeros(Ld),
    )
    # g = Z2 - Z2'  (column entries carry the svec sqrt(2) factor)
    col = np.array([idx1(k, d) for k in range(d)])
    rows = np.arange(d)
    b.add_eq_rows(
        np.concatenate([rows, rows, rows]),
        np.concatenate([gv, Zv[col], Zpv[col]]),
        np.concatenate([np.ones(d), np.full(d, -1 / SQRT2), np.full(d, 1 / SQRT2)]),
        np.zeros(d),
    )
    last = L1 - 1
    b.add_eq([hv[0], Zv[last], Zpv[last]], [1.0, -1.0, 1.0], 0.0)
    diag = np.array([idx1(k, k) for k in range(d)])
    for Mv in (Zv, Zpv):
        b.add_eq(
            np.concatenate([Mv[diag], [Mv[last]]]),
            np.concatenate([np.ones(d), [-1.0]]),
            0.0,
        )
    for Mv in (Zv, Zpv):
        b.add_psd_block(d + 1, np.arange(L1), Mv, np.ones(L1), np.zeros(L1))
    b.add_objective([Zv[last], Zpv[last]], [beta, beta])
    return Qv, gv, hv


def build_standard_sdp(data, beta, coeffs=None):
    """Hinge-loss training program: (1/n) sum t_i + beta (Z4 + Z4')."""
    if data.n == 0 or data.d == 0:
        raise DomainError("dataset must have at least one row and one feature")
    coeffs = coeffs or default_coeffs()
    a, bb, c = coeffs.a, coeffs.b, coeffs.c
    n, d = data.n, data.d
    b = ProgramBuilder()
    Qv, gv, hv = _add_block_structure(b, d, beta)
    tv = b.add_var("t", n)
    b.add_objective(tv, np.full(n, 1.0 / n))
    rows = np.arange(n)
    b.add_nonneg_rows(rows, tv, np.ones(n), np.zeros(n))
    # t_i >= 1 - y_i yhat_i  with  yhat_i = a <svecQ, svec(x x')> + b g'x + c h
    SX = _svec_outer_rows(data.X)
    Ld = SX.shape[1]
    y = data.y
    r_q = np.repeat(rows, Ld)
    c_q = np.tile(Qv, n)
    v_q = (a * SX * y[:, None]).ravel()
    r_g = np.repeat(rows, d)
    c_g = np.tile(gv, n)
    v_g = (bb * data.X * y[:, None]).ravel()
    b.add_nonneg_rows(
        np.concatenate([r_q, r_g, rows, rows]),
        np.concatenate([c_q, c_g, np.full(n, hv[0]), tv]),
        np.concatenate([v_q, v_g, c * y, np.ones(n)]),
        np.full(n, -1.0),
    )
    prog = b.build()
    prog.meta = {"kind": "poly_standard", "beta": beta, "coeffs": coeffs, "X": data.X, "y": y}
    return prog


@dataclass
class LmiStencil:
    """COO entries of one multiplier LMI, affine in (Q, g, h, delta, lam).

    Q coefficients address svec(Q); rows address svec positions of the
    (d+1)-sided constraint matrix.
    """

    side: int
    q_rows: np.ndarray
    q_idx: np.ndarray
    q_vals: np.ndarray
    g_rows: np.ndarray
    g_idx: np.ndarray
    g_vals: np.ndarray
    h_rows: np.ndarray
    h_vals: np.ndarray
    delta_rows: np.ndarray
    delta_vals: np.ndarray
    lam_rows: np.ndarray
    lam_vals: np.ndarray
    const: np.ndarray

    def assemble(self, Q, g, h, delta, lam):
        """Dense constraint matrix at given values (for checks and tests)."""
        vec = self.const.copy()
        np.add.at(vec, self.q_rows, self.q_vals * svec(Q)[self.q_idx])
        np.add.at(vec, self.g_rows, self.g_vals * np.asarray(g)[self.g_idx])
        np.add.at(vec, self.h_rows, self.h_vals * h)
        np.add.at(vec, self.delta_rows, self.delta_vals * delta)
        np.add.at(vec, self.lam_rows, self.lam_vals * lam)
        return smat(vec)


def s_procedure_lmi(r, x, y, coeffs=None):
    """The (d+1)-sided LMI certifying margin delta over the radius-r l2 ball.

    lam * diag(I, -r^2) + y * [[aQ, b g/2 + a Q x], [., a x'Qx + b g'x + c h]]
    - diag(0, ..., 0, delta)  >= 0,
    the S-procedure form of:  ||Delta||_2 <= r  implies  y f(x + Delta) >= delta.
    """
    if r <= 0:
        raise DomainError("robust radius r must be positive")
    x = np.asarray(x, dtype=float)
    d = x.size
    coeffs = coeffs or default_coeffs()
    a, bb, c = coeffs.a, coeffs.b, coeffs.c
    idx1 = _svec_index(d + 1)
    idxd = _svec_index(d)
    iu, ju = triu_indices(d)
    L1 = svec_len(d + 1)
    last = L1 - 1

    q_rows, q_idx, q_vals = [], [], []
    # top-left block: y a Q (svec scalings cancel entrywise)
    q_rows.append(np.array([idx1(i, j) for i, j in zip(iu, ju)]))
    q_idx.append(np.array([idxd(i, j) for i, j in zip(iu, ju)]))
    q_vals.append(np.full(iu.size, y * a))
    # last column: sqrt(2) * y * (b g_k / 2 + a (Qx)_k)
    for k in range(d):
        row = idx1(k, d)
        cols = np.empty(d, dtype=np.int64)
        vals = np.empty(d)
        for l in range(d):
            if l == k:
                cols[l] = idxd(k, k)
                vals[l] = y * a * SQRT2 * x[k]
            else:
                cols[l] = idxd(min(k, l), max(k, l))
                vals[l] = y * a * x[l]
        q_rows.append(np.full(d, row))
        q_idx.append(cols)
        q_vals.append(vals)
    # corner: -y a x'Qx
    sxx = svec(np.outer(x, x))
    q_rows.append(np.full(sxx.size, last))
    q_idx.append(np.arange(sxx.size))
    q_vals.append(y * a * sxx)

    g_rows = np.concatenate([np.array([idx1(k, d) for k in range(d)]), np.full(d, last)])
    g_idx = np.concatenate([np.arange(d), np.arange(d)])
    g_vals = np.concatenate([np.full(d, y * bb / SQRT2), y * bb * x])

    diag = np.array([idx1(k, k) for k in range(d)])
    return LmiStencil(
        side=d + 1,
        q_rows=np.concatenate(q_rows),
        q_idx=np.concatenate(q_idx),
        q_vals=np.concatenate(q_vals),
        g_rows=g_rows,
        g_idx=g_idx,
        g_vals=g_vals,
        h_rows=np.array([last]),
        h_vals=np.array([y * c]),
        delta_rows=np.array([last]),
        delta_vals=np.array([-1.0]),
        lam_rows=np.concatenate([diag, [last]]),
        lam_vals=np.concatenate([np.ones(d), [-r * r]]),
        const=np.zeros(L1),
    )


def build_robust_sdp(data, beta, r, coeffs=None):
    """Adversarial training program: hinge over certified margins delta_i."""
    if r <= 0:
        raise DomainError("robust radius must be positive; use build_standard_sdp for r=0")
    if data.n == 0 or data.d == 0:
        raise DomainError("dataset must have at least one row and one feature")
    coeffs = coeffs or default_coeffs()
    n, d = data.n, data.d
    b = ProgramBuilder()
    Qv, gv, hv = _add_block_structure(b, d, beta)
    tv = b.add_var("t", n)
    dv = b.add_var("delta", n)
    lv = b.add_var("lam", n)
    b.add_objective(tv, np.full(n, 1.0 / n))
    rows = np.arange(n)
    b.add_nonneg_rows(rows, tv, np.ones(n), np.zeros(n))
    # t_i + delta_i - 1 >= 0
    b.add_nonneg_rows(
        np.concatenate([rows, rows]),
        np.concatenate([tv, dv]),
        np.ones(2 * n),
        np.full(n, -1.0),
    )
    b.add_nonneg_rows(rows, lv, np.ones(n), np.zeros(n))
    for i in range(n):
        st = s_procedure_lmi(r, data.X[i], data.y[i], coeffs)
        b.add_psd_block(
            st.side,
            np.concatenate([st.q_rows, st.g_rows, st.h_rows, st.delta_rows, st.lam_rows]),
            np.concatenate(
                [Qv[st.q_idx], gv[st.g_idx], [hv[0]], [dv[i]], np.full(st.lam_rows.size, lv[i])]
            ),
            np.concatenate([st.q_vals, st.g_vals, st.h_vals, st.delta_vals, st.lam_vals]),
            st.const,
        )
    prog = b.build()
    prog.meta = {
        "kind": "poly_robust",
        "beta": beta,
        "r": r,
        "coeffs": coeffs,
        "X": data.X,
        "y": data.y,
    }
    return prog


def _repair_psd_block(M):
    """Project onto the PSD cone, then restore tr(Z1) = Z4 by scaling the
    last coordinate (a congruence, so positive semidefiniteness is kept)."""
    M = project_psd(M)
    tr1 = np.trace(M[:-1, :-1])
    z4 = M[-1, -1]
    scale = max(tr1, z4, 1e-12)
    if z4 <= 1e-12 * scale:
        M[:-1, -1] = 0.0
        M[-1, :-1] = 0.0
        M[-1, -1] = tr1
        return M
    kappa = math.sqrt(tr1 / z4)
    M[:-1, -1] *= kappa
    M[-1, :-1] *= kappa
    M[-1, -1] = tr1
    return M


def extract_classifier(sol, prog, tol=None):
    """Recover (classifier, blocks, certificates) from a solved program.

    Blocks are PSD-projected and trace-rescaled so the SdpBlocks invariants
    hold exactly; certified margins are clipped to the exact ball worst case
    so certificates remain sound at solver tolerance.
    """
    meta = getattr(prog, "meta", {})
    tol = tol if tol is not None else 1e-6
    if sol.status != "optimal":
        worst = max(sol.primal_residual, sol.dual_residual, sol.duality_gap)
        if sol.status == "max_iters" and worst <= 10 * tol:
            log.warning(
                "extracting from max_iters solution (worst residual %.2e)", worst
            )
        else:
            raise SolverError(
                f"cannot extract from status={sol.status} "
                f"(residuals p={sol.primal_residual:.2e} d={sol.dual_residual:.2e} "
                f"gap={sol.duality_gap:.2e})",
                solution=sol,
            )
    Z = _repair_psd_block(smat(prog.extract(sol.x, "Z")))
    Zp = _repair_psd_block(smat(prog.extract(sol.x, "Zp")))
    blocks = SdpBlocks(Z, Zp)
    coeffs = meta.get("coeffs") or default_coeffs()
    clf = QuadraticClassifier(blocks.Q, blocks.g, blocks.h, coeffs)
    cert = None
    if "delta" in prog.variable_map:
        delta = prog.extract(sol.x, "delta").copy()
        lam = prog.extract(sol.x, "lam").copy()
        r = meta["r"]
        X, y = meta["X"], meta["y"]
        exact = np.array(
            [worst_case_margin(clf, X[i], y[i], r) for i in range(X.shape[0])]
        )
        cert = RobustCertificate(lam=lam, delta=np.minimum(delta, exact), r=r)
    return clf, blocks, cert


def decision_distance(clf, x, y, settings=None, n_probes=100, probe_seed=0):
    """l2 distance from a correctly classified x to the decision boundary.

    Solves the two-variable SDP  max s  s.t.  lam >= 0 and the boundary LMI;
    returns sqrt(s*).  If the classifier never changes sign the program is
    unbounded and +inf is returned with a diagnostic.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (clf.dim,):
        raise DomainError("x dimension mismatch")
    fx = evaluate(clf, x)
    if np.sign(fx) != y:
        raise DomainError(
            f"x is not correctly classified (f(x)={fx:.3e}, y={y}); distance undefined"
        )
    # cheap probe for the both-signs assumption; the SDP's unbounded status is
    # the authoritative detection
    rng = np.random.default_rng(probe_seed)
    probes = rng.standard_normal((n_probes, clf.dim)) * (np.linalg.norm(x) + 1.0)
    signs = np.sign(evaluate(clf, probes))
    if np.all(signs == y):
        log.warning("no sign change found on %d probes; distance may be unbounded", n_probes)

    a, bb, c = clf.coeffs.a, clf.coeffs.b, clf.coeffs.c
    d = clf.dim
    Mf = np.zeros((d + 1, d + 1))
    Mf[:d, :d] = a * clf.Q
    Mf[:d, d] = 0.5 * bb * clf.g
    Mf[d, :d] = 0.5 * bb * clf.g
    Mf[d, d] = c * clf.h
    C = np.zeros((d + 1, d + 1))
    C[:d, :d] = np.eye(d)
    C[:d, d] = -x
    C[d, :d] = -x
    C[d, d] = x @ x

    b = ProgramBuilder()
    sv = b.add_var("s", 1)
    lv = b.add_var("lam", 1)
    b.add_objective(sv, [-1.0])
    b.add_nonneg(lv, [1.0], 0.0)
    L1 = svec_len(d + 1)
    svec_mf = y * svec(Mf)
    b.add_psd_block(
        d + 1,
        np.concatenate([np.arange(L1), [L1 - 1]]),
        np.concatenate([np.full(L1, lv[0]), sv]),
        np.concatenate([svec_mf, [-1.0]]),
        svec(C),
    )
    sol = solve(b.build(), settings or SolverSettings())
    if sol.status == "unbounded":
        log.warning("distance SDP unbounded: classifier appears single-signed near x")
        return float("inf")
    if sol.status not in ("optimal", "max_iters"):
        raise SolverError(f"distance SDP failed with status={sol.status}", solution=sol)
    return math.sqrt(max(float(sol.x[0]), 0.0))


def decision_distances(clf, X, y, settings=None, max_workers=None):
    """Per-example distances (parallel map); NaN marks misclassified rows."""
    X = np.asarray(X, dtype=float)
    correct = np.sign(evaluate(clf, X)) == y

    def one(i):
        if not correct[i]:
            return float("nan")
        return decision_distance(clf, X[i], y[i], settings)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        out = list(pool.map(one, range(X.shape[0])))
    return np.array(out), correct


def hinge_loss(clf, X, y):
    return float(np.mean(np.maximum(1.0 - y * evaluate(clf, X), 0.0)))


def train(data, config):
    """Build, solve, extract; robust when config.r > 0. Returns a result dict."""
    if config.r > 0:
        prog = build_robust_sdp(data, config.beta, config.r)
    else:
        prog = build_standard_sdp(data, config.beta)
    sol = solve(prog, config.solver)
    clf, blocks, cert = extract_classifier(sol, prog, tol=config.solver.tol)
    if cert is not None:
        hinge = float(np.mean(np.maximum(1.0 - cert.delta, 0.0)))
    else:
        hinge = hinge_loss(clf, data.X, data.y)
    report = {
        "beta": config.beta,
        "r": config.r,
        "status": sol.status,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "duality_gap": sol.duality_gap,
        "objective": sol.objective,
        "hinge_loss": hinge,
    }
    if cert is not None:
        report["delta_mean"] = float(cert.delta.mean())
        report["delta_min"] = float(cert.delta.min())
        report["delta_max"] = float(cert.delta.max())
        report["lam_min"] = float(cert.lam.min())
    return {"classifier": clf, "blocks": blocks, "certificate": cert, "solution": sol,
            "program": prog, "report": report}
