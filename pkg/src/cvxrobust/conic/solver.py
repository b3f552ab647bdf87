"""First-order conic solver: operator splitting on the homogeneous self-dual embedding.

One (I + Q) linear solve plus one cone projection per iteration; the linear
system is reduced to a dense Cholesky factorization of I + A'A computed once.
Diagonal (Ruiz) preconditioning keeps PSD blocks uniformly scaled so the cone
geometry is preserved.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import DomainError, NumericalError
from .cones import project_dual_cone, svec_len


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-6
    max_iters: int = 200_000
    scaling: bool = True
    alpha: float = 1.5  # over-relaxation
    check_interval: int = 25
    infeas_tol: float = 1e-7
    ruiz_passes: int = 10
    # adaptive primal/dual rebalancing: when one residual lags the other by
    # more than rebalance_band at a rebalance_interval checkpoint, the cost
    # scaling is adjusted and the iterate remapped in place
    rebalance_interval: int = 500
    rebalance_band: float = 5.0


@dataclass
class ConicSolution:
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    status: str  # optimal | infeasible | unbounded | max_iters
    primal_residual: float
    dual_residual: float
    duality_gap: float
    objective: float
    iterations: int
    info: dict = field(default_factory=dict)


def _row_group_scale(norms, cones):
    """Replace PSD-block row norms by a congruence fit d_ij = 1/(e_i e_j)^2.

    Scaling svec rows by e_i * e_j equals the congruence E M E with
    E = diag(e), which maps the PSD cone onto itself — so unlike arbitrary
    per-row scaling it is admissible inside a PSD block, and unlike a single
    uniform block scale it can equalize e.g. a heavy corner row against the
    rest.  e solves the least squares  log e_i + log e_j = -log n_ij  in
    closed form.
    """
    out = norms.copy()
    pos = cones.zero_dim + cones.nonneg_dim
    for s in cones.psd_blocks:
        ln = svec_len(s)
        n = norms[pos : pos + ln].copy()
        # rows with no matrix entries carry no information for the fit;
        # fill them with the geometric mean of the observed rows so they
        # neither skew the fit nor trip the global small-norm clamp later
        seen = n > 1e-10
        if not seen.any():
            out[pos : pos + ln] = 1.0
            pos += ln
            continue
        n[~seen] = np.exp(np.log(n[seen]).mean())
        iu, ju = np.triu_indices(s)
        nu = np.zeros((s, s))
        nu[iu, ju] = np.log(n)
        nu[ju, iu] = nu[iu, ju]
        row_sums = nu.sum(axis=1)
        total = row_sums.sum()
        eps = (-row_sums + total / (2.0 * s)) / s
        eps = np.clip(eps, -10.0, 10.0)
        # out holds the quantity whose inverse square root becomes the row
        # scale, so out_ij = exp(-2 (eps_i + eps_j)) gives d_ij = e_i e_j
        out[pos : pos + ln] = np.exp(-2.0 * (eps[iu] + eps[ju]))
        pos += ln
    return out


def _equilibrate(A, b, c, cones, passes):
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    As = A.copy()
    for _ in range(passes):
        absA = abs(As)
        rn = np.asarray(absA.max(axis=1).todense()).ravel()
        rn = _row_group_scale(rn, cones)
        rn[rn < 1e-12] = 1.0
        d = 1.0 / np.sqrt(rn)
        cn = np.asarray(absA.max(axis=0).todense()).ravel()
        cn[cn < 1e-12] = 1.0
        e = 1.0 / np.sqrt(cn)
        As = sp.diags(d) @ As @ sp.diags(e)
        D *= d
        E *= e
    # balance rhs and cost against the equilibrated matrix
    sq = As.copy()
    sq.data = sq.data**2
    col_norms = np.sqrt(np.asarray(sq.sum(axis=0)).ravel())
    row_norms = np.sqrt(np.asarray(sq.sum(axis=1)).ravel())
    bs = D * b
    cs = E * c
    sc_b = max(col_norms.mean(), 1e-12) / max(np.linalg.norm(bs), 1e-6)
    sc_c = max(row_norms.mean(), 1e-12) / max(np.linalg.norm(cs), 1e-6)
    return As.tocsc(), sc_b * bs, sc_c * cs, D, E, sc_b, sc_c


def solve(prog, settings=None):
    """Solve a ConicProgram; deterministic for fixed (program, settings)."""
    settings = settings or SolverSettings()
    A, b, c, cones = prog.A, prog.b, prog.c, prog.cones
    m, n = A.shape
    if m == 0 or n == 0:
        raise DomainError("empty program")

    if settings.scaling:
        As, bs, cs, D, E, sc_b, sc_c = _equilibrate(A, b, c, cones, settings.ruiz_passes)
    else:
        As, bs, cs = A.tocsc(), b.copy(), c.copy()
        D, E, sc_b, sc_c = np.ones(m), np.ones(n), 1.0, 1.0

    AsT = As.T.tocsc()
    gram = (AsT @ As).toarray()
    gram[np.diag_indices_from(gram)] += 1.0
    try:
        chol = sla.cho_factor(gram, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalError("factorization of I + A'A failed") from exc

    def linsolve(hx, hy):
        x = sla.cho_solve(chol, hx - AsT @ hy, check_finite=False)
        return x, hy + As @ x

    q_x, q_y = linsolve(cs, bs)
    denom = 1.0 + cs @ q_x + bs @ q_y

    AT = A.T.tocsr()
    norm_b = np.linalg.norm(b)
    norm_c = np.linalg.norm(c)

    u_x = np.zeros(n)
    u_y = np.zeros(m)
    u_tau = 1.0
    v_y = np.zeros(m)
    v_kappa = 1.0
    alpha = settings.alpha

    def unscaled(u_x, u_y, v_y, tau):
        x = E * u_x / (sc_b * tau)
        y = D * u_y / (sc_c * tau)
        s = v_y / (D * sc_b * tau)
        return x, y, s

    def residuals(x, y, s):
        pres = np.linalg.norm(A @ x + s - b) / (1.0 + norm_b)
        dres = np.linalg.norm(AT @ y + c) / (1.0 + norm_c)
        pobj = c @ x
        dobj = -(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return pres, dres, gap, pobj

    status = "max_iters"
    it = 0
    pres = dres = gap = np.inf
    for it in range(1, settings.max_iters + 1):
        w_x = u_x
        w_y = u_y + v_y
        w_tau = u_tau + v_kappa
        p_x, p_y = linsolve(w_x, w_y)
        tau_t = (w_tau + cs @ p_x + bs @ p_y) / denom
        ut_x = p_x - tau_t * q_x
        ut_y = p_y - tau_t * q_y
        # over-relaxation
        r_x = alpha * ut_x + (1 - alpha) * u_x
        r_y = alpha * ut_y + (1 - alpha) * u_y
        r_tau = alpha * tau_t + (1 - alpha) * u_tau
        u_x = r_x
        u_y = project_dual_cone(r_y - v_y, cones)
        new_tau = max(r_tau - v_kappa, 0.0)
        v_y = v_y - r_y + u_y
        v_kappa = v_kappa - r_tau + new_tau
        u_tau = new_tau

        if it % settings.check_interval != 0 and it != settings.max_iters:
            continue
        if u_tau > 1e-12 * max(v_kappa, 1.0):
            x, y, s = unscaled(u_x, u_y, v_y, u_tau)
            pres, dres, gap, pobj = residuals(x, y, s)
            if max(pres, dres, gap) <= settings.tol:
                status = "optimal"
                break
            if (
                settings.rebalance_interval
                and it % settings.rebalance_interval == 0
                and it < settings.max_iters
                and np.isfinite(pres)
                and np.isfinite(dres)
                and pres > 0
                and dres > 0
            ):
                ratio = dres / pres
                if ratio > settings.rebalance_band or ratio < 1.0 / settings.rebalance_band:
                    factor = float(np.clip(np.sqrt(ratio), 0.1, 10.0))
                    # re-weight the cost: y (hence u_y) carries the factor,
                    # while x and the primal slack are untouched
                    cs = cs * factor
                    sc_c *= factor
                    u_y *= factor
                    q_x, q_y = linsolve(cs, bs)
                    denom = 1.0 + cs @ q_x + bs @ q_y
        # certificate checks (conservative thresholds)
        y_c = D * u_y / sc_c
        bty = b @ y_c
        if bty < 0 and np.linalg.norm(AT @ y_c) * norm_b <= -settings.infeas_tol * bty:
            status = "infeasible"
            break
        x_c = E * u_x / sc_b
        s_c = v_y / (D * sc_b)
        ctx = c @ x_c
        if ctx < 0 and np.linalg.norm(A @ x_c + s_c) * norm_c <= -settings.infeas_tol * ctx:
            status = "unbounded"
            break

    if status in ("infeasible", "unbounded"):
        scale = abs(b @ y_c) if status == "infeasible" else abs(c @ x_c)
        cert = y_c / scale if status == "infeasible" else x_c / scale
        return ConicSolution(
            x=cert if status == "unbounded" else np.full(n, np.nan),
            z=cert if status == "infeasible" else np.full(m, np.nan),
            s=np.full(m, np.nan),
            status=status,
            primal_residual=np.inf,
            dual_residual=np.inf,
            duality_gap=np.inf,
            objective=np.inf if status == "infeasible" else -np.inf,
            iterations=it,
            info={"certificate": cert},
        )

    if u_tau <= 1e-12:
        x = np.full(n, np.nan)
        y = np.full(m, np.nan)
        s = np.full(m, np.nan)
        pobj = np.nan
        pres = dres = gap = np.inf
    else:
        x, y, s = unscaled(u_x, u_y, v_y, u_tau)
        pres, dres, gap, pobj = residuals(x, y, s)
    return ConicSolution(
        x=x,
        z=y,
        s=s,
        status=status,
        primal_residual=float(pres),
        dual_residual=float(dres),
        duality_gap=float(gap),
        objective=float(pobj),
        iterations=it,
        info={},
    )
