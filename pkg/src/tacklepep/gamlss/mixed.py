"""Distributional mixed model with three random-intercept groupings.

The mean of record ``i`` is ``x_i' beta + T[t(i)] + B[b(i)] + O[o(i)]``
(identity link). The response follows a normal, TF, or SST family whose
``sigma``, ``nu`` and ``tau`` are constants. Random intercepts are
ridge-penalized coefficients with penalty ``1 / var_g`` per grouping.

Estimation maximizes the Laplace-approximate marginal log-likelihood

    M = l(gamma) - 1/2 gamma' P gamma - 1/2 sum_j log(1 + c * lambda_j)

where ``gamma = (beta, u)`` is the penalized ML estimate, ``c`` is the
(constant) Fisher information for the mean, and ``lambda_j`` are the
eigenvalues of ``D Z'WZ D`` with ``D = diag(sqrt(var_g))``. ``gamma`` is
found by Fisher scoring; the log variances and the family shape are
updated jointly by L-BFGS-B with ``gamma`` profiled out. Rounds repeat
until ``M`` improves by less than ``tol`` or ``max_iter`` rounds have run.
Only steps that increase ``M`` are accepted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, optimize

from tacklepep.gamlss.families import get_family

logger = logging.getLogger(__name__)

GROUPS = (("tackler", "tackler_id"), ("ball_carrier", "ball_carrier_id"), ("off_team", "off_team_id"))
BINARY_COVARIATES = ("short_yardage", "fourth_down", "fourth_quarter", "turnover")
FACTOR_COVARIATES = ("tackler_position", "pass_result", "ball_carrier_position")
LOG_VAR_BOUNDS = (math.log(1e-10), math.log(1e4))
TAU_MAX = 1e6
# precision on fixed effects; keeps H definite when a resample leaves an
# indicator column without support (that coefficient then sits at 0)
FIXED_RIDGE = 1e-8


class NonConvergence(RuntimeError):
    """Raised on request when a fit stops before meeting the tolerance."""


# -- design ------------------------------------------------------------------

@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    x_names: list
    group_names: list
    group_index: list  # per grouping: int codes (n,)
    group_levels: list  # per grouping: level labels
    reference: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def q(self) -> list:
        return [len(lv) for lv in self.group_levels]

    def A(self) -> np.ndarray:
        """Dense [X | Z_1 | Z_2 | Z_3]."""
        blocks = [self.X]
        for idx, lv in zip(self.group_index, self.group_levels):
            Z = np.zeros((self.n, len(lv)))
            Z[np.arange(self.n), idx] = 1.0
            blocks.append(Z)
        return np.hstack(blocks)


def _factor_levels(values, reference=None):
    vals = pd.Series(values).fillna("").astype(str)
    counts = vals.value_counts()
    # most frequent level is the reference; ties broken by label
    if reference is None:
        ordered = sorted(counts.index, key=lambda v: (-counts[v], v))
        reference = ordered[0]
    levels = sorted(v for v in counts.index if v != reference)
    return vals, reference, levels


def build_design(records: pd.DataFrame, response: str = "pep", reference: dict | None = None,
                 covariates=BINARY_COVARIATES + FACTOR_COVARIATES, groups=GROUPS) -> Design:
    """Fixed-effect matrix and random-effect codes for a record table.

    Factors are reference-coded against their most frequent level (or the
    level given in ``reference``). Indicator columns that are constant in
    the data are dropped; the remaining design must have full column rank.
    """
    reference = dict(reference or {})
    n = len(records)
    cols, names = [np.ones(n)], ["(Intercept)"]
    used_ref = {}
    for c in covariates:
        if c not in records.columns:
            continue
        if c in BINARY_COVARIATES:
            v = records[c].astype(float).to_numpy()
            if np.ptp(v) > 0:
                cols.append(v)
                names.append(c)
        else:
            vals, ref, levels = _factor_levels(records[c], reference.get(c))
            used_ref[c] = ref
            for lv in levels:
                v = (vals == lv).to_numpy(dtype=float)
                if v.any() and not v.all():
                    cols.append(v)
                    names.append(f"{c}[{lv}]")
    X = np.column_stack(cols)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ValueError(f"fixed-effect design is rank deficient ({rank} < {X.shape[1]})")
    g_names, g_idx, g_levels = [], [], []
    for gname, col in groups:
        codes, uniques = pd.factorize(records[col].astype(str), sort=True)
        if len(uniques) < 2:
            raise ValueError(f"grouping {gname!r} needs at least 2 levels, got {len(uniques)}")
        g_names.append(gname)
        g_idx.append(codes.astype(np.int64))
        g_levels.append(list(uniques))
    return Design(records[response].to_numpy(dtype=float), X, names, g_names, g_idx,
                  g_levels, used_ref)


# -- fit result ------------------------------------------------------------

@dataclass
class MixedModelFit:
    family: str
    beta: pd.Series
    beta_se: pd.Series
    effects: dict  # grouping name -> pd.Series of intercepts indexed by level label
    variances: dict
    sigma: float
    nu: float
    tau: float
    converged: bool
    n_iter: int
    objective: float
    penalized_loglik: float
    loglik: float
    history: list
    reference: dict
    group_means: dict = field(default_factory=dict)

    @property
    def T(self) -> pd.Series:
        return self.effects["tackler"]

    @property
    def B(self) -> pd.Series:
        return self.effects["ball_carrier"]

    @property
    def O(self) -> pd.Series:
        return self.effects["off_team"]

    def shape(self) -> dict:
        return {"sigma": self.sigma, "nu": self.nu, "tau": self.tau}

    def fitted_mean(self, records: pd.DataFrame) -> np.ndarray:
        """x'beta + T + B + O; unseen levels contribute their group mean (0)."""
        X = _align_design(records, self)
        eta = X @ self.beta.to_numpy()
        for gname, col in GROUPS:
            eff = self.effects[gname]
            eta = eta + records[col].astype(str).map(eff).fillna(self.group_means.get(gname, 0.0)).to_numpy()
        return eta

    def to_report(self) -> dict:
        return {
            "family": self.family, "converged": self.converged, "n_iter": self.n_iter,
            "objective": self.objective, "penalized_loglik": self.penalized_loglik,
            "loglik": self.loglik,
            "beta": {k: float(v) for k, v in self.beta.items()},
            "beta_se": {k: float(v) for k, v in self.beta_se.items()},
            "variances": {k: float(v) for k, v in self.variances.items()},
            "group_means": {k: float(v) for k, v in self.group_means.items()},
            "sigma": self.sigma, "nu": self.nu,
            "tau": None if math.isinf(self.tau) else self.tau,
            "reference_levels": self.reference, "history": self.history,
        }


def _align_design(records, fit):
    """Fixed-effect matrix for ``records`` in the fit's column order."""
    n = len(records)
    cols = []
    for name in fit.beta.index:
        if name == "(Intercept)":
            cols.append(np.ones(n))
        elif "[" in name:
            c, lv = name[:-1].split("[", 1)
            cols.append((records[c].fillna("").astype(str) == lv).to_numpy(dtype=float))
        else:
            cols.append(records[name].astype(float).to_numpy())
    return np.column_stack(cols)


# -- engine ------------------------------------------------------------------

class _Engine:
    def __init__(self, design: Design, family, weights=None):
        self.d = design
        self.fam = family
        self.A = design.A()
        self.w = np.ones(design.n) if weights is None else np.asarray(weights, dtype=float)
        self.p = design.X.shape[1]
        self.q = design.q
        self.G = self.A.T @ (self.A * self.w[:, None])
        self.Guu = self.G[self.p:, self.p:]
        self.slices = []
        start = self.p
        for qg in self.q:
            self.slices.append(slice(start, start + qg))
            start += qg
        self.y = design.y

    def pdiag(self, variances):
        P = np.full(self.A.shape[1], FIXED_RIDGE)
        for sl, v in zip(self.slices, variances):
            P[sl] = 1.0 / v
        return P

    def loglik(self, gamma, shape):
        eta = self.A @ gamma
        return float(np.dot(self.w, self.fam.logpdf(self.y, eta, *shape)))

    def pen_loglik(self, gamma, shape, P):
        return self.loglik(gamma, shape) - 0.5 * float(np.dot(P * gamma, gamma))

    def inner(self, gamma, variances, shape, max_iter=200, tol=1e-11):
        """Penalized ML for gamma by Fisher scoring with step halving."""
        P = self.pdiag(variances)
        c = self.fam.fisher_mu(*shape)
        H = c * self.G + np.diag(P)
        cf = linalg.cho_factor(H, lower=False, check_finite=False)
        cur = self.pen_loglik(gamma, shape, P)
        for _ in range(max_iter):
            eta = self.A @ gamma
            score = self.fam.score_mu(self.y, eta, *shape)
            grad = self.A.T @ (self.w * score) - P * gamma
            delta = linalg.cho_solve(cf, grad, check_finite=False)
            step = 1.0
            while True:
                cand = gamma + step * delta
                val = self.pen_loglik(cand, shape, P)
                if val >= cur or step < 1e-8:
                    break
                step *= 0.5
            if val < cur:
                break
            gain = val - cur
            gamma, cur = cand, val
            if gain <= tol * max(1.0, abs(cur)) and np.max(np.abs(step * delta)) < 1e-8:
                break
        return gamma, cur, cf

    def logdet_terms(self, variances, c):
        """sum log(1 + c lambda_j) and per-grouping tr(H_uu^-1)."""
        dsd = np.concatenate([np.full(qg, math.sqrt(v)) for qg, v in zip(self.q, variances)])
        S = self.Guu * dsd[:, None] * dsd[None, :]
        lam, V = linalg.eigh(S, check_finite=False)
        lam = np.clip(lam, 0.0, None)
        ld = float(np.sum(np.log1p(c * lam)))
        diag = (dsd ** 2) * np.sum(V * V / (1.0 + c * lam)[None, :], axis=1)
        traces, start = [], 0
        for qg in self.q:
            traces.append(float(diag[start:start + qg].sum()))
            start += qg
        return ld, traces, lam

    def objective(self, gamma, variances, shape):
        """(M, penalized loglik, gamma) after solving the inner problem."""
        gamma, pl, _ = self.inner(gamma, variances, shape)
        ld, _, _ = self.logdet_terms(variances, self.fam.fisher_mu(*shape))
        return pl - 0.5 * ld, pl, gamma


def _shape_to_vec(family, shape):
    sigma, nu, tau = shape
    if family.name == "normal":
        return np.array([math.log(sigma)])
    t = math.log(min(tau, TAU_MAX) - 2.0)
    if family.name == "TF":
        return np.array([math.log(sigma), t])
    return np.array([math.log(sigma), math.log(nu), t])


def _vec_to_shape(family, v):
    if family.name == "normal":
        return (math.exp(v[0]), 1.0, math.inf)
    if family.name == "TF":
        return (math.exp(v[0]), 1.0, 2.0 + math.exp(v[1]))
    return (math.exp(v[0]), math.exp(v[1]), 2.0 + math.exp(v[2]))


def _shape_bounds(family, sd0):
    b = [(math.log(sd0) - 7.0, math.log(sd0) + 3.0)]
    if family.name == "SST":
        b.append((math.log(0.05), math.log(20.0)))
    if family.name in ("TF", "SST"):
        b.append((math.log(0.05), math.log(TAU_MAX)))
    return b


def fit_gamlss(records: pd.DataFrame | None = None, family: str = "SST", design: Design | None = None,
               weights=None, init: MixedModelFit | dict | None = None, tol: float = 1e-8,
               max_iter: int = 500, fixed_variances=None, fixed_shape=None,
               nest: bool = True, raise_on_failure: bool = False) -> MixedModelFit:
    """Fit the mixed model to PEP records.

    Parameters
    ----------
    records : DataFrame
        PEP records (``pep`` plus covariates and grouping ids).
    family : {"normal", "TF", "SST"}
    design : Design, optional
        Prebuilt design; overrides ``records``.
    weights : array, optional
        Observation weights (a record with weight k counts as k copies).
    init : MixedModelFit or dict, optional
        Warm start (``gamma``/``variances``/``shape`` or a previous fit).
    fixed_variances, fixed_shape : sequence, optional
        Hold the group variances (tackler, ball carrier, offense) or the
        family shape ``(sigma, nu, tau)`` at the given values.
    nest : bool
        For TF and SST, fit the smaller families first and warm-start from
        them, keeping whichever candidate has the larger objective. This
        guarantees ``SST >= TF >= normal`` for the maximized objective.
    """
    d = design if design is not None else build_design(records)
    fam = get_family(family)
    if nest and family in ("TF", "SST") and init is None and fixed_shape is None:
        parent = fit_gamlss(family="normal" if family == "TF" else "TF", design=d, weights=weights,
                            tol=tol, max_iter=max_iter, fixed_variances=fixed_variances,
                            nest=True)
        sig, nu, tau = parent.sigma, 1.0, parent.tau
        warm = {"gamma": _fit_gamma(parent), "variances": _fit_vars(parent),
                "shape": (sig, nu, 10.0 if math.isinf(tau) else tau)}
        child = fit_gamlss(family=family, design=d, weights=weights, init=warm, tol=tol,
                           max_iter=max_iter, fixed_variances=fixed_variances, nest=False)
        # the parent embeds in the child family (nu = 1, tau = inf)
        if parent.objective > child.objective:
            logger.info("%s fit did not improve on %s; using the embedded %s solution",
                        family, parent.family, parent.family)
            parent.family = family
            parent.history = child.history + [{"step": "embedded", "objective": parent.objective}]
            return parent
        return child

    eng = _Engine(d, fam, weights)
    ng = len(d.q)
    if init is None:
        w = eng.w
        Xw = d.X * np.sqrt(w)[:, None]
        beta = np.linalg.lstsq(Xw, d.y * np.sqrt(w), rcond=None)[0]
        resid = d.y - d.X @ beta
        sd = math.sqrt(max(np.average(resid ** 2, weights=w), 1e-12))
        gamma = np.concatenate([beta, np.zeros(sum(d.q))])
        variances = [0.1 * sd * sd] * ng
        shape = (sd, 1.0, 10.0) if fam.name != "normal" else (sd, 1.0, math.inf)
    else:
        if isinstance(init, MixedModelFit):
            init = {"gamma": _fit_gamma(init), "variances": _fit_vars(init),
                    "shape": (init.sigma, init.nu, init.tau)}
        gamma = np.array(init["gamma"], dtype=float)
        variances = list(init["variances"])
        sigma, nu, tau = init["shape"]
        shape = (sigma, nu if fam.name == "SST" else 1.0,
                 math.inf if fam.name == "normal" else (10.0 if math.isinf(tau) else min(tau, TAU_MAX)))
    if fixed_variances is not None:
        variances = [float(v) for v in fixed_variances]
    if fixed_shape is not None:
        shape = tuple(float(v) for v in fixed_shape)
    variances = [float(np.clip(v, math.exp(LOG_VAR_BOUNDS[0]), math.exp(LOG_VAR_BOUNDS[1])))
                 for v in variances]

    M, pl, gamma = eng.objective(gamma, variances, shape)
    history = [{"step": "init", "objective": M}]
    converged = False
    it = 0
    free_var = fixed_variances is None
    free_shape = fixed_shape is None
    n_sh = len(_shape_to_vec(fam, shape)) if free_shape else 0
    sd0 = max(float(np.sqrt(np.average((d.y - d.y.mean()) ** 2, weights=eng.w))), 1e-8)
    bounds = ([LOG_VAR_BOUNDS] * ng if free_var else []) + (_shape_bounds(fam, sd0) if free_shape else [])
    cache = {"gamma": gamma}

    def unpack(v):
        var = list(np.exp(v[:ng])) if free_var else variances
        sh = _vec_to_shape(fam, v[len(v) - n_sh:]) if free_shape else shape
        return var, sh

    def f(v):
        var, sh = unpack(v)
        try:
            gm, plv, _ = eng.inner(cache["gamma"], var, sh)
        except linalg.LinAlgError:
            # numerically singular system: report a very poor point
            return abs(M) * 10.0 + 1e6, np.zeros(len(v))
        cache["gamma"] = gm
        c = fam.fisher_mu(*sh)
        ld, traces, lam = eng.logdet_terms(var, c)
        grad = []
        if free_var:
            grad += [0.5 * ((float(gm[sl] @ gm[sl]) + tr) / vv - qg)
                     for sl, tr, vv, qg in zip(eng.slices, traces, var, eng.q)]
        if free_shape:
            # envelope: gamma stays at its optimum, only the explicit shape terms move
            eta = eng.A @ gm
            v_sh = np.asarray(v[len(v) - n_sh:], dtype=float)

            def explicit(u):
                s2 = _vec_to_shape(fam, u)
                return (float(np.dot(eng.w, fam.logpdf(eng.y, eta, *s2)))
                        - 0.5 * float(np.sum(np.log1p(fam.fisher_mu(*s2) * lam))))
            for k in range(n_sh):
                h = 1e-6
                up, dn = v_sh.copy(), v_sh.copy()
                up[k] += h
                dn[k] -= h
                grad.append((explicit(up) - explicit(dn)) / (2 * h))
        return -(plv - 0.5 * ld), -np.array(grad)

    v = np.concatenate([np.log(variances) if free_var else [],
                        _shape_to_vec(fam, shape) if free_shape else []])
    for it in range(1, max_iter + 1):
        if not (free_var or free_shape):
            converged = True
            break
        M_start = M
        cache["gamma"] = gamma
        res = optimize.minimize(f, v, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-9})
        var_new, sh_new = unpack(res.x)
        M_new, pl_new, g_new = eng.objective(cache["gamma"], var_new, sh_new)
        if M_new > M:
            variances, shape, gamma, M, pl, v = var_new, sh_new, g_new, M_new, pl_new, res.x
        history.append({"step": it, "objective": M})
        if M - M_start < tol:
            converged = True
            break
    if not converged:
        logger.warning("%s fit stopped after %d iterations without meeting tol %.1e", fam.name, it, tol)
        if raise_on_failure:
            raise NonConvergence(f"{fam.name} fit did not converge in {max_iter} iterations")
    return _package(eng, d, fam, gamma, variances, shape, M, pl, converged, it, history)


def _package(eng, d, fam, gamma, variances, shape, M, pl, converged, it, history):
    P = eng.pdiag(variances)
    c = fam.fisher_mu(*shape)
    H = c * eng.G + np.diag(P)
    Hinv_bb = linalg.cho_solve(linalg.cho_factor(H), np.eye(H.shape[0])[:, :eng.p])[:eng.p]
    se = np.sqrt(np.clip(np.diag(Hinv_bb), 0.0, None))
    beta = pd.Series(gamma[:eng.p], index=d.x_names)
    effects = {g: pd.Series(gamma[sl], index=lv)
               for g, sl, lv in zip(d.group_names, eng.slices, d.group_levels)}
    return MixedModelFit(
        family=fam.name, beta=beta, beta_se=pd.Series(se, index=d.x_names), effects=effects,
        variances=dict(zip(d.group_names, (float(v) for v in variances))),
        sigma=float(shape[0]), nu=float(shape[1]), tau=float(shape[2]),
        converged=bool(converged), n_iter=int(it), objective=float(M),
        penalized_loglik=float(pl), loglik=eng.loglik(gamma, shape), history=history,
        reference=d.reference, group_means={g: 0.0 for g in d.group_names})


def _fit_gamma(fit: MixedModelFit) -> np.ndarray:
    return np.concatenate([fit.beta.to_numpy()] + [fit.effects[g].to_numpy() for g in fit.effects])


def _fit_vars(fit: MixedModelFit) -> list:
    return [fit.variances[g] for g in fit.effects]
