"""Psychometric GLM for two-alternative numerosity comparison.

The probability of choosing the right-hand stimulus is a lapse-adjusted
probit in the log2 ratios of the three stimulus dimensions:

    p = (1 - gamma) * (Phi(z) - 1/2) + 1/2
    z = b_side + b_num*log2(r_num) + b_size*log2(r_size) + b_spacing*log2(r_spacing)

with Phi the standard normal CDF and gamma a fixed guessing rate. Fitting
is maximum likelihood by damped Fisher scoring with analytic gradients.
"""

import csv
from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.special import ndtr

from .readout import ChoiceRecord

PRESENTATION_MS = 250.0      # stimulus duration; faster human responses are outliers
DEFAULT_GAMMA = 0.01
RATIO_NAMES = ("num", "size", "spacing")
# difficulty bins on min(r_num, 1/r_num), open-ended at both extremes
DIFFICULTY_EDGES = (0.6, 0.7, 0.8)

TRIAL_COLUMNS = ["trial_id", "r_num", "r_size", "r_spacing", "choice", "rt_ms"]


@dataclass
class GlmFit:
    beta_side: float
    beta_num: float
    beta_size: float
    beta_spacing: float
    gamma: float
    log_likelihood: float
    pseudo_r2_adjusted: float
    chi_square_lr: float
    chi_square_dof: int
    n_trials: int
    converged: bool
    n_iter: int
    unidentifiable: tuple = ()

    @property
    def betas(self):
        return (self.beta_side, self.beta_num, self.beta_size, self.beta_spacing)


@dataclass
class IngestResult:
    records: list
    n_read: int
    n_dropped_fast: int
    n_dropped_slow: int


def _coef_tuple(coefficients):
    if isinstance(coefficients, GlmFit):
        return coefficients.betas
    coefficients = tuple(float(b) for b in coefficients)
    if len(coefficients) != 4:
        raise ValueError("expected (beta_side, beta_num, beta_size, beta_spacing)")
    return coefficients


def predict_choice_prob(coefficients, r_num, r_size, r_spacing, gamma=DEFAULT_GAMMA):
    """Probability of choosing the right stimulus. Vectorized over ratios."""
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    b_side, b_num, b_size, b_spacing = _coef_tuple(coefficients)
    r_num = np.asarray(r_num, dtype=float)
    r_size = np.asarray(r_size, dtype=float)
    r_spacing = np.asarray(r_spacing, dtype=float)
    for name, r in zip(RATIO_NAMES, (r_num, r_size, r_spacing)):
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError(f"r_{name} must be positive and finite")
    z = (b_side + b_num * np.log2(r_num) + b_size * np.log2(r_size)
         + b_spacing * np.log2(r_spacing))
    p = gamma / 2.0 + (1.0 - gamma) * ndtr(z)
    # keep p strictly inside (gamma/2, 1 - gamma/2) when Phi saturates
    p = np.clip(p, gamma / 2.0 + 1e-12, 1.0 - gamma / 2.0 - 1e-12)
    return float(p) if p.ndim == 0 else p


def _design(records):
    x = np.ones((len(records), 4))
    y = np.empty(len(records))
    for i, rec in enumerate(records):
        for r in (rec.r_num, rec.r_size, rec.r_spacing):
            if not (r > 0 and math.isfinite(r)):
                raise ValueError(f"record {i}: ratios must be positive and finite")
        x[i, 1] = math.log2(rec.r_num)
        x[i, 2] = math.log2(rec.r_size)
        x[i, 3] = math.log2(rec.r_spacing)
        y[i] = 1.0 if rec.choice == "right" else 0.0
    return x, y


def _log_likelihood(beta, x, y, gamma):
    z = x @ beta
    p = gamma / 2.0 + (1.0 - gamma) * ndtr(z)
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _log_likelihood_grad(beta, x, y, gamma):
    """Analytic gradient of the Bernoulli log-likelihood in beta."""
    z = x @ beta
    p = gamma / 2.0 + (1.0 - gamma) * ndtr(z)
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    weight = (y - p) * (1.0 - gamma) * phi / (p * (1.0 - p))
    return x.T @ weight


def _fit_ml(x, y, gamma, max_iter, grad_tol):
    """Damped Fisher scoring on the exact likelihood; beta starts at zero."""
    n_par = x.shape[1]
    beta = np.zeros(n_par)
    ll = _log_likelihood(beta, x, y, gamma)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = x @ beta
        p = gamma / 2.0 + (1.0 - gamma) * ndtr(z)
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        dpdz = (1.0 - gamma) * phi
        grad = x.T @ ((y - p) * dpdz / (p * (1.0 - p)))
        if np.max(np.abs(grad)) < grad_tol:
            converged = True
            break
        info = (x * (dpdz ** 2 / (p * (1.0 - p)))[:, None]).T @ x
        info += 1e-10 * np.eye(n_par)
        step = np.linalg.solve(info, grad)
        # halve the step until the likelihood improves
        scale = 1.0
        for _ in range(60):
            ll_new = _log_likelihood(beta + scale * step, x, y, gamma)
            if ll_new >= ll:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = ll_new
    return beta, ll, converged, it


def fit_glm(records, gamma=DEFAULT_GAMMA, gamma_grid=None, max_iter=500, grad_tol=1e-8):
    """Maximum-likelihood GLM fit to a list of choice records.

    gamma is held fixed during optimization; passing `gamma_grid` instead
    searches the grid for the gamma minimizing deviance and reports the
    winning fit. Regressors with fewer than two distinct values are
    flagged unidentifiable and their coefficient pinned at zero. The
    fit also reports adjusted McFadden pseudo-R^2 and the likelihood-ratio
    chi-square against the side-bias-only null.
    """
    records = list(records)
    if len(records) < 50:
        raise ValueError(f"need at least 50 records to fit, got {len(records)}")
    if gamma_grid is not None:
        fits = [fit_glm(records, gamma=g, max_iter=max_iter, grad_tol=grad_tol)
                for g in gamma_grid]
        return max(fits, key=lambda f: f.log_likelihood)
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")

    x, y = _design(records)
    dead = [i for i in range(1, 4) if len(np.unique(x[:, i])) < 2]
    live = [0] + [i for i in range(1, 4) if i not in dead]
    beta_live, ll, converged, n_iter = _fit_ml(x[:, live], y, gamma, max_iter, grad_tol)

    beta = np.zeros(4)
    beta[live] = beta_live
    if np.max(np.abs(beta)) > 50:
        warnings.warn("fitted |beta| exceeds 50; data may be separable", stacklevel=2)

    beta_null, ll_null, _, _ = _fit_ml(x[:, [0]], y, gamma, max_iter, grad_tol)
    k = len(live)
    pseudo_r2 = 1.0 - (ll - k) / ll_null if ll_null != 0 else float("nan")
    chi2 = max(0.0, 2.0 * (ll - ll_null))

    return GlmFit(
        beta_side=float(beta[0]),
        beta_num=float(beta[1]),
        beta_size=float(beta[2]),
        beta_spacing=float(beta[3]),
        gamma=gamma,
        log_likelihood=ll,
        pseudo_r2_adjusted=pseudo_r2,
        chi_square_lr=chi2,
        chi_square_dof=len(live) - 1,
        n_trials=len(records),
        converged=converged,
        n_iter=n_iter,
        unidentifiable=tuple(RATIO_NAMES[i - 1] for i in dead),
    )


def weber_fraction(fit_or_beta) -> float:
    """Internal Weber fraction w = 1 / (sqrt(2) * beta_num)."""
    beta_num = fit_or_beta.beta_num if isinstance(fit_or_beta, GlmFit) else float(fit_or_beta)
    if beta_num <= 0:
        raise ValueError(f"beta_num must be positive, got {beta_num}")
    return 1.0 / (math.sqrt(2.0) * beta_num)


def difficulty_bin(r_num):
    """Index of the numerosity-ratio difficulty bracket of a trial."""
    ratio = min(r_num, 1.0 / r_num)
    bin_idx = 0
    for edge in DIFFICULTY_EDGES:
        if ratio >= edge:
            bin_idx += 1
    return bin_idx


def ingest_trials(csv_path, protocol) -> IngestResult:
    """Read a trial CSV and apply the outlier rules of the given protocol.

    Schema: trial_id,r_num,r_size,r_spacing,choice,rt_ms (rt_ms empty for
    model data). For protocol="human" two rules apply in order: drop trials
    with rt below the stimulus presentation time, then drop trials whose rt
    exceeds mean + 2 sd of the remaining trials in the same numerosity-ratio
    difficulty bracket. protocol="model" ingests everything.
    """
    if protocol not in ("human", "model"):
        raise ValueError(f"protocol must be 'human' or 'model', got {protocol!r}")
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRIAL_COLUMNS:
            raise ValueError(f"bad header {header}, expected {TRIAL_COLUMNS}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(TRIAL_COLUMNS):
                raise ValueError(f"row {line_no}: expected {len(TRIAL_COLUMNS)} fields")
            try:
                r_num, r_size, r_spacing = (float(row[1]), float(row[2]), float(row[3]))
                rt = float(row[5]) if row[5] != "" else None
            except ValueError as exc:
                raise ValueError(f"row {line_no}: {exc}") from None
            choice = row[4]
            if choice not in ("left", "right"):
                raise ValueError(f"row {line_no}: choice must be left/right, got {choice!r}")
            if protocol == "human" and rt is None:
                raise ValueError(f"row {line_no}: human protocol requires rt_ms")
            log_r = math.log2(r_num) if r_num > 0 else 0.0
            correct = (choice == "right") == (log_r > 0) and log_r != 0.0
            rows.append(ChoiceRecord(r_num=r_num, r_size=r_size, r_spacing=r_spacing,
                                     choice=choice, correct=correct, rt=rt))

    n_read = len(rows)
    if protocol == "model":
        return IngestResult(rows, n_read, 0, 0)

    kept = [r for r in rows if r.rt >= PRESENTATION_MS]
    n_fast = n_read - len(kept)

    by_bin = {}
    for rec in kept:
        by_bin.setdefault(difficulty_bin(rec.r_num), []).append(rec)
    records = []
    n_slow = 0
    for recs in by_bin.values():
        rts = np.array([r.rt for r in recs])
        cutoff = rts.mean() + 2.0 * rts.std(ddof=0)
        for rec in recs:
            if rec.rt > cutoff:
                n_slow += 1
            else:
                records.append(rec)
    return IngestResult(records, n_read, n_fast, n_slow)
