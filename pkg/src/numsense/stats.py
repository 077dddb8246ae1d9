"""Rank tests, t-tests, rank correlation and multiple-comparison corrections.

Small-sample paths use exact enumeration of the null distribution; larger
samples fall back to normal approximations with midrank tie correction and
continuity correction. Crossover sizes are module constants and can be
overridden per call for testing.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import betainc, ndtr

# Largest sample sizes handled by exact enumeration (sub-second runtimes).
WILCOXON_EXACT_MAX_N = 25
MANNWHITNEY_EXACT_MAX_N = 20  # total n_x + n_y


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str
    n: int | tuple
    sidedness: str          # "one" or "two"
    exact: bool
    z: float | None = None  # populated on the normal-approximation path


def _check_alternative(alternative):
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    return "two" if alternative == "two-sided" else "one"


def _midranks(values):
    """Ranks 1..n with ties sharing the average of their rank positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_counts(values):
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return counts[counts > 1]


def wilcoxon_signed_rank(diffs, alternative="two-sided", exact_max_n=WILCOXON_EXACT_MAX_N):
    """Wilcoxon signed-rank test on a sample of paired differences.

    Zero differences are dropped before ranking. For n <= `exact_max_n` the
    p-value is computed from the exact sign-flip null distribution (dynamic
    program over achievable rank sums, valid with midranks); above that a
    normal approximation with tie and continuity correction is used and the
    Z statistic is reported.

    `alternative="greater"` tests for a positive shift of the differences.
    """
    sided = _check_alternative(alternative)
    diffs = np.asarray(diffs, dtype=float)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero")

    ranks = _midranks(np.abs(diffs))
    w_pos = float(np.sum(ranks[diffs > 0]))

    if n <= exact_max_n:
        p_geq, p_leq = _wilcoxon_exact_tails(ranks, w_pos)
        if alternative == "greater":
            p = p_geq
        elif alternative == "less":
            p = p_leq
        else:
            p = min(1.0, 2.0 * min(p_geq, p_leq))
        return TestResult(w_pos, p, "wilcoxon_signed_rank", n, sided, exact=True)

    mean = n * (n + 1) / 4.0
    ties = _tie_counts(np.abs(diffs))
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
    z, p = _normal_tails(w_pos, mean, math.sqrt(var), alternative)
    return TestResult(w_pos, p, "wilcoxon_signed_rank", n, sided, exact=False, z=z)


def _normal_tails(stat, mean, sd, alternative):
    """Continuity-corrected normal tails; two-sided mirrors the exact
    2*min(tails) construction so the two paths agree near p = 1."""
    z_greater = (stat - mean - 0.5) / sd
    z_less = (stat - mean + 0.5) / sd
    if alternative == "greater":
        return z_greater, float(1.0 - ndtr(z_greater))
    if alternative == "less":
        return z_less, float(ndtr(z_less))
    z = (stat - mean - math.copysign(0.5, stat - mean)) / sd
    p = min(1.0, 2.0 * min(1.0 - ndtr(z_greater), ndtr(z_less)))
    return z, float(p)


def _wilcoxon_exact_tails(ranks, w_obs):
    """Exact P(W+ >= w_obs) and P(W+ <= w_obs) under random sign flips.

    Midranks are doubled to integers so the distribution of the positive
    rank sum can be accumulated by dynamic programming; 2^n enumeration is
    never materialized.
    """
    scaled = np.rint(ranks * 2).astype(int)
    total = int(scaled.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    w2 = w_obs * 2
    # tolerate float fuzz when w_obs sits exactly on a lattice point
    idx_geq = int(math.ceil(w2 - 1e-9))
    idx_leq = int(math.floor(w2 + 1e-9))
    p_geq = float(counts[idx_geq:].sum())
    p_leq = float(counts[: idx_leq + 1].sum())
    return p_geq, p_leq


def _mannwhitney_exact_tails(ranks, nx, u_obs):
    """Exact tails of U over all equally likely group assignments.

    counts[k][s] tallies k-subsets of the (doubled) pooled midranks with
    rank sum s; row nx of the table gives the exact U distribution,
    including ties.
    """
    scaled = np.rint(np.asarray(ranks) * 2).astype(int)
    total = int(scaled.sum())
    counts = np.zeros((nx + 1, total + 1))
    counts[0, 0] = 1.0
    for r in scaled:
        counts[1:, r:] += counts[:-1, : total + 1 - r]
    dist = counts[nx]
    dist /= dist.sum()
    # U = R_x - nx(nx+1)/2 with ranks doubled: s = 2*(U + nx(nx+1)/2)
    s_obs = 2.0 * u_obs + nx * (nx + 1)
    idx_leq = int(math.floor(s_obs + 1e-9))
    idx_geq = int(math.ceil(s_obs - 1e-9))
    p_leq = float(dist[: idx_leq + 1].sum())
    p_geq = float(dist[idx_geq:].sum())
    return p_leq, p_geq


def mann_whitney_u(x, y, alternative="two-sided", exact_max_n=MANNWHITNEY_EXACT_MAX_N):
    """Mann-Whitney U test for two independent samples.

    The reported statistic is U for the first sample (number of (x, y)
    pairs with x > y, counting ties as 1/2). Exact p-values enumerate the
    null distribution over all C(n+m, n) group assignments of the pooled
    values when n + m <= `exact_max_n` (via a subset-sum count, so no
    combinatorial blowup); otherwise a tie-corrected normal approximation
    with continuity correction is used. `alternative="less"` tests whether
    x tends to be smaller than y.
    """
    sided = _check_alternative(alternative)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = len(x), len(y)
    if nx == 0 or ny == 0:
        raise ValueError("both samples must be nonempty")

    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u_x = float(np.sum(ranks[:nx])) - nx * (nx + 1) / 2.0

    if nx + ny <= exact_max_n:
        p_leq, p_geq = _mannwhitney_exact_tails(ranks, nx, u_x)
        if alternative == "less":
            p = p_leq
        elif alternative == "greater":
            p = p_geq
        else:
            p = min(1.0, 2.0 * min(p_leq, p_geq))
        return TestResult(u_x, p, "mann_whitney_u", (nx, ny), sided, exact=True)

    mean = nx * ny / 2.0
    n_tot = nx + ny
    ties = _tie_counts(pooled)
    if np.sum(ties) >= n_tot:  # all values identical: U is degenerate at its mean
        return TestResult(u_x, 1.0, "mann_whitney_u", (nx, ny), sided, exact=False, z=0.0)
    tie_term = np.sum(ties ** 3 - ties) / (n_tot * (n_tot - 1.0))
    var = nx * ny / 12.0 * (n_tot + 1.0 - tie_term)
    z, p = _normal_tails(u_x, mean, math.sqrt(var), alternative)
    return TestResult(u_x, p, "mann_whitney_u", (nx, ny), sided, exact=False, z=z)


def t_test(sample, mu0=0.0, mode="one_sample", other=None, alternative="two-sided"):
    """One-sample or paired t-test.

    Paired mode tests the pairwise differences `sample - other` against
    mu0. The p-value comes from the regularized incomplete beta function.
    """
    sided = _check_alternative(alternative)
    x = np.asarray(sample, dtype=float)
    if mode == "paired":
        if other is None:
            raise ValueError("paired mode needs a second sample")
        y = np.asarray(other, dtype=float)
        if len(y) != len(x):
            raise ValueError("paired samples must have equal length")
        x = x - y
    elif mode != "one_sample":
        raise ValueError(f"unknown mode {mode!r}")

    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 observations")
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise ValueError("zero variance sample")
    t = (float(np.mean(x)) - mu0) / (sd / math.sqrt(n))
    dof = n - 1
    p_two = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    if alternative == "two-sided":
        p = p_two
    elif alternative == "greater":
        p = p_two / 2.0 if t > 0 else 1.0 - p_two / 2.0
    else:
        p = p_two / 2.0 if t < 0 else 1.0 - p_two / 2.0
    return TestResult(t, p, f"t_{mode}", n, sided, exact=False)


def sign_test(diffs, alternative="greater"):
    """Exact binomial sign test on paired differences (zeros dropped)."""
    sided = _check_alternative(alternative)
    diffs = np.asarray(diffs, dtype=float)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero")
    k = int(np.sum(diffs > 0))
    tail_geq = sum(math.comb(n, j) for j in range(k, n + 1)) / 2.0 ** n
    tail_leq = sum(math.comb(n, j) for j in range(0, k + 1)) / 2.0 ** n
    if alternative == "greater":
        p = tail_geq
    elif alternative == "less":
        p = tail_leq
    else:
        p = min(1.0, 2.0 * min(tail_geq, tail_leq))
    return TestResult(k, p, "sign_test", n, sided, exact=True)


def kendall_tau_a(x, y, method="auto"):
    """Kendall tau-a: (concordant - discordant) / (n*(n-1)/2).

    Tied pairs in either argument count as neither concordant nor
    discordant but stay in the denominator (tau-a, not tau-b).
    `method="mergesort"` is an O(n log n) path valid only for tie-free
    data; "quadratic" is the all-pairs reference; "auto" picks mergesort
    when neither input has ties.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("samples must have equal length")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 observations")
    n_pairs = n * (n - 1) // 2

    tie_free = len(np.unique(x)) == n and len(np.unique(y)) == n
    if method == "auto":
        method = "mergesort" if tie_free else "quadratic"
    if method == "mergesort":
        if not tie_free:
            raise ValueError("mergesort path requires tie-free data")
        order = np.argsort(x)
        disc = _count_inversions(list(y[order]))
        return (n_pairs - 2 * disc) / n_pairs
    if method != "quadratic":
        raise ValueError(f"unknown method {method!r}")

    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    prod = dx * dy
    iu = np.triu_indices(n, k=1)
    concordant = int(np.sum(prod[iu] > 0))
    discordant = int(np.sum(prod[iu] < 0))
    return (concordant - discordant) / n_pairs


def _count_inversions(seq):
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    left = sorted(left)
    right = sorted(right)
    merged, i, j = [], 0, 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    return inv


def bh_fdr(p_values, q):
    """Benjamini-Hochberg step-up procedure.

    Returns (reject flags in input order, k) where k is the number of
    rejected hypotheses: the largest i with p_(i) <= i*q/m.
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return np.zeros(0, dtype=bool), 0
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    m = p.size
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    below = sorted_p <= (np.arange(1, m + 1) * q / m)
    k = int(np.max(np.nonzero(below)[0])) + 1 if np.any(below) else 0
    flags = np.zeros(m, dtype=bool)
    flags[order[:k]] = True
    return flags, k


def bonferroni(p_values, alpha):
    """Bonferroni correction: reject where p <= alpha / m."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    return p <= alpha / p.size


def cohen_d(x, y):
    """Cohen's d with pooled standard deviation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = len(x), len(y)
    pooled = math.sqrt(((nx - 1) * np.var(x, ddof=1) + (ny - 1) * np.var(y, ddof=1))
                       / (nx + ny - 2))
    return (float(np.mean(x)) - float(np.mean(y))) / pooled


def eta_squared(ss_effect, ss_total):
    """Plain eta squared: effect sum of squares over total."""
    if ss_total <= 0:
        raise ValueError("total sum of squares must be positive")
    return ss_effect / ss_total
