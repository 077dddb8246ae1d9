"""Representational similarity analysis over the 27-condition stimulus set.

Model RDMs hold 1 - Pearson dissimilarities between condition-averaged
deepest-layer activation patterns; categorical RDMs hold absolute log2
feature differences. Candidate relatedness uses Kendall tau-a across
network instances with one-sided signed-rank inference, FDR correction,
pairwise candidate contrasts and a leave-one-out noise ceiling.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import dbn as dbn_mod
from . import render
from .stats import bh_fdr, kendall_tau_a, wilcoxon_signed_rank
from .stimspace import StimulusParams, log_feature_value

# The candidate set mirrors the eight labels used for the categorical
# models; "convex_hull" is the field-area feature under its other name.
DEFAULT_CANDIDATES = ("num", "fa", "tsa", "isa", "spar", "convex_hull", "tp", "ip")
_FEATURE_ALIASES = {"convex_hull": "fa"}


@dataclass
class Rdm:
    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        k = len(self.labels)
        if self.values.shape != (k, k):
            raise ValueError(f"RDM shape {self.values.shape} does not match "
                             f"{k} labels")
        if np.max(np.abs(self.values - self.values.T)) > 1e-12:
            raise ValueError("RDM must be symmetric")
        if np.max(np.abs(np.diag(self.values))) > 1e-12:
            raise ValueError("RDM diagonal must be zero")

    def lower_triangle(self):
        idx = np.tril_indices(len(self.labels), k=-1)
        return self.values[idx]


@dataclass
class CandidateResult:
    taus: np.ndarray
    mean_tau: float
    sem_tau: float
    p_value: float
    significant: bool


@dataclass
class RsaReport:
    candidates: dict          # name -> CandidateResult
    pairwise: dict            # (name_a, name_b) -> (p_value, significant)
    ceiling_lower: float
    ceiling_upper: float
    fdr_q: float


def condition_label(p: StimulusParams) -> str:
    return f"n{p.n}_sz{p.size:g}_sp{p.spacing:g}"


def rdm_from_patterns(patterns, labels) -> Rdm:
    """1 - Pearson RDM over rows of `patterns` (one pattern per condition)."""
    patterns = np.asarray(patterns, dtype=float)
    if np.any(np.std(patterns, axis=1) == 0):
        dead = np.nonzero(np.std(patterns, axis=1) == 0)[0]
        raise ValueError(f"zero-variance pattern(s) at conditions {dead.tolist()}; "
                         "Pearson dissimilarity undefined")
    values = 1.0 - np.corrcoef(patterns)
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 0.0)
    return Rdm(tuple(labels), values)


def compute_model_rdm(trained_dbn, rsa_dir) -> Rdm:
    """Condition-averaged deepest-layer RDM for a rendered RSA dataset."""
    images, records = render.load_images(rsa_dir)
    conditions = sorted({rec.condition for rec in records})
    if any(c is None for c in conditions):
        raise ValueError(f"{rsa_dir} is not an RSA dataset (no condition ids)")
    reps = dbn_mod.represent(trained_dbn, images)
    patterns = []
    labels = []
    for cond in conditions:
        idx = [i for i, rec in enumerate(records) if rec.condition == cond]
        if not idx:
            raise ValueError(f"condition {cond} has no instances")
        patterns.append(reps[idx].mean(axis=0))
        labels.append(condition_label(records[idx[0]].params()))
    rdm = rdm_from_patterns(np.array(patterns), labels)
    if rdm.values.min() < -1e-9 or rdm.values.max() > 2.0 + 1e-9:
        raise ValueError("model RDM entries outside the 1 - Pearson range [0, 2]")
    return rdm


def condition_params(rsa_dir):
    """Per-condition StimulusParams of a rendered RSA dataset, in label order."""
    _, records = render.load_manifest(rsa_dir)
    by_cond = {}
    for rec in records:
        by_cond.setdefault(rec.condition, rec.params())
    return [by_cond[c] for c in sorted(by_cond)]


def compute_categorical_rdm(feature, params) -> Rdm:
    """RDM of absolute log2 feature differences between conditions."""
    key = _FEATURE_ALIASES.get(feature, feature)
    values = np.array([log_feature_value(key, p) for p in params])
    labels = tuple(condition_label(p) for p in params)
    diff = np.abs(values[:, None] - values[None, :])
    return Rdm(labels, diff)


def candidate_rdms(params, candidates=DEFAULT_CANDIDATES):
    return {name: compute_categorical_rdm(name, params) for name in candidates}


def compare_rdms(a: Rdm, b: Rdm) -> float:
    """Kendall tau-a between lower-triangle dissimilarities."""
    if a.labels != b.labels:
        raise ValueError("RDM labels do not match")
    return kendall_tau_a(a.lower_triangle(), b.lower_triangle(), method="quadratic")


def rank_transform(rdm: Rdm) -> Rdm:
    """Rank-transform dissimilarities and scale into [0, 1] (display form).

    Being strictly monotone on the entries, this cannot change any tau-a.
    """
    tri = rdm.lower_triangle()
    order = np.argsort(np.argsort(tri, kind="stable"), kind="stable").astype(float)
    # midranks for exact ties
    ranks = np.empty_like(order)
    sorted_idx = np.argsort(tri, kind="stable")
    i = 0
    while i < len(tri):
        j = i
        while j + 1 < len(tri) and tri[sorted_idx[j + 1]] == tri[sorted_idx[i]]:
            j += 1
        ranks[sorted_idx[i:j + 1]] = 0.5 * (i + j)
        i = j + 1
    scaled = ranks / max(1.0, len(tri) - 1.0)
    k = len(rdm.labels)
    values = np.zeros((k, k))
    idx = np.tril_indices(k, k=-1)
    values[idx] = scaled
    values = values + values.T
    return Rdm(rdm.labels, values)


def _signed_rank_p(diffs, alternative):
    diffs = np.asarray(diffs, dtype=float)
    if np.all(diffs == 0):
        return 1.0
    return wilcoxon_signed_rank(diffs, alternative=alternative).p_value


def mean_rdm(rdms) -> Rdm:
    values = np.mean([r.values for r in rdms], axis=0)
    return Rdm(rdms[0].labels, values)


def relatedness_and_ceiling(instance_rdms, candidates, fdr_q=0.01) -> RsaReport:
    """Candidate relatedness to a set of per-instance model RDMs.

    For every candidate, tau-a against each instance RDM is tested against
    zero with a one-sided signed-rank test; the resulting p-values are
    FDR-corrected at `fdr_q`. Pairwise candidate contrasts use two-sided
    signed-rank tests on per-instance tau differences, FDR-corrected the
    same way. The noise ceiling comes from the instance-mean RDM: the upper
    bound correlates every instance with the full mean, the lower bound
    with the mean of the other instances.
    """
    instance_rdms = list(instance_rdms)
    if len(instance_rdms) < 6:
        raise ValueError(f"need at least 6 instance RDMs, got {len(instance_rdms)}")
    if not candidates:
        raise ValueError("need at least one candidate RDM")

    names = list(candidates)
    taus = {name: np.array([compare_rdms(inst, candidates[name])
                            for inst in instance_rdms])
            for name in names}
    p_values = [_signed_rank_p(taus[name], "greater") for name in names]
    flags, _ = bh_fdr(p_values, fdr_q)

    results = {}
    for name, p, flag in zip(names, p_values, flags):
        t = taus[name]
        sem = float(np.std(t, ddof=1) / math.sqrt(len(t))) if len(t) > 1 else 0.0
        results[name] = CandidateResult(t, float(t.mean()), sem, float(p), bool(flag))

    pair_keys = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    pair_p = [_signed_rank_p(taus[a] - taus[b], "two-sided") for a, b in pair_keys]
    pair_flags, _ = bh_fdr(pair_p, fdr_q) if pair_keys else (np.zeros(0, bool), 0)
    pairwise = {key: (float(p), bool(flag))
                for key, p, flag in zip(pair_keys, pair_p, pair_flags)}

    full_mean = mean_rdm(instance_rdms)
    upper = float(np.mean([compare_rdms(inst, full_mean) for inst in instance_rdms]))
    lower_vals = []
    for i, inst in enumerate(instance_rdms):
        others = instance_rdms[:i] + instance_rdms[i + 1:]
        lower_vals.append(compare_rdms(inst, mean_rdm(others)))
    lower = float(np.mean(lower_vals))

    return RsaReport(results, pairwise, lower, upper, fdr_q)


def write_rdm_csv(path, rdm: Rdm):
    with open(path, "w", newline="") as fh:
        fh.write("," + ",".join(rdm.labels) + "\n")
        for label, row in zip(rdm.labels, rdm.values):
            fh.write(label + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_rdm_csv(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")[1:]
        rows = []
        for line in fh:
            rows.append([float(v) for v in line.rstrip("\n").split(",")[1:]])
    return Rdm(tuple(header), np.array(rows))
