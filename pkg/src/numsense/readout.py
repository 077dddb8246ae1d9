"""Linear read-out layer for the two-alternative numerosity comparison task.

The read-out sees the concatenated deepest-layer representations of the two
stimuli plus a constant bias input and maps them to two output units, one
per side. Weights come from ridge-regularized least squares against one-hot
targets (the pseudoinverse solution when the ridge is zero) and are never
tuned afterwards; at test time the larger output unit wins.
"""

import csv
from dataclasses import dataclass
import math

import numpy as np

from . import dbn as dbn_mod

DEFAULT_RIDGE_FACTOR = 1e-6  # times trace(X'X)/dim; keeps near-singular systems solvable
CHOICE_COLUMNS = ["pair_id", "r_num", "r_size", "r_spacing", "choice", "correct"]


@dataclass
class ChoiceRecord:
    """One comparison trial: right/left ratios, the choice and its outcome."""

    r_num: float
    r_size: float
    r_spacing: float
    choice: str               # "left" or "right"
    correct: bool
    rt: float | None = None   # ms; only populated for human data


@dataclass
class ReadoutModel:
    W_out: np.ndarray         # 2 x (2 * hidden + 1)
    trained_on: str = ""

    @property
    def n_inputs(self):
        return self.W_out.shape[1]


@dataclass
class TaskSummary:
    n: int
    accuracy: float
    accuracy_by_ratio_bin: dict


def fit_readout(left_reps, right_reps, correct_sides, ridge=None,
                augment_swap=True, trained_on="") -> ReadoutModel:
    """Least-squares fit of the decision layer; deterministic, no RNG.

    Rows of the design are [left_rep, right_rep, 1]; targets are one-hot
    on the correct side. With `augment_swap` every pair is also presented
    mirrored, which cancels any side bias the pair list might carry.
    `ridge=None` applies the default small ridge; `ridge=0` demands a
    full-rank system and raises otherwise.
    """
    left = np.asarray(left_reps, dtype=float)
    right = np.asarray(right_reps, dtype=float)
    if left.ndim != 2 or left.shape != right.shape:
        raise ValueError("left/right representations must be matching 2-D arrays")
    if len(correct_sides) != left.shape[0]:
        raise ValueError("one correct side per pair required")
    if left.shape[0] == 0:
        raise ValueError("empty training set")

    y_right = np.array([1.0 if side == "right" else 0.0 for side in correct_sides])
    if augment_swap:
        left, right = (np.vstack([left, right]), np.vstack([right, left]))
        y_right = np.concatenate([y_right, 1.0 - y_right])

    x = np.hstack([left, right, np.ones((left.shape[0], 1))])
    t = np.column_stack([1.0 - y_right, y_right])
    xtx = x.T @ x
    dim = x.shape[1]
    if ridge is None:
        ridge = DEFAULT_RIDGE_FACTOR * np.trace(xtx) / dim
    if ridge == 0 and np.linalg.matrix_rank(xtx) < dim:
        raise np.linalg.LinAlgError(
            "X'X is rank-deficient; use a positive ridge or more data")
    w_out = np.linalg.solve(xtx + ridge * np.eye(dim), x.T @ t).T
    return ReadoutModel(w_out, trained_on=trained_on)


def decide(model, left_rep, right_rep, rng):
    """Side of the larger output unit; exact ties resolved by a fair coin."""
    left_rep = np.asarray(left_rep, dtype=float)
    right_rep = np.asarray(right_rep, dtype=float)
    x = np.concatenate([left_rep, right_rep, [1.0]])
    if x.shape[0] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {x.shape[0]}")
    score_left, score_right = model.W_out @ x
    if score_left > score_right:
        return "left"
    if score_right > score_left:
        return "right"
    return "left" if rng.random() < 0.5 else "right"


def ratio_bin(r_num):
    """Difficulty bracket label for a pair's numerosity ratio."""
    ratio = min(r_num, 1.0 / r_num)
    lo = math.floor(ratio * 10) / 10
    return f"[{lo:.1f},{lo + 0.1:.1f})"


def congruency(r_num, r_size, r_spacing):
    """Classify a pair by the sign agreement of its log ratios.

    "congruent": Size and Spacing both move with Numerosity;
    "incongruent": both move against it; "mixed" otherwise (including
    pairs where either ratio is exactly 1).
    """
    s_num = np.sign(math.log2(r_num))
    s_size = np.sign(math.log2(r_size))
    s_spacing = np.sign(math.log2(r_spacing))
    if s_num == 0 or s_size == 0 or s_spacing == 0:
        return "mixed"
    if s_size == s_num and s_spacing == s_num:
        return "congruent"
    if s_size == -s_num and s_spacing == -s_num:
        return "incongruent"
    return "mixed"


def run_comparison_task(trained_dbn, model, pairs, pixels_by_file, seed=0):
    """Simulate the comparison task over a pair list.

    `pairs` are PairRow-like objects carrying image file names, ratios and
    the correct side; `pixels_by_file` maps file names to flattened binary
    pixel arrays. Returns (records, TaskSummary). Each pair gets its own
    RNG stream derived from (seed, pair_id) so results do not depend on
    evaluation order.
    """
    reps = {}

    def rep_of(name):
        if name not in reps:
            try:
                pixels = pixels_by_file[name]
            except KeyError:
                raise KeyError(f"pair list references unknown image {name!r}") from None
            reps[name] = dbn_mod.represent(trained_dbn, pixels)
        return reps[name]

    records = []
    for pair in pairs:
        rng = np.random.default_rng(np.random.SeedSequence([seed, int(pair.pair_id)]))
        choice = decide(model, rep_of(pair.left_image), rep_of(pair.right_image), rng)
        records.append(ChoiceRecord(
            r_num=pair.r_num, r_size=pair.r_size, r_spacing=pair.r_spacing,
            choice=choice, correct=(choice == pair.correct_side)))
    return records, summarize_records(records)


def summarize_records(records):
    if not records:
        return TaskSummary(n=0, accuracy=float("nan"), accuracy_by_ratio_bin={})
    by_bin = {}
    for rec in records:
        by_bin.setdefault(ratio_bin(rec.r_num), []).append(rec.correct)
    return TaskSummary(
        n=len(records),
        accuracy=float(np.mean([r.correct for r in records])),
        accuracy_by_ratio_bin={k: float(np.mean(v)) for k, v in sorted(by_bin.items())},
    )


def write_choices_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHOICE_COLUMNS)
        for pair_id, rec in enumerate(records):
            writer.writerow([pair_id, repr(rec.r_num), repr(rec.r_size),
                             repr(rec.r_spacing), rec.choice, int(rec.correct)])


def read_choices_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CHOICE_COLUMNS:
            raise ValueError(f"bad choices CSV header {header}")
        for row in reader:
            records.append(ChoiceRecord(
                r_num=float(row[1]), r_size=float(row[2]), r_spacing=float(row[3]),
                choice=row[4], correct=bool(int(row[5]))))
    return records


def save_readout(path, model):
    """Persist the read-out in the network checkpoint container format."""
    w = model.W_out
    dbn_mod.write_container(
        path, [(w, np.zeros(w.shape[1]), np.zeros(w.shape[0]))],
        {"tag": "readout", "trained_on": model.trained_on})


def load_readout(path):
    layers, meta = dbn_mod.read_container(path)
    if meta.get("tag") != "readout":
        raise ValueError(f"{path} is not a read-out container")
    return ReadoutModel(layers[0][0], trained_on=meta.get("trained_on", ""))
