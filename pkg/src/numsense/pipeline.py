"""Experiment orchestration and command-line interface.

A single JSON config drives the whole pipeline: stimulus generation,
unsupervised training across seeds, the comparison task, GLM fitting,
discrimination-vector geometry, RSA and report emission. Every stage is
idempotent (skipped when its outputs are already recorded, unless forced)
and all randomness derives from one master seed through named seed
sequences, so full and partial runs are reproducible.
"""

import argparse
import copy
import csv
import hashlib
import json
from pathlib import Path
import statistics
import sys

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import dbn as dbn_mod
from . import geometry, psychofit, readout, render, rsa
from .stats import mann_whitney_u, sign_test
from .stimspace import FEATURES

STAGES = ["gen-stimuli", "train", "task", "fit-glm", "geometry", "rsa", "report"]
STAGE_DEPS = {
    "gen-stimuli": [],
    "train": ["gen-stimuli"],
    "task": ["gen-stimuli", "train"],
    "fit-glm": ["task"],
    "geometry": ["fit-glm"],
    "rsa": ["gen-stimuli", "train"],
    "report": ["task", "fit-glm", "geometry", "rsa"],
}
TAGS = ("young", "mature")
MANIFEST_NAME = "MANIFEST.json"

# Desk-scale defaults: a hard-ratio comparison grid (numerosity ratios all
# >= 0.64) is what lets the Young-vs-Mature acuity difference show through
# at this model size; easier grids let 1-epoch networks ride non-numerical
# shortcuts to near-deterministic choices, which inflates their fitted
# coefficients. Full-scale values are in configs/fullscale.json.
DEFAULT_CONFIG = {
    "master_seed": 12345,
    "dataset": {
        "n_range": [18, 28],
        "size_range": [2.6e5, 10.4e5],
        "spacing_range": [0.8e7, 3.2e7],
        "levels_per_dim": [6, 5, 5],
        "instances": 4,
        "canvas": [50, 50],
        "ref_size": 200,
        "gap": 1.0,
        "n_train_pairs": 2000,
        "n_test_pairs": 2000,
        "n_human_pairs": 0,
        "unsup_count": 16000,
        "unsup_n_range": [5, 32],
        "rsa_instances": 10,
        "rsa_n_levels": [7, 18, 28],
        "rsa_size_levels": [2.60e5, 6.55e5, 10.40e5],
        "rsa_spacing_levels": [0.80e7, 2.02e7, 3.20e7],
    },
    "dbn": {
        "hidden_sizes": [200, 200],
        "learning_rate": 0.15,
        "weight_decay": 0.0001,
        "momentum": 0.7,
        "batch_size": 100,
        "epochs": 20,
        "n_seeds": 6,
        "dtype": "float32",
    },
    "task": {"ridge": None, "augment_swap": True},
    "analysis": {
        "gamma": 0.01,
        "fdr_q": 0.01,
        "candidates": list(rsa.DEFAULT_CANDIDATES),
    },
    "paths": {"out_dir": "artifacts"},
}

FITS_COLUMNS = ["seed", "tag", "beta_side", "beta_num", "beta_size", "beta_spacing",
                "gamma", "weber", "log_likelihood", "pseudo_r2_adjusted",
                "chi_square_lr", "chi_square_dof", "n_trials", "converged", "n_iter"]
GEOMETRY_COLUMNS = ["seed", "tag", "feature", "projection", "angle_deg"]


class ConfigError(ValueError):
    pass


class StageDependencyError(RuntimeError):
    pass


def _deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path_or_dict):
    """Load, default-fill and schema-validate an experiment config."""
    if isinstance(path_or_dict, (str, Path)):
        try:
            with open(path_or_dict) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path_or_dict}: invalid JSON ({exc})") from None
    else:
        user = path_or_dict
    config = _deep_merge(DEFAULT_CONFIG, user)
    if jsonschema is not None:
        schema = json.loads((Path(__file__).parent / "config_schema.json").read_text())
        try:
            jsonschema.validate(config, schema)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config field {path}: {exc.message}") from None
    return config


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def derive_seed(master_seed, stage, *indices):
    """Named, documented seed derivation: (master, sha1(stage)[:4], indices)."""
    stage_code = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
    ss = np.random.SeedSequence([int(master_seed), stage_code, *map(int, indices)])
    return int(ss.generate_state(1)[0])


class Pipeline:
    def __init__(self, config, out_dir=None, force=False):
        self.config = config
        self.out = Path(out_dir if out_dir is not None else config["paths"]["out_dir"])
        self.force = force
        self.master_seed = config["master_seed"]
        self.n_seeds = config["dbn"]["n_seeds"]

    # -- artifact manifest ---------------------------------------------------

    def _manifest_path(self):
        return self.out / MANIFEST_NAME

    def _load_manifest(self):
        if self._manifest_path().exists():
            return json.loads(self._manifest_path().read_text())
        return {"config_hash": config_hash(self.config), "stages": {}}

    def _save_manifest(self, manifest):
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self._manifest_path(), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def _stage_done(self, manifest, stage):
        entry = manifest["stages"].get(stage)
        if not entry:
            return False
        return all((self.out / rel).exists() for rel in entry.get("outputs", []))

    def _mark_done(self, manifest, stage, outputs):
        manifest["stages"][stage] = {"done": True, "outputs": sorted(outputs)}
        self._save_manifest(manifest)

    # -- stage execution -----------------------------------------------------

    def run(self, stages="all"):
        """Execute the selected stages in pipeline order; returns statuses."""
        if stages in ("all", None):
            selected = list(STAGES)
        else:
            selected = [s.strip() for s in stages.split(",")] if isinstance(stages, str) else list(stages)
            for s in selected:
                if s not in STAGES:
                    raise ConfigError(f"unknown stage {s!r}; choose from {STAGES}")
            selected = [s for s in STAGES if s in selected]

        manifest = self._load_manifest()
        recorded = manifest.get("config_hash")
        if recorded != config_hash(self.config):
            if manifest["stages"] and not self.force:
                raise ConfigError(
                    f"{self._manifest_path()} was produced by a different config; "
                    "use --force to start over or point --out elsewhere")
            manifest = {"config_hash": config_hash(self.config), "stages": {}}

        statuses = {}
        for stage in selected:
            for dep in STAGE_DEPS[stage]:
                if dep not in selected and not self._stage_done(manifest, dep):
                    raise StageDependencyError(
                        f"stage {stage!r} needs outputs of {dep!r}; run {dep!r} first")
            if self._stage_done(manifest, stage) and not self.force:
                statuses[stage] = "up-to-date"
                continue
            outputs = getattr(self, "_stage_" + stage.replace("-", "_"))()
            self._mark_done(manifest, stage, outputs)
            statuses[stage] = "ran"
        return statuses

    def _dataset_config(self):
        d = self.config["dataset"]
        return render.DatasetConfig(
            n_range=tuple(d["n_range"]), size_range=tuple(d["size_range"]),
            spacing_range=tuple(d["spacing_range"]), levels_per_dim=d["levels_per_dim"],
            instances=d["instances"], canvas=tuple(d["canvas"]),
            ref_size=d["ref_size"], gap=d["gap"],
            n_train_pairs=d["n_train_pairs"], n_test_pairs=d["n_test_pairs"],
            n_human_pairs=d["n_human_pairs"], unsup_count=d["unsup_count"],
            unsup_n_range=tuple(d["unsup_n_range"]), rsa_instances=d["rsa_instances"],
            rsa_n_levels=tuple(d["rsa_n_levels"]),
            rsa_size_levels=tuple(d["rsa_size_levels"]),
            rsa_spacing_levels=tuple(d["rsa_spacing_levels"]),
            seed=derive_seed(self.master_seed, "dataset"))

    def _stage_gen_stimuli(self):
        stim_dir = self.out / "stimuli"
        summary = render.build_datasets(self._dataset_config(), stim_dir)
        with open(stim_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
            fh.write("\n")
        outputs = ["stimuli/summary.json", "stimuli/comparison/manifest.json",
                   "stimuli/unsup/manifest.json", "stimuli/rsa/manifest.json",
                   "stimuli/pairs_train.csv", "stimuli/pairs_test.csv"]
        if self.config["dataset"]["n_human_pairs"]:
            outputs.append("stimuli/pairs_human.csv")
        return outputs

    def _checkpoint_path(self, seed_idx, tag):
        return self.out / "checkpoints" / f"seed{seed_idx}_{tag}.nslb"

    def _readout_path(self, seed_idx, tag):
        return self.out / "checkpoints" / f"readout_seed{seed_idx}_{tag}.nslb"

    def _stage_train(self):
        images, _ = render.load_images(self.out / "stimuli" / "unsup")
        ckpt_dir = self.out / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        cfg = self.config["dbn"]
        outputs = []
        for k in range(self.n_seeds):
            hyper = dbn_mod.TrainHyper(
                learning_rate=cfg["learning_rate"], weight_decay=cfg["weight_decay"],
                momentum=cfg["momentum"], batch_size=cfg["batch_size"],
                epochs=cfg["epochs"])
            config = dbn_mod.DbnConfig(hidden_sizes=tuple(cfg["hidden_sizes"]),
                                       hyper=hyper,
                                       seed=derive_seed(self.master_seed, "train", k),
                                       dtype=cfg.get("dtype", "float64"))
            checkpoints, logs = dbn_mod.train_dbn(images, config)
            for tag in TAGS:
                path = self._checkpoint_path(k, tag)
                dbn_mod.save_checkpoint(path, checkpoints[tag],
                                        extra_meta={"seed_index": k,
                                                    "hyper": vars(hyper)})
                log_path = ckpt_dir / f"train_log_seed{k}_{tag}.csv"
                with open(log_path, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["epoch", "layer", "recon_error", "seconds"])
                    for epoch, layer, err, secs in logs[tag]:
                        writer.writerow([epoch, layer, repr(err), f"{secs:.3f}"])
                outputs += [str(path.relative_to(self.out)),
                            str(log_path.relative_to(self.out))]
        return outputs

    def _stage_task(self):
        stim = self.out / "stimuli"
        pixels, records = render.load_images(stim / "comparison")
        by_file = {rec.file: pixels[i] for i, rec in enumerate(records)}
        train_pairs = render.read_pairs_csv(stim / "pairs_train.csv")
        test_pairs = render.read_pairs_csv(stim / "pairs_test.csv")
        task_cfg = self.config["task"]
        task_dir = self.out / "task"
        task_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        for k in range(self.n_seeds):
            for tag in TAGS:
                net, _ = dbn_mod.load_checkpoint(self._checkpoint_path(k, tag))
                train_files = sorted({p.left_image for p in train_pairs}
                                     | {p.right_image for p in train_pairs})
                reps = dict(zip(train_files, dbn_mod.represent(
                    net, np.array([by_file[f] for f in train_files]))))
                model = readout.fit_readout(
                    np.array([reps[p.left_image] for p in train_pairs]),
                    np.array([reps[p.right_image] for p in train_pairs]),
                    [p.correct_side for p in train_pairs],
                    ridge=task_cfg["ridge"], augment_swap=task_cfg["augment_swap"],
                    trained_on=f"seed{k}_{tag}")
                readout.save_readout(self._readout_path(k, tag), model)
                task_seed = derive_seed(self.master_seed, "task", k, TAGS.index(tag))
                choice_records, _ = readout.run_comparison_task(
                    net, model, test_pairs, by_file, seed=task_seed)
                choices_path = task_dir / f"choices_seed{k}_{tag}.csv"
                readout.write_choices_csv(choices_path, choice_records)
                outputs += [str(self._readout_path(k, tag).relative_to(self.out)),
                            str(choices_path.relative_to(self.out))]
        return outputs

    def _stage_fit_glm(self):
        fits_dir = self.out / "fits"
        fits_dir.mkdir(parents=True, exist_ok=True)
        gamma = self.config["analysis"]["gamma"]
        path = fits_dir / "glm_fits.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(FITS_COLUMNS)
            for k in range(self.n_seeds):
                for tag in TAGS:
                    recs = readout.read_choices_csv(
                        self.out / "task" / f"choices_seed{k}_{tag}.csv")
                    fit = psychofit.fit_glm(recs, gamma=gamma)
                    weber = (repr(psychofit.weber_fraction(fit))
                             if fit.beta_num > 0 else "")
                    writer.writerow([
                        k, tag, repr(fit.beta_side), repr(fit.beta_num),
                        repr(fit.beta_size), repr(fit.beta_spacing), repr(fit.gamma),
                        weber, repr(fit.log_likelihood), repr(fit.pseudo_r2_adjusted),
                        repr(fit.chi_square_lr), fit.chi_square_dof, fit.n_trials,
                        int(fit.converged), fit.n_iter])
        return ["fits/glm_fits.csv"]

    def _read_fits(self):
        rows = []
        with open(self.out / "fits" / "glm_fits.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append({
                    "seed": int(row["seed"]), "tag": row["tag"],
                    "beta_side": float(row["beta_side"]),
                    "beta_num": float(row["beta_num"]),
                    "beta_size": float(row["beta_size"]),
                    "beta_spacing": float(row["beta_spacing"]),
                    "weber": float(row["weber"]) if row["weber"] else None,
                })
        return rows

    def _stage_geometry(self):
        geo_dir = self.out / "geometry"
        geo_dir.mkdir(parents=True, exist_ok=True)
        path = geo_dir / "projections.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GEOMETRY_COLUMNS)
            for row in self._read_fits():
                vec = geometry.DiscriminationVector(
                    row["beta_num"], row["beta_size"], row["beta_spacing"])
                for feature in FEATURES:
                    writer.writerow([
                        row["seed"], row["tag"], feature,
                        repr(geometry.project_onto_feature(vec, feature)),
                        repr(geometry.angle_to_feature(vec, feature))])
        return ["geometry/projections.csv"]

    def _stage_rsa(self):
        rsa_dir_out = self.out / "rsa"
        rsa_dir_out.mkdir(parents=True, exist_ok=True)
        rsa_data = self.out / "stimuli" / "rsa"
        params = rsa.condition_params(rsa_data)
        candidates = {name: rsa.compute_categorical_rdm(name, params)
                      for name in self.config["analysis"]["candidates"]}
        outputs = []
        for name, rdm in candidates.items():
            path = rsa_dir_out / f"rdm_cat_{name}.csv"
            rsa.write_rdm_csv(path, rdm)
            outputs.append(str(path.relative_to(self.out)))
        for tag in TAGS:
            instances = []
            for k in range(self.n_seeds):
                net, _ = dbn_mod.load_checkpoint(self._checkpoint_path(k, tag))
                rdm = rsa.compute_model_rdm(net, rsa_data)
                instances.append(rdm)
                path = rsa_dir_out / f"rdm_model_seed{k}_{tag}.csv"
                rsa.write_rdm_csv(path, rdm)
                outputs.append(str(path.relative_to(self.out)))
            report = rsa.relatedness_and_ceiling(
                instances, candidates, fdr_q=self.config["analysis"]["fdr_q"])
            payload = {
                "tag": tag,
                "fdr_q": report.fdr_q,
                "ceiling": [report.ceiling_lower, report.ceiling_upper],
                "candidates": {
                    name: {"taus": res.taus.tolist(), "mean_tau": res.mean_tau,
                           "sem_tau": res.sem_tau, "p_value": res.p_value,
                           "significant": res.significant}
                    for name, res in report.candidates.items()},
                "pairwise": {f"{a}|{b}": [p, sig]
                             for (a, b), (p, sig) in report.pairwise.items()},
            }
            path = rsa_dir_out / f"report_{tag}.json"
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1, sort_keys=True)
                fh.write("\n")
            outputs.append(str(path.relative_to(self.out)))
        return outputs

    def _stage_report(self):
        return emit_report(self.out, n_seeds=self.n_seeds)


def _median(values):
    return statistics.median(values)


def emit_report(artifact_dir, n_seeds=None):
    """Tabulate fits, angles, Young-vs-Mature tests, RSA and the
    directional-check summary from a completed artifact directory.
    """
    out = Path(artifact_dir)
    report_dir = out / "report"
    fits_path = out / "fits" / "glm_fits.csv"
    geo_path = out / "geometry" / "projections.csv"
    rsa_reports = {tag: out / "rsa" / f"report_{tag}.json" for tag in TAGS}
    missing = [str(p) for p in [fits_path, geo_path, *rsa_reports.values()]
               if not p.exists()]
    if missing:
        raise FileNotFoundError(f"report inputs missing: {missing}")
    report_dir.mkdir(parents=True, exist_ok=True)

    fits = []
    with open(fits_path, newline="") as fh:
        for row in csv.DictReader(fh):
            fits.append(row)
    if n_seeds is None:
        n_seeds = len({row["seed"] for row in fits})

    # per-network coefficients and weber fractions
    with open(report_dir / "coefficients.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "tag", "beta_side", "beta_num", "beta_size",
                         "beta_spacing", "weber"])
        for row in fits:
            writer.writerow([row["seed"], row["tag"], row["beta_side"],
                             row["beta_num"], row["beta_size"],
                             row["beta_spacing"], row["weber"]])

    angles = {}  # (tag, feature) -> {seed: angle}
    with open(geo_path, newline="") as fh:
        for row in csv.DictReader(fh):
            angles.setdefault((row["tag"], row["feature"]), {})[int(row["seed"])] = \
                float(row["angle_deg"])
    with open(report_dir / "angles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "median_angle_young", "median_angle_mature"])
        for feature in FEATURES:
            writer.writerow([
                feature,
                repr(_median(list(angles[("young", feature)].values()))),
                repr(_median(list(angles[("mature", feature)].values())))])

    by_tag = {tag: [r for r in fits if r["tag"] == tag] for tag in TAGS}
    def values(tag, key):
        return [float(r[key]) for r in by_tag[tag]]

    tests_rows = []
    for key in ("beta_num", "beta_size", "beta_spacing"):
        res = mann_whitney_u(values("young", key), values("mature", key),
                             alternative="two-sided")
        tests_rows.append([key, repr(_median(values("young", key))),
                           repr(_median(values("mature", key))),
                           repr(res.statistic), repr(res.p_value)])
    for feature in ("num", "tp", "tsa"):
        young_a = [angles[("young", feature)][k] for k in sorted(angles[("young", feature)])]
        mature_a = [angles[("mature", feature)][k] for k in sorted(angles[("mature", feature)])]
        res = mann_whitney_u(young_a, mature_a, alternative="two-sided")
        tests_rows.append([f"angle_{feature}", repr(_median(young_a)),
                           repr(_median(mature_a)), repr(res.statistic),
                           repr(res.p_value)])
    with open(report_dir / "young_mature_tests.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "median_young", "median_mature", "U", "p_value"])
        writer.writerows(tests_rows)

    rsa_data = {tag: json.loads(rsa_reports[tag].read_text()) for tag in TAGS}
    with open(report_dir / "rsa_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tag", "candidate", "median_tau", "mean_tau", "sem_tau",
                         "p_value", "significant", "ceiling_lower", "ceiling_upper"])
        for tag in TAGS:
            data = rsa_data[tag]
            for name in sorted(data["candidates"]):
                cand = data["candidates"][name]
                writer.writerow([
                    tag, name, repr(_median(cand["taus"])), repr(cand["mean_tau"]),
                    repr(cand["sem_tau"]), repr(cand["p_value"]),
                    int(cand["significant"]), repr(data["ceiling"][0]),
                    repr(data["ceiling"][1])])

    checks = directional_checks(out, fits, angles, rsa_data, n_seeds)
    with open(report_dir / "summary.json", "w") as fh:
        json.dump(checks, fh, indent=1, sort_keys=True)
        fh.write("\n")
    lines = [
        f"βNum(Mature) > βNum(Young): {_pf(checks['beta_num_increases_median'])}",
        f"angle-to-Numerosity(Mature) < angle-to-Numerosity(Young): "
        f"{_pf(checks['angle_num_decreases_median'])}",
        f"βSize(Mature) < βSize(Young): {_pf(checks['beta_size_decreases_median'])}",
        f"βSpacing(Mature) < βSpacing(Young): {_pf(checks['beta_spacing_decreases_median'])}",
        f"sign test, per-seed βNum increase (one-sided): p = "
        f"{checks['beta_num_sign_test_p']:.4f}: {_pf(checks['beta_num_sign_test_p'] <= 0.11)}",
        f"congruent - incongruent accuracy gap >= 5 pp in Young nets "
        f"({checks['congruency_n_pass']}/{n_seeds} seeds): {_pf(checks['congruency_pass'])}",
        f"RSA Young: FA/Convex-Hull tau >= Numerosity tau (median): "
        f"{_pf(checks['rsa_young_fa_geq_num'])}",
        f"RSA Mature: Numerosity rank among candidates increases: "
        f"{_pf(checks['rsa_num_rank_increases'])}",
        f"noise ceiling lower <= upper in every run: {_pf(checks['noise_ceiling_ok'])}",
    ]
    (report_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    return ["report/coefficients.csv", "report/angles.csv",
            "report/young_mature_tests.csv", "report/rsa_summary.csv",
            "report/summary.json", "report/summary.txt"]


def _pf(flag):
    return "PASS" if flag else "FAIL"


def congruency_gaps(artifact_dir, n_seeds, tag="young"):
    """Per-seed accuracy difference (congruent - incongruent), percentage points."""
    gaps = []
    for k in range(n_seeds):
        recs = readout.read_choices_csv(
            Path(artifact_dir) / "task" / f"choices_seed{k}_{tag}.csv")
        acc = {"congruent": [], "incongruent": [], "mixed": []}
        for rec in recs:
            acc[readout.congruency(rec.r_num, rec.r_size, rec.r_spacing)].append(rec.correct)
        if not acc["congruent"] or not acc["incongruent"]:
            raise ValueError(f"seed {k}: test pairs lack congruent/incongruent trials")
        gaps.append(100.0 * (float(np.mean(acc["congruent"]))
                             - float(np.mean(acc["incongruent"]))))
    return gaps


def _candidate_rank(rsa_payload, name):
    """1-based standing of a candidate by median tau (1 = most related)."""
    medians = {cand: _median(data["taus"])
               for cand, data in rsa_payload["candidates"].items()}
    target = medians[name]
    return 1 + sum(1 for v in medians.values() if v > target)


def directional_checks(artifact_dir, fits, angles, rsa_data, n_seeds):
    by_seed_tag = {(int(r["seed"]), r["tag"]): r for r in fits}

    def seed_vals(tag, key):
        return [float(by_seed_tag[(k, tag)][key]) for k in range(n_seeds)]

    beta_num_y = seed_vals("young", "beta_num")
    beta_num_m = seed_vals("mature", "beta_num")
    diffs = [m - y for y, m in zip(beta_num_y, beta_num_m)]
    sign_p = sign_test(diffs, alternative="greater").p_value if any(diffs) else 1.0

    angle_num_y = [angles[("young", "num")][k] for k in range(n_seeds)]
    angle_num_m = [angles[("mature", "num")][k] for k in range(n_seeds)]

    gaps = congruency_gaps(artifact_dir, n_seeds, tag="young")
    n_gap_pass = sum(1 for g in gaps if g >= 5.0)

    young_rsa, mature_rsa = rsa_data["young"], rsa_data["mature"]
    fa_name = "fa" if "fa" in young_rsa["candidates"] else "convex_hull"
    young_fa_tau = _median(young_rsa["candidates"][fa_name]["taus"])
    young_num_tau = _median(young_rsa["candidates"]["num"]["taus"])
    rank_young = _candidate_rank(young_rsa, "num")
    rank_mature = _candidate_rank(mature_rsa, "num")
    ceiling_ok = all(rsa_data[tag]["ceiling"][0] <= rsa_data[tag]["ceiling"][1]
                     for tag in TAGS)

    return {
        "beta_num_increases_median": _median(beta_num_m) > _median(beta_num_y),
        "beta_num_sign_test_p": sign_p,
        "angle_num_decreases_median": _median(angle_num_m) < _median(angle_num_y),
        "beta_size_decreases_median":
            _median(seed_vals("mature", "beta_size")) < _median(seed_vals("young", "beta_size")),
        "beta_spacing_decreases_median":
            _median(seed_vals("mature", "beta_spacing")) < _median(seed_vals("young", "beta_spacing")),
        "congruency_gaps_pp": gaps,
        "congruency_n_pass": n_gap_pass,
        "congruency_pass": n_gap_pass >= max(1, n_seeds - 1),
        "rsa_young_fa_geq_num": young_fa_tau >= young_num_tau,
        "rsa_num_rank_young": rank_young,
        "rsa_num_rank_mature": rank_mature,
        "rsa_num_rank_increases": rank_mature < rank_young,
        "noise_ceiling_ok": ceiling_ok,
    }


def run_pipeline(config_path, stages="all", force=False, seed=None, out_dir=None):
    """Library entry point mirroring the CLI: returns per-stage statuses."""
    config = load_config(config_path)
    if seed is not None:
        config["master_seed"] = seed
    pipe = Pipeline(config, out_dir=out_dir, force=force)
    return pipe.run(stages)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="numsense",
        description="Dot-stimulus synthesis, unsupervised network training and "
                    "psychophysical analysis of numerosity comparison.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config JSON")
    common.add_argument("--force", action="store_true",
                        help="re-run even when outputs are up to date")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config's master seed")
    common.add_argument("--out", default=None, help="override the artifact directory")

    run_p = sub.add_parser("run", parents=[common], help="run selected stages in order")
    run_p.add_argument("--stages", default="all",
                       help="comma-separated stage list (default: all)")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run only the {stage} stage")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    stages = args.stages if args.command == "run" else args.command
    try:
        statuses = run_pipeline(args.config, stages=stages, force=args.force,
                                seed=args.seed, out_dir=args.out)
    except (ConfigError, StageDependencyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for stage, status in statuses.items():
        print(f"{stage}: {status}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
