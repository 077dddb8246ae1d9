"""Dot-array rasterization, pixel-level measurement and dataset building.

Stimulus parameters are defined in a reference frame (200x200 pixels by
default); rendering at a smaller canvas rescales areas by the squared
linear factor instead of resampling, which keeps the rasters crisp binary.
A pixel is white iff its center falls inside a dot circle. Dot centers are
drawn uniformly inside a centered circular field of the stimulus' field
area and rejection-sampled so that circles never overlap (1 px minimum gap
beyond tangency) and never leave the canvas.
"""

import csv
from dataclasses import dataclass, asdict, field
import json
import math
import os
from pathlib import Path

import numpy as np
from scipy import ndimage

from .stimspace import StimulusParams, FeatureVector, derive_features

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
MIN_DOT_RADIUS = 0.71      # guarantees every dot covers at least one pixel center
MAX_PACKING_FRACTION = 0.48  # RSA jamming for hard disks is ~0.547
PAIR_COLUMNS = ["pair_id", "left_image", "right_image",
                "r_num", "r_size", "r_spacing", "correct_side"]
HUMAN_RATIO_BUCKETS = ((0.5, 0.6, 0.10), (0.6, 0.7, 0.20),
                       (0.7, 0.8, 0.30), (0.8, 0.9, 0.40))
WORKERS_ENV_VAR = "NUMSENSE_WORKERS"

# stable per-dataset codes folded into per-image seed derivation
_DATASET_CODES = {"comparison": 1, "unsup": 2, "rsa": 3}


class CanvasError(ValueError):
    """Canvas too small for the stimulus' field circle or dot size."""


class PlacementError(RuntimeError):
    """Could not place all dots within the retry budget."""


@dataclass
class DotImage:
    width: int
    height: int
    pixels: np.ndarray               # uint8, {0, 1}, row-major [y, x]
    dots: list                       # (center_x, center_y, radius) tuples


def scaled_geometry(p: StimulusParams, canvas, ref_size):
    """Dot radius and field radius at the canvas scale, in pixels."""
    s = min(canvas) / ref_size
    feats = derive_features(p)
    isa = feats.isa * s * s
    fa = feats.fa * s * s
    return math.sqrt(isa / math.pi), math.sqrt(fa / math.pi)


def is_renderable(p: StimulusParams, canvas=(200, 200), ref_size=200, gap=1.0):
    """Cheap feasibility check used to pre-screen sampled parameters."""
    r, field_r = scaled_geometry(p, canvas, ref_size)
    if field_r > min(canvas) / 2.0:
        return False
    if r < MIN_DOT_RADIUS:
        return False
    d_half = (2.0 * r + gap) / 2.0
    packing = p.n * d_half ** 2 / (field_r + d_half) ** 2
    return packing <= MAX_PACKING_FRACTION


def render_image(p: StimulusParams, canvas=(200, 200), seed=0, ref_size=200,
                 gap=1.0, max_retries=10000) -> DotImage:
    """Rasterize a stimulus to a binary dot image, deterministic per seed.

    Exactly n dots of equal radius sqrt(ISA/pi) are placed with centers
    uniform over the centered field circle of area FA, rejecting candidates
    that would overlap a placed dot (closer than 2r + gap) or stick out of
    the canvas. If a placement stalls, the whole image restarts; the total
    rejection budget across restarts is `max_retries`.
    """
    w, h = canvas
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r, field_r = scaled_geometry(p, canvas, ref_size)
    if field_r > min(w, h) / 2.0:
        raise CanvasError(
            f"field radius {field_r:.1f} px exceeds canvas half-size {min(w, h) / 2}")
    if r < MIN_DOT_RADIUS:
        raise CanvasError(
            f"dot radius {r:.2f} px below {MIN_DOT_RADIUS}; dots could miss "
            "every pixel center at this scale")

    cx0, cy0 = w / 2.0, h / 2.0
    min_dist = 2.0 * r + gap
    rejections = 0
    consecutive = 0
    centers = []
    while len(centers) < p.n:
        u, t = rng.random(2)
        rad = field_r * math.sqrt(u)
        ang = 2.0 * math.pi * t
        x = cx0 + rad * math.cos(ang)
        y = cy0 + rad * math.sin(ang)
        ok = (r <= x <= w - r) and (r <= y <= h - r)
        if ok:
            for (px, py) in centers:
                if (x - px) ** 2 + (y - py) ** 2 <= min_dist ** 2:
                    ok = False
                    break
        if ok:
            centers.append((x, y))
            consecutive = 0
            continue
        rejections += 1
        consecutive += 1
        if rejections >= max_retries:
            raise PlacementError(
                f"gave up after {rejections} rejections placing {p.n} dots "
                f"(r={r:.2f}, field_r={field_r:.2f}); parameters too dense")
        if consecutive >= 400:
            # a bad early layout can block the rest; start the image over
            centers.clear()
            consecutive = 0

    pixels = np.zeros((h, w), dtype=np.uint8)
    for (x, y) in centers:
        x_lo = max(0, int(math.floor(x - r - 0.5)))
        x_hi = min(w - 1, int(math.ceil(x + r + 0.5)))
        y_lo = max(0, int(math.floor(y - r - 0.5)))
        y_hi = min(h - 1, int(math.ceil(y + r + 0.5)))
        xs = np.arange(x_lo, x_hi + 1) + 0.5
        ys = np.arange(y_lo, y_hi + 1) + 0.5
        mask = ((xs[None, :] - x) ** 2 + (ys[:, None] - y) ** 2) <= r * r
        pixels[y_lo:y_hi + 1, x_lo:x_hi + 1] |= mask.astype(np.uint8)
    return DotImage(w, h, pixels, [(x, y, r) for (x, y) in centers])


def measure_image(img):
    """Measure features back from pixels; returns (FeatureVector, count).

    Dot count is the number of 4-connected components. TSA is the white
    pixel count, FA the area of the minimal enclosing circle of component
    centroids expanded by the mean equivalent dot radius, and TP uses the
    crack-boundary estimator (white/black 4-neighbor edge count times
    pi/4, which is exact for digitized circles in the large-radius limit).
    """
    pixels = img.pixels if isinstance(img, DotImage) else np.asarray(img)
    if not np.isin(pixels, (0, 1)).all():
        raise ValueError("raster must be binary {0, 1}")
    labels, count = ndimage.label(pixels)
    if count == 0:
        raise ValueError("empty image: no components to measure")

    tsa = float(pixels.sum())
    isa = tsa / count
    mean_r = math.sqrt(isa / math.pi)

    centroids = ndimage.center_of_mass(pixels, labels, range(1, count + 1))
    points = [(c + 0.5, r + 0.5) for (r, c) in centroids]  # (x, y)
    _, _, mec_r = _min_enclosing_circle(points)
    fa = math.pi * (mec_r + mean_r) ** 2

    white = pixels.astype(bool)
    edges = 0
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        neighbor = np.zeros_like(white)
        if axis == 0 and shift == 1:
            neighbor[:-1, :] = white[1:, :]
        elif axis == 0:
            neighbor[1:, :] = white[:-1, :]
        elif shift == 1:
            neighbor[:, :-1] = white[:, 1:]
        else:
            neighbor[:, 1:] = white[:, :-1]
        edges += int(np.sum(white & ~neighbor))
    tp = edges * math.pi / 4.0

    features = FeatureVector(
        tsa=tsa, isa=isa, fa=fa, spar=fa / count,
        tp=tp, ip=tp / count, cov=tsa / fa, ac=tsa * fa / count)
    return features, count


def _circle_from(points):
    if len(points) == 0:
        return (0.0, 0.0, 0.0)
    if len(points) == 1:
        return (points[0][0], points[0][1], 0.0)
    if len(points) == 2:
        (x1, y1), (x2, y2) = points
        cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
        return (cx, cy, math.hypot(x1 - x2, y1 - y2) / 2.0)
    (ax, ay), (bx, by), (cx, cy) = points
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-12:  # collinear: largest two-point circle
        candidates = [_circle_from([points[i], points[j]])
                      for i in range(3) for j in range(i + 1, 3)]
        return max(candidates, key=lambda c: c[2])
    ux = ((ax ** 2 + ay ** 2) * (by - cy) + (bx ** 2 + by ** 2) * (cy - ay)
          + (cx ** 2 + cy ** 2) * (ay - by)) / d
    uy = ((ax ** 2 + ay ** 2) * (cx - bx) + (bx ** 2 + by ** 2) * (ax - cx)
          + (cx ** 2 + cy ** 2) * (bx - ax)) / d
    return (ux, uy, math.hypot(ax - ux, ay - uy))


def _in_circle(circle, pt, tol=1e-7):
    cx, cy, r = circle
    return math.hypot(pt[0] - cx, pt[1] - cy) <= r + tol


def _min_enclosing_circle(points):
    """Welzl's algorithm; fine for the dot counts used here."""

    def welzl(pts, boundary):
        if not pts or len(boundary) == 3:
            return _circle_from(boundary)
        p = pts[0]
        circle = welzl(pts[1:], boundary)
        if _in_circle(circle, p):
            return circle
        return welzl(pts[1:], boundary + [p])

    return welzl(list(points), [])


# --- PGM I/O ----------------------------------------------------------------

def write_pgm(path, pixels):
    """Binary PGM (P5), maxval 255, white dots as 255 on black 0."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write((pixels * 255).tobytes())


def read_pgm(path):
    """Read a P5 PGM written by write_pgm back to a {0, 1} array."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a P5 PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    raw = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)
    if not np.isin(raw, (0, 255)).all():
        raise ValueError(f"{path}: pixel values must be exactly 0 or 255")
    return (raw == 255).astype(np.uint8)


# --- datasets ---------------------------------------------------------------

@dataclass
class DatasetConfig:
    n_range: tuple = (7, 28)
    size_range: tuple = (2.6e5, 10.4e5)
    spacing_range: tuple = (0.8e7, 3.2e7)
    levels_per_dim: int = 13
    instances: int = 10
    canvas: tuple = (200, 200)
    ref_size: int = 200
    gap: float = 1.0
    n_train_pairs: int = 15200
    n_test_pairs: int = 15200
    n_human_pairs: int = 300
    unsup_count: int = 65912
    unsup_n_range: tuple = (5, 32)
    rsa_instances: int = 10
    rsa_n_levels: tuple = (7, 18, 28)
    rsa_size_levels: tuple = (2.60e5, 6.55e5, 10.40e5)
    rsa_spacing_levels: tuple = (0.80e7, 2.02e7, 3.20e7)
    seed: int = 0


@dataclass
class ImageRecord:
    file: str
    n: int
    size: float
    spacing: float
    instance: int
    seed: int
    features: dict = field(default_factory=dict)
    condition: int | None = None

    def params(self) -> StimulusParams:
        return StimulusParams(self.n, self.size, self.spacing)


def image_seed(master_seed, dataset_name, index):
    """Per-image seed derived from (master seed, dataset, index)."""
    code = _DATASET_CODES[dataset_name]
    ss = np.random.SeedSequence([int(master_seed), code, int(index)])
    return int(ss.generate_state(1)[0])


def _render_job(args):
    n, size, spacing, canvas, ref_size, gap, seed = args
    img = render_image(StimulusParams(n, size, spacing), canvas=tuple(canvas),
                       seed=seed, ref_size=ref_size, gap=gap)
    return img.pixels


def worker_count():
    value = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _render_all(jobs):
    workers = worker_count()
    if workers == 1 or len(jobs) < 2 * workers:
        return [_render_job(j) for j in jobs]
    from multiprocessing import Pool
    with Pool(workers) as pool:
        return pool.map(_render_job, jobs, chunksize=16)


def _write_image_set(out_dir, records, canvas, ref_size, gap):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(rec.n, rec.size, rec.spacing, canvas, ref_size, gap, rec.seed)
            for rec in records]
    for rec, pixels in zip(records, _render_all(jobs)):
        write_pgm(out_dir / rec.file, pixels)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "image_size": list(canvas),
        "ref_size": ref_size,
        "gap": gap,
        "images": [asdict(rec) for rec in records],
    }
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(directory):
    with open(Path(directory) / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema in {directory}")
    records = [ImageRecord(**rec) for rec in manifest["images"]]
    return manifest, records


def load_images(directory, records=None):
    """Load a rendered set as a float (n_images, n_pixels) binary matrix."""
    if records is None:
        _, records = load_manifest(directory)
    rows = [read_pgm(Path(directory) / rec.file).ravel().astype(float)
            for rec in records]
    return np.array(rows), records


def validate_manifest(directory, tsa_tolerance=0.10, sample=None, rng=None):
    """Check listed files exist and round-trip through measure_image.

    Returns the number of images checked; raises on the first violation.
    """
    _, records = load_manifest(directory)
    if sample is not None and sample < len(records):
        rng = rng or np.random.default_rng(0)
        records = [records[i] for i in rng.choice(len(records), sample, replace=False)]
    manifest, _ = load_manifest(directory)
    scale = min(manifest["image_size"]) / manifest["ref_size"]
    for rec in records:
        path = Path(directory) / rec.file
        if not path.exists():
            raise FileNotFoundError(f"manifest lists missing file {path}")
        measured, count = measure_image(read_pgm(path))
        if count != rec.n:
            raise ValueError(f"{rec.file}: measured {count} dots, manifest says {rec.n}")
        analytic_tsa = derive_features(rec.params()).tsa * scale * scale
        if abs(measured.tsa - analytic_tsa) > tsa_tolerance * analytic_tsa:
            raise ValueError(f"{rec.file}: measured TSA {measured.tsa:.1f} vs "
                             f"analytic {analytic_tsa:.1f}")
    return len(records)


def _grid_records(config):
    from .stimspace import build_grid
    grid = build_grid(config.n_range, config.size_range, config.spacing_range,
                      config.levels_per_dim)
    records = []
    idx = 0
    for point in grid:
        for inst in range(config.instances):
            records.append(ImageRecord(
                file=f"img{idx:05d}.pgm", n=point.n, size=point.size,
                spacing=point.spacing, instance=inst,
                seed=image_seed(config.seed, "comparison", idx),
                features=asdict(derive_features(point))))
            idx += 1
    return records


def _unsup_records(config):
    lo, hi = config.unsup_n_range
    ns = list(range(lo, hi + 1))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 20]))
    log_sz = np.log2(config.size_range)
    log_sp = np.log2(config.spacing_range)
    records = []
    for idx in range(config.unsup_count):
        n = ns[idx % len(ns)]
        for _ in range(1000):
            size = float(2.0 ** rng.uniform(*log_sz))
            spacing = float(2.0 ** rng.uniform(*log_sp))
            p = StimulusParams(n, size, spacing)
            if is_renderable(p, config.canvas, config.ref_size, config.gap):
                break
        else:
            raise PlacementError(f"no renderable parameters found for n={n}")
        records.append(ImageRecord(
            file=f"img{idx:05d}.pgm", n=n, size=size, spacing=spacing,
            instance=0, seed=image_seed(config.seed, "unsup", idx),
            features=asdict(derive_features(p))))
    return records


def _rsa_records(config):
    records = []
    idx = 0
    condition = 0
    for n in config.rsa_n_levels:
        for size in config.rsa_size_levels:
            for spacing in config.rsa_spacing_levels:
                point = StimulusParams(int(n), float(size), float(spacing))
                for inst in range(config.rsa_instances):
                    records.append(ImageRecord(
                        file=f"img{idx:05d}.pgm", n=point.n, size=point.size,
                        spacing=point.spacing, instance=inst,
                        seed=image_seed(config.seed, "rsa", idx),
                        features=asdict(derive_features(point)),
                        condition=condition))
                    idx += 1
                condition += 1
    return records


def sample_model_pairs(records, n_train, n_test, rng):
    """Uniform random image pairs with distinct numerosity.

    Returns (train, test) lists of index pairs; the two lists are disjoint
    as sets of unordered pairs. Raises if the image set cannot supply
    enough distinct pairs.
    """
    n_images = len(records)
    ns = np.array([rec.n for rec in records])
    wanted = n_train + n_test
    seen = set()
    pairs = []
    attempts = 0
    max_attempts = max(100_000, wanted * 50)
    while len(pairs) < wanted:
        attempts += 1
        if attempts > max_attempts:
            raise ValueError(
                f"could not draw {wanted} distinct unequal-n pairs from "
                f"{n_images} images")
        i, j = rng.integers(0, n_images, size=2)
        if i == j or ns[i] == ns[j]:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        pairs.append((int(i), int(j)))
    return pairs[:n_train], pairs[n_train:]


def sample_human_pairs(records, total, rng):
    """Pairs oversampling hard numerosity ratios with exact bucket counts.

    Bucket shares follow the human protocol: 10% of pairs with numerosity
    ratio in [0.5, 0.6), 20% in [0.6, 0.7), 30% in [0.7, 0.8) and 40% in
    [0.8, 0.9). `total` must split exactly into those shares.
    """
    counts = []
    for lo, hi, share in HUMAN_RATIO_BUCKETS:
        c = total * share
        if abs(c - round(c)) > 1e-9:
            raise ValueError(f"total {total} does not split into exact bucket counts")
        counts.append(int(round(c)))
    ns = np.array([rec.n for rec in records])
    pairs = []
    for (lo, hi, _), count in zip(HUMAN_RATIO_BUCKETS, counts):
        eligible = [(i, j) for i in range(len(records)) for j in range(len(records))
                    if i < j and ns[i] != ns[j]
                    and lo <= min(ns[i], ns[j]) / max(ns[i], ns[j]) < hi]
        if not eligible:
            raise ValueError(f"no image pairs with numerosity ratio in [{lo}, {hi})")
        chosen = rng.integers(0, len(eligible), size=count)
        for k in chosen:
            i, j = eligible[int(k)]
            if rng.random() < 0.5:
                i, j = j, i
            pairs.append((i, j))
    return pairs


def write_pairs_csv(path, pairs, records):
    """Persist index pairs as the pair-list CSV (ratios are right/left)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIR_COLUMNS)
        for pair_id, (i, j) in enumerate(pairs):
            left, right = records[i], records[j]
            writer.writerow([
                pair_id, left.file, right.file,
                repr(right.n / left.n), repr(right.size / left.size),
                repr(right.spacing / left.spacing),
                "right" if right.n > left.n else "left",
            ])


@dataclass
class PairRow:
    pair_id: int
    left_image: str
    right_image: str
    r_num: float
    r_size: float
    r_spacing: float
    correct_side: str


def read_pairs_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != PAIR_COLUMNS:
            raise ValueError(f"bad pair CSV header {header}")
        for row in reader:
            rows.append(PairRow(int(row[0]), row[1], row[2], float(row[3]),
                                float(row[4]), float(row[5]), row[6]))
    return rows


def build_datasets(config: DatasetConfig, out_dir):
    """Render and persist all datasets under `out_dir`.

    Writes comparison/, unsup/ and rsa/ image directories with manifests,
    plus pairs_train.csv, pairs_test.csv and (when configured)
    pairs_human.csv sampled from the comparison set.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    comparison = _grid_records(config)
    _write_image_set(out_dir / "comparison", comparison, config.canvas,
                     config.ref_size, config.gap)

    rng_pairs = np.random.default_rng(np.random.SeedSequence([config.seed, 10]))
    train, test = sample_model_pairs(comparison, config.n_train_pairs,
                                     config.n_test_pairs, rng_pairs)
    write_pairs_csv(out_dir / "pairs_train.csv", train, comparison)
    write_pairs_csv(out_dir / "pairs_test.csv", test, comparison)
    if config.n_human_pairs:
        rng_human = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
        human = sample_human_pairs(comparison, config.n_human_pairs, rng_human)
        write_pairs_csv(out_dir / "pairs_human.csv", human, comparison)

    unsup = _unsup_records(config)
    _write_image_set(out_dir / "unsup", unsup, config.canvas,
                     config.ref_size, config.gap)

    rsa = _rsa_records(config)
    _write_image_set(out_dir / "rsa", rsa, config.canvas,
                     config.ref_size, config.gap)

    return {
        "comparison_images": len(comparison),
        "unsup_images": len(unsup),
        "rsa_images": len(rsa),
        "rsa_conditions": len({rec.condition for rec in rsa}),
        "train_pairs": len(train),
        "test_pairs": len(test),
        "human_pairs": config.n_human_pairs,
    }
