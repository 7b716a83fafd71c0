"""Dataset ingestion, synthetic imbalanced ordinal data, grouped splits.

Manifests are JSONL: a header line with the format tag, the number of
ordinal levels, and normalization metadata, followed by one sample per
line. A CSV adapter (id,label,group,feat_0..feat_{d-1}[,seq]) is also
accepted. Group-based splitting partitions whole groups (the patient
analog) so no group spans train/val/test within a fold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MANIFEST_FORMAT = "ordinal-manifest-v1"


class DataError(ValueError):
    """Malformed manifest, invalid generator arguments, or bad split spec."""


@dataclass
class Sample:
    """One item: features, hidden ordinal label, group id, optional capture order."""

    id: str
    features: np.ndarray
    ordinal_label: int
    group_id: str
    sequence_pos: int | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 1:
            raise DataError(f"sample {self.id!r}: features must be a vector")
        if not np.isfinite(self.features).all():
            raise DataError(f"sample {self.id!r}: non-finite features")
        if not self.group_id:
            raise DataError(f"sample {self.id!r}: empty group id")


@dataclass
class DatasetManifest:
    samples: list[Sample]
    num_levels: int
    normalization: dict = field(default_factory=lambda: {"kind": "none"})

    def __post_init__(self) -> None:
        if not self.samples:
            raise DataError("manifest has no samples")
        if self.num_levels < 2:
            raise DataError(f"num_levels must be >= 2, got {self.num_levels}")
        seen: set[str] = set()
        dim = self.samples[0].features.shape[0]
        for sample in self.samples:
            if sample.id in seen:
                raise DataError(f"duplicate sample id {sample.id!r}")
            seen.add(sample.id)
            if not 0 <= sample.ordinal_label < self.num_levels:
                raise DataError(
                    f"sample {sample.id!r}: label {sample.ordinal_label} outside "
                    f"[0, {self.num_levels - 1}]"
                )
            if sample.features.shape[0] != dim:
                raise DataError(f"sample {sample.id!r}: feature dim {sample.features.shape[0]} != {dim}")

    @property
    def feature_dim(self) -> int:
        return self.samples[0].features.shape[0]

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}

    def labels(self) -> dict[str, int]:
        return {s.id: s.ordinal_label for s in self.samples}

    def features(self) -> dict[str, np.ndarray]:
        return {s.id: s.features for s in self.samples}

    def class_counts(self) -> dict[int, int]:
        counts = {c: 0 for c in range(self.num_levels)}
        for s in self.samples:
            counts[s.ordinal_label] += 1
        return counts


def _read_netpbm(path: Path) -> np.ndarray:
    """Read a small PGM/PPM raster and return grayscale pixels in [0, 1].

    Handles the ascii (P2/P3) and binary (P5/P6) variants; color images
    are averaged down to one channel. This is deliberately minimal: tiny
    thumbnails, 8-bit depth.
    """
    raw = path.read_bytes()
    # Tokenize the header: magic, width, height, maxval, skipping comments.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated netpbm header")
        tokens.append(raw[start:pos])
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise DataError(f"{path}: unsupported raster magic {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if width < 1 or height < 1 or maxval < 1 or maxval > 255:
        raise DataError(f"{path}: bad raster dimensions or depth")
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P5", "P6"):
        data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos + 1)
        pixels = data.astype(np.float64)
    else:
        body = raw[pos:].split()
        if len(body) < count:
            raise DataError(f"{path}: raster body too short")
        pixels = np.array([float(int(v)) for v in body[:count]])
    pixels = pixels.reshape(height * width, channels).mean(axis=1)
    return pixels / float(maxval)


def _parse_sample_line(doc: dict, lineno: int, base_dir: Path) -> Sample:
    try:
        seq = doc.get("seq")
        if "image" in doc:
            features = _read_netpbm(base_dir / str(doc["image"]))
        else:
            features = np.asarray(doc["features"], dtype=np.float64)
        return Sample(
            id=str(doc["id"]),
            features=features,
            ordinal_label=int(doc["label"]),
            group_id=str(doc["group"]),
            sequence_pos=None if seq is None else int(seq),
        )
    except KeyError as exc:
        raise DataError(f"line {lineno}: missing field {exc.args[0]!r}") from exc


def _load_jsonl(path: Path) -> DatasetManifest:
    with path.open() as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError("line 1: missing manifest header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line 1: invalid JSON header ({exc.msg})") from exc
        if header.get("format") != MANIFEST_FORMAT:
            raise DataError(f"line 1: unsupported format {header.get('format')!r}")
        num_levels = int(header.get("num_levels", 0))
        normalization = header.get("normalization", {"kind": "none"})

        samples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            samples.append(_parse_sample_line(doc, lineno, path.parent))

    samples = _apply_normalization(samples, normalization)
    return DatasetManifest(samples=samples, num_levels=num_levels)


def _apply_normalization(samples: list[Sample], normalization: dict) -> list[Sample]:
    kind = normalization.get("kind", "none")
    if kind == "none":
        return samples
    if kind != "minmax":
        raise DataError(f"unknown normalization kind {kind!r}")
    lo = np.asarray(normalization["lo"], dtype=np.float64)
    hi = np.asarray(normalization["hi"], dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    for sample in samples:
        sample.features = np.clip((sample.features - lo) / span, 0.0, 1.0)
    return samples


def _load_csv(path: Path) -> DatasetManifest:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("line 1: empty CSV") from None
        if header[:3] != ["id", "label", "group"]:
            raise DataError("line 1: CSV header must start with id,label,group")
        feat_cols = [i for i, name in enumerate(header) if name.startswith("feat_")]
        seq_col = header.index("seq") if "seq" in header else None
        if not feat_cols:
            raise DataError("line 1: no feat_* columns")
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                features = np.array([float(row[i]) for i in feat_cols])
                seq = None
                if seq_col is not None and row[seq_col] != "":
                    seq = int(row[seq_col])
                samples.append(
                    Sample(
                        id=row[0],
                        features=features,
                        ordinal_label=int(row[1]),
                        group_id=row[2],
                        sequence_pos=seq,
                    )
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
    if not samples:
        raise DataError("CSV has no samples")
    num_levels = max(s.ordinal_label for s in samples) + 1
    return DatasetManifest(samples=samples, num_levels=max(num_levels, 2))


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a JSONL manifest (or CSV by extension)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    return _load_jsonl(path)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write JSONL with the in-memory (already normalized) features."""
    path = Path(path)
    header = {
        "format": MANIFEST_FORMAT,
        "num_levels": manifest.num_levels,
        "normalization": {"kind": "none"},
    }
    with path.open("w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in manifest.samples:
            doc = {
                "id": s.id,
                "label": s.ordinal_label,
                "group": s.group_id,
                "seq": s.sequence_pos,
                "features": s.features.tolist(),
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def synth_generate(
    n: int,
    priors: Sequence[float],
    dim: int,
    noise: float,
    seed: int,
    group_size: int = 10,
) -> DatasetManifest:
    """Generate an imbalanced ordinal dataset.

    Class c has its center at ``c * e`` for a fixed unit direction e (the
    normalized all-ones vector); features add isotropic Gaussian noise of
    scale ``noise``. Labels are drawn iid from ``priors``. Group ids are
    assigned in contiguous blocks of ``group_size`` with the within-block
    position recorded as the capture order.
    """
    priors = np.asarray(priors, dtype=np.float64)
    if priors.ndim != 1 or len(priors) < 2:
        raise DataError("priors must list at least two class probabilities")
    if (priors <= 0).any():
        raise DataError("priors must all be positive")
    if abs(priors.sum() - 1.0) > 1e-9:
        raise DataError(f"priors must sum to 1, got {priors.sum()}")
    priors = priors / priors.sum()
    if dim < 1:
        raise DataError(f"dim must be >= 1, got {dim}")
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    if noise < 0:
        raise DataError(f"noise must be nonnegative, got {noise}")
    if group_size < 1:
        raise DataError(f"group_size must be >= 1, got {group_size}")

    rng = np.random.default_rng(seed)
    labels = rng.choice(len(priors), size=n, p=priors)
    direction = np.ones(dim) / np.sqrt(dim)
    features = labels[:, None] * direction[None, :] + rng.normal(0.0, noise, size=(n, dim))

    samples = []
    for idx in range(n):
        samples.append(
            Sample(
                id=f"s{idx:06d}",
                features=features[idx],
                ordinal_label=int(labels[idx]),
                group_id=f"g{idx // group_size:04d}",
                sequence_pos=idx % group_size,
            )
        )
    return DatasetManifest(samples=samples, num_levels=len(priors))


@dataclass(frozen=True)
class SplitSpec:
    """Grouped-split parameters; fractions are percentages summing to 100."""

    fold_count: int = 5
    train_frac: float = 60.0
    val_frac: float = 20.0
    test_frac: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.fold_count < 2:
            raise DataError(f"fold_count must be >= 2, got {self.fold_count}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 100.0) > 1e-9:
            raise DataError(f"split fractions must sum to 100, got {total}")


class SplitFold(NamedTuple):
    train: set[str]
    val: set[str]
    test: set[str]


def group_kfold_split(manifest: DatasetManifest, spec: SplitSpec) -> list[SplitFold]:
    """Partition groups (never individual samples) into per-fold train/val/test.

    Groups are shuffled once, split into ``fold_count`` chunks, and chunk f
    becomes the test part of fold f, so every group is tested exactly once.
    The validation part takes the next groups in cyclic order until the val
    fraction is covered; the rest train.
    """
    groups = sorted({s.group_id for s in manifest.samples})
    if len(groups) < spec.fold_count:
        raise DataError(
            f"need at least {spec.fold_count} distinct groups, got {len(groups)}"
        )
    rng = np.random.default_rng(spec.seed)
    order = [groups[i] for i in rng.permutation(len(groups))]
    chunks = [list(chunk) for chunk in np.array_split(np.array(order), spec.fold_count)]

    members: dict[str, list[str]] = {g: [] for g in groups}
    for s in manifest.samples:
        members[s.group_id].append(s.id)

    n_val = int(round(spec.val_frac / 100.0 * len(groups)))
    folds = []
    for f in range(spec.fold_count):
        test_groups = chunks[f]
        rest: list[str] = []
        for offset in range(1, spec.fold_count):
            rest.extend(chunks[(f + offset) % spec.fold_count])
        val_groups = rest[:n_val]
        train_groups = rest[n_val:]
        if not train_groups:
            raise DataError("split leaves no training groups; lower val_frac or fold_count")
        folds.append(
            SplitFold(
                train={sid for g in train_groups for sid in members[g]},
                val={sid for g in val_groups for sid in members[g]},
                test={sid for g in test_groups for sid in members[g]},
            )
        )
    return folds
