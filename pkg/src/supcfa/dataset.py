"""Two-modal labelled documents: ingestion, synthetic generation, k-fold plans.

Features are stored as row vectors, one document per row, so a projection
into the shared space is ``features @ omega``.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .tensor import random_orthonormal

__all__ = [
    "DatasetError",
    "Document",
    "Dataset",
    "FoldPlan",
    "SyntheticSpec",
    "sign_labels",
    "load_dataset",
    "save_dataset",
    "generate_synthetic",
    "make_folds",
    "standardize",
    "Standardizer",
]


class DatasetError(ValueError):
    pass


class Document(NamedTuple):
    image_features: np.ndarray
    text_features: np.ndarray
    label: np.ndarray


def sign_labels(classes, num_classes):
    """One-of-m encoding in {+1, -1}: row i is +1 at ``classes[i]``, -1 elsewhere."""
    classes = np.asarray(classes, dtype=np.int64)
    y = -np.ones((classes.shape[0], num_classes))
    y[np.arange(classes.shape[0]), classes] = 1.0
    return y


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of image/text feature pairs with class indices.

    ``classes`` holds indices ``0..num_classes-1``; ``class_ids`` maps each
    index back to the identifier found in the source file.
    """

    images: np.ndarray
    texts: np.ndarray
    classes: np.ndarray
    num_classes: int
    class_ids: tuple = field(default=())

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        texts = np.array(self.texts, dtype=np.float64)
        classes = np.array(self.classes, dtype=np.int64)
        if images.ndim != 2 or texts.ndim != 2 or classes.ndim != 1:
            raise DatasetError("images/texts must be 2-D and classes 1-D")
        n = classes.shape[0]
        if n == 0:
            raise DatasetError("empty dataset")
        if images.shape[0] != n or texts.shape[0] != n:
            raise DatasetError(
                f"row counts disagree: {images.shape[0]} images, "
                f"{texts.shape[0]} texts, {n} labels"
            )
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if classes.min() < 0 or classes.max() >= self.num_classes:
            raise DatasetError("class index out of range")
        if not (np.all(np.isfinite(images)) and np.all(np.isfinite(texts))):
            raise DatasetError("non-finite feature value")
        for arr in (images, texts, classes):
            arr.setflags(write=False)
        ids = tuple(self.class_ids) or tuple(range(self.num_classes))
        if len(ids) != self.num_classes:
            raise DatasetError("class_ids length must equal num_classes")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "texts", texts)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "class_ids", ids)

    @property
    def n(self):
        return self.classes.shape[0]

    @property
    def d_image(self):
        return self.images.shape[1]

    @property
    def d_text(self):
        return self.texts.shape[1]

    @property
    def labels(self):
        return sign_labels(self.classes, self.num_classes)

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return Document(self.images[i], self.texts[i], self.labels[i])

    @property
    def documents(self):
        y = self.labels
        return [Document(self.images[i], self.texts[i], y[i]) for i in range(self.n)]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.images[index],
            self.texts[index],
            self.classes[index],
            self.num_classes,
            self.class_ids,
        )

    def with_features(self, images, texts):
        return Dataset(images, texts, self.classes, self.num_classes, self.class_ids)

    def with_classes(self, classes):
        return Dataset(self.images, self.texts, classes, self.num_classes, self.class_ids)

    def class_counts(self):
        return np.bincount(self.classes, minlength=self.num_classes)


def _from_records(images, texts, raw_classes):
    if not raw_classes:
        raise DatasetError("empty dataset")
    d_image, d_text = len(images[0]), len(texts[0])
    for i, (im, tx) in enumerate(zip(images, texts)):
        if len(im) != d_image:
            raise DatasetError(
                f"record {i}: image vector has length {len(im)}, expected {d_image}"
            )
        if len(tx) != d_text:
            raise DatasetError(
                f"record {i}: text vector has length {len(tx)}, expected {d_text}"
            )
    ids = sorted(set(raw_classes))
    lookup = {c: k for k, c in enumerate(ids)}
    classes = [lookup[c] for c in raw_classes]
    return Dataset(
        np.array(images, dtype=np.float64).reshape(len(images), d_image),
        np.array(texts, dtype=np.float64).reshape(len(texts), d_text),
        np.array(classes, dtype=np.int64),
        len(ids),
        tuple(ids),
    )


def _load_jsonl(path):
    images, texts, classes = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            i = len(classes)
            try:
                rec = json.loads(line)
                images.append([float(x) for x in rec["image"]])
                texts.append([float(x) for x in rec["text"]])
                classes.append(int(rec["class"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"record {i} (line {lineno + 1}): {exc}") from exc
    return _from_records(images, texts, classes)


def _csv_pair_paths(path):
    path = Path(path)
    name = path.name
    for suffix in (".image.csv", ".text.csv"):
        if name.endswith(suffix):
            path = path.with_name(name[: -len(suffix)])
            break
    return (
        path.with_name(path.name + ".image.csv"),
        path.with_name(path.name + ".text.csv"),
    )


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _load_csv_pair(path):
    image_path, text_path = _csv_pair_paths(path)
    image_rows = _read_csv(image_path)
    text_rows = _read_csv(text_path)
    if not image_rows or not text_rows:
        raise DatasetError("empty dataset")
    image_header, image_rows = image_rows[0], image_rows[1:]
    text_rows = text_rows[1:]
    if not image_header or image_header[0] != "class":
        raise DatasetError(f"{image_path}: first column must be 'class'")
    if len(image_rows) != len(text_rows):
        raise DatasetError(
            f"row count mismatch: {len(image_rows)} image rows, {len(text_rows)} text rows"
        )
    images, texts, classes = [], [], []
    for i, (im, tx) in enumerate(zip(image_rows, text_rows)):
        try:
            classes.append(int(im[0]))
            images.append([float(x) for x in im[1:]])
            texts.append([float(x) for x in tx])
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"record {i}: {exc}") from exc
    return _from_records(images, texts, classes)


def load_dataset(path, format="jsonl"):
    """Read a dataset file.

    ``jsonl`` expects one ``{"image": [...], "text": [...], "class": int}``
    object per line. ``csv-pair`` expects ``<stem>.image.csv`` (a ``class``
    column followed by image features) and a row-aligned
    ``<stem>.text.csv``; ``path`` may be the stem or either file. Both files
    carry a header row.
    """
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "csv-pair":
        return _load_csv_pair(path)
    raise DatasetError(f"unknown dataset format {format!r}")


def save_dataset(dataset, path, format="jsonl"):
    if format == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for im, tx, c in zip(dataset.images, dataset.texts, dataset.classes):
                rec = {
                    "image": im.tolist(),
                    "text": tx.tolist(),
                    "class": dataset.class_ids[c],
                }
                fh.write(json.dumps(rec) + "\n")
    elif format == "csv-pair":
        image_path, text_path = _csv_pair_paths(path)
        with open(image_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class"] + [f"i{j}" for j in range(dataset.d_image)])
            for im, c in zip(dataset.images, dataset.classes):
                w.writerow([dataset.class_ids[c]] + [repr(float(x)) for x in im])
        with open(text_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"t{j}" for j in range(dataset.d_text)])
            for tx in dataset.texts:
                w.writerow([repr(float(x)) for x in tx])
    else:
        raise DatasetError(f"unknown dataset format {format!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic two-modal generator.

    ``class_separation`` is the norm of every class mean in the latent
    space and ``latent_sigma`` the within-class spread around it.
    """

    n: int
    d_image: int
    d_text: int
    num_classes: int
    shared_dim: int
    noise_sigma: float = 0.0
    seed: int = 0
    class_separation: float = 4.0
    latent_sigma: float = 1.0

    @classmethod
    def from_dict(cls, raw):
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise DatasetError(f"unknown synthetic spec keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise DatasetError(f"invalid synthetic spec: {exc}") from exc

    def validate(self):
        if min(self.n, self.d_image, self.d_text, self.num_classes, self.shared_dim) < 1:
            raise DatasetError("n, dimensions and num_classes must be positive")
        if self.shared_dim > min(self.d_image, self.d_text):
            raise DatasetError("shared_dim must not exceed min(d_image, d_text)")
        if self.n < self.num_classes:
            raise DatasetError("n must be at least num_classes")
        if self.noise_sigma < 0 or self.latent_sigma < 0 or self.class_separation < 0:
            raise DatasetError("scales must be non-negative")


def _class_means(num_classes, shared_dim, separation, rng):
    if num_classes <= shared_dim:
        # orthogonal directions: every pair of means is separation*sqrt(2) apart
        q, _ = np.linalg.qr(rng.standard_normal((shared_dim, num_classes)))
        return separation * q.T
    raw = rng.standard_normal((num_classes, shared_dim))
    return separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)


def generate_synthetic(spec):
    """Sample a dataset whose modalities are noisy linear images of one latent.

    Classes are assigned round-robin and then shuffled. Each document draws
    ``z = mean[class] + latent_sigma * N(0, I)`` in ``R^shared_dim``; its
    features are ``z @ A_I + noise`` and ``z @ A_T + noise`` with ``A_I``,
    ``A_T`` random maps with orthonormal rows.
    """
    if isinstance(spec, dict):
        spec = SyntheticSpec.from_dict(spec)
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    map_seeds = rng.integers(0, 2**63 - 1, size=2)
    a_image = random_orthonormal(spec.d_image, spec.shared_dim, int(map_seeds[0])).T
    a_text = random_orthonormal(spec.d_text, spec.shared_dim, int(map_seeds[1])).T
    means = _class_means(spec.num_classes, spec.shared_dim, spec.class_separation, rng)

    classes = rng.permutation(np.arange(spec.n) % spec.num_classes)
    z = means[classes] + spec.latent_sigma * rng.standard_normal((spec.n, spec.shared_dim))
    images = z @ a_image + spec.noise_sigma * rng.standard_normal((spec.n, spec.d_image))
    texts = z @ a_text + spec.noise_sigma * rng.standard_normal((spec.n, spec.d_text))
    return Dataset(images, texts, classes, spec.num_classes)


@dataclass(frozen=True)
class FoldPlan:
    num_folds: int
    assignments: np.ndarray
    seed: int

    def test_index(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold):
        return np.flatnonzero(self.assignments != fold)

    def sizes(self):
        return np.bincount(self.assignments, minlength=self.num_folds)


def make_folds(dataset, k, seed):
    n = len(dataset) if not isinstance(dataset, (int, np.integer)) else int(dataset)
    if k < 2:
        raise DatasetError(f"need at least 2 folds, got {k}")
    if k > n:
        raise DatasetError(f"cannot split {n} documents into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k, assignments, seed)


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature centring and scaling fitted on one dataset."""

    image_mean: np.ndarray
    image_scale: np.ndarray
    text_mean: np.ndarray
    text_scale: np.ndarray

    @classmethod
    def fit(cls, dataset, eps=1e-12):
        def stats(x):
            sd = x.std(axis=0)
            # constant columns are centred but left unscaled
            return x.mean(axis=0), np.where(sd > eps, sd, 1.0)

        im, isd = stats(dataset.images)
        tm, tsd = stats(dataset.texts)
        return cls(im, isd, tm, tsd)

    def transform_features(self, x, modality):
        if modality == "image":
            return (np.asarray(x, dtype=np.float64) - self.image_mean) / self.image_scale
        if modality == "text":
            return (np.asarray(x, dtype=np.float64) - self.text_mean) / self.text_scale
        raise ValueError(f"unknown modality {modality!r}")

    def transform(self, dataset):
        return dataset.with_features(
            self.transform_features(dataset.images, "image"),
            self.transform_features(dataset.texts, "text"),
        )

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, raw):
        return cls(**{k: np.asarray(raw[k], dtype=np.float64) for k in cls.__dataclass_fields__})


def standardize(train, *others):
    """Centre and scale every feature with statistics of ``train`` only.

    Returns the transformed ``train`` followed by each of ``others``.
    """
    st = Standardizer.fit(train)
    out = [st.transform(d) for d in (train, *others)]
    return out[0] if not others else tuple(out)
