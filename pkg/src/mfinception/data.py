"""Dataset container, manifest loading, synthetic imagery and CV folds."""

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


@dataclass
class Dataset:
    """Images as float32 NCHW in [0, 1] plus integer labels.

    ``class_names[labels[i]]`` is the human-readable class of image i;
    ``sources[i]`` identifies where it came from (file path or generator
    tag); ``groups`` is the optional manifest group column used to keep
    related samples inside one fold.
    """

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple
    sources: tuple | None = field(default=None, repr=False)
    groups: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise StructuralError(f"images must be NCHW, got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise StructuralError(
                f"{self.images.shape[0]} images but {self.labels.shape} labels"
            )
        self.class_names = tuple(self.class_names)
        if len(self.labels) and not (
            0 <= self.labels.min() and self.labels.max() < len(self.class_names)
        ):
            raise StructuralError("label out of range for class_names")
        for name in ("sources", "groups"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(value)
                if len(value) != len(self.labels):
                    raise StructuralError(f"{name} length != sample count")
                setattr(self, name, value)

    def __len__(self):
        return self.images.shape[0]

    @property
    def num_classes(self):
        return len(self.class_names)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)

        def pick(seq):
            return None if seq is None else tuple(seq[int(i)] for i in indices)

        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            class_names=self.class_names,
            sources=pick(self.sources),
            groups=pick(self.groups),
        )

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)


def _resize_bilinear(chw, resolution):
    """Bilinear-resize a CHW float array with Pillow (one plane at a time)."""
    from PIL import Image

    h, w = resolution
    if chw.shape[1:] == (h, w):
        return chw.astype(np.float32, copy=False)
    planes = [
        np.asarray(
            Image.fromarray(plane.astype(np.float32), mode="F").resize(
                (w, h), Image.BILINEAR
            )
        )
        for plane in chw
    ]
    return np.stack(planes).astype(np.float32)


def _to_chw(arr, channels, source):
    """Coerce a decoded image array to float CHW with `channels` planes."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[None]
    elif arr.ndim == 3:
        # Channels-last (the decoder convention) wins when ambiguous.
        if arr.shape[-1] in (1, 2, 3, 4):
            arr = np.moveaxis(arr, -1, 0)
        elif arr.shape[0] not in (1, 2, 3, 4):
            raise StructuralError(f"{source}: cannot find the channel axis of {arr.shape}")
    else:
        raise StructuralError(f"{source}: expected 2-D or 3-D image, got {arr.shape}")
    arr = arr.astype(np.float32)
    if arr.max(initial=0.0) > 1.5:  # 8-bit style range
        arr = arr / 255.0
    if arr.shape[0] == 4:  # drop alpha
        arr = arr[:3]
    if arr.shape[0] == channels:
        return arr
    if channels == 1:
        return arr.mean(axis=0, keepdims=True)
    if arr.shape[0] == 1:
        return np.repeat(arr, channels, axis=0)
    raise StructuralError(
        f"{source}: has {arr.shape[0]} channels, wanted {channels}"
    )


def _decode(path, channels):
    if path.endswith(".npy"):
        return _to_chw(np.load(path), channels, path)
    from PIL import Image

    with Image.open(path) as img:
        return _to_chw(np.asarray(img), channels, path)


def load_manifest(manifest_path, resolution=(64, 64), channels=3):
    """Read a `path,label[,group]` CSV into a Dataset.

    Image paths are resolved relative to the manifest's directory; sample
    order is manifest order.  Labels are strings; classes are their sorted
    distinct values.  A first row reading `path,label[,group]` is treated
    as a header.  PNG/JPEG/... go through Pillow; `.npy` arrays are taken
    as-is (2-D or 3-D, [0,1] or 8-bit range).  Everything is
    bilinear-resized to `resolution` and scaled into [0, 1].
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    rows = []
    with open(manifest_path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row[:2]] == ["path", "label"]:
                continue
            if len(row) not in (2, 3):
                raise StructuralError(
                    f"{manifest_path}:{lineno}: expected path,label[,group], got {row}"
                )
            path, label = row[0].strip(), row[1].strip()
            group = row[2].strip() if len(row) == 3 and row[2].strip() else None
            if not path or not label:
                raise StructuralError(f"{manifest_path}:{lineno}: empty path or label")
            rows.append((lineno, path, label, group))
    if not rows:
        raise StructuralError(f"{manifest_path}: no usable rows")

    seen = {}
    for lineno, path, label, _ in rows:
        if seen.setdefault(path, label) != label:
            raise StructuralError(
                f"{manifest_path}:{lineno}: {path} listed with labels "
                f"{seen[path]!r} and {label!r} (ambiguous supervision)"
            )

    class_names = tuple(sorted({label for _, _, label, _ in rows}))
    index = {name: i for i, name in enumerate(class_names)}
    images, labels, sources, groups = [], [], [], []
    for lineno, path, label, group in rows:
        full = path if os.path.isabs(path) else os.path.join(base, path)
        if not os.path.exists(full):
            raise StructuralError(f"{manifest_path}:{lineno}: missing image {full}")
        images.append(_resize_bilinear(_decode(full, channels), resolution))
        labels.append(index[label])
        sources.append(path)
        groups.append(group)
    has_groups = any(g is not None for g in groups)
    return Dataset(
        images=np.stack(images),
        labels=np.asarray(labels, dtype=np.int64),
        class_names=class_names,
        sources=tuple(sources),
        groups=tuple(groups) if has_groups else None,
    )


def generate_synthetic(num_classes=4, per_class=109, resolution=(64, 64), seed=0,
                       channels=3, noise_std=0.05, class_counts=None):
    """Synthetic oriented-grating imagery, one orientation/frequency per class.

    Class c is a sinusoidal grating at angle pi*c/num_classes with frequency
    2+c cycles per image, small random phase jitter and optional Gaussian
    pixel noise.  The jitter is kept small so the class mean stays
    informative: with noise_std 0 a nearest-centroid rule on raw pixels
    separates the classes, which the tests use as an oracle.  class_counts
    overrides the uniform per_class sizes (e.g. to mirror an imbalanced
    corpus such as 4 classes over 436 images).
    """
    if class_counts is None:
        class_counts = [per_class] * num_classes
    if len(class_counts) != num_classes or any(c < 1 for c in class_counts):
        raise StructuralError(f"bad class_counts {class_counts}")
    h, w = resolution
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(
        np.arange(h, dtype=np.float64) / h,
        np.arange(w, dtype=np.float64) / w,
        indexing="ij",
    )
    gains = np.asarray([1.0 - 0.08 * (c % 3) for c in range(channels)])
    images, labels, sources = [], [], []
    for c, count in enumerate(class_counts):
        theta = np.pi * c / num_classes
        freq = 2.0 + c
        axis = xs * np.cos(theta) + ys * np.sin(theta)
        for i in range(count):
            phase = rng.uniform(0.0, 0.5)
            img = 0.5 + 0.35 * np.sin(2.0 * np.pi * freq * axis + phase)
            chw = img[None, :, :] * gains[:, None, None]
            if noise_std > 0:
                chw = chw + rng.normal(0.0, noise_std, size=chw.shape)
            images.append(np.clip(chw, 0.0, 1.0))
            labels.append(c)
            sources.append(f"synthetic:{c}:{i}")
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    order = rng.permutation(len(labels))
    return Dataset(
        images=images[order],
        labels=labels[order],
        class_names=tuple(f"grating{c}" for c in range(num_classes)),
        sources=tuple(sources[int(i)] for i in order),
    )


@dataclass(frozen=True)
class FoldPlan:
    """A fold index per sample: the layout of one cross-validation run."""

    num_folds: int
    assignments: np.ndarray  # fold index per sample
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", a)
        if a.ndim != 1 or len(a) == 0:
            raise StructuralError("fold assignments must be a non-empty vector")
        if a.min() < 0 or a.max() >= self.num_folds:
            raise StructuralError(f"fold index outside 0..{self.num_folds - 1}")

    def __len__(self):
        return len(self.assignments)

    def fold_indices(self, fold):
        if not 0 <= fold < self.num_folds:
            raise StructuralError(f"no fold {fold} in a {self.num_folds}-fold plan")
        return np.flatnonzero(self.assignments == fold)

    def splits(self):
        """(train_indices, valid_indices) per fold, validation = that fold."""
        return [
            (np.flatnonzero(self.assignments != f), self.fold_indices(f))
            for f in range(self.num_folds)
        ]

    def fold_sizes(self):
        return np.bincount(self.assignments, minlength=self.num_folds)


def stratified_folds(dataset, num_folds=3, seed=0):
    """Stratified fold layout over a Dataset (or a raw label vector).

    Within each class, samples are seeded-shuffled and dealt round-robin,
    with the dealing position carried over between classes: overall fold
    sizes differ by at most one and each class's share is within one of
    proportional.  When the dataset carries groups, each group is dealt as
    a unit (kept inside one fold, labelled by its majority class) and the
    per-class balance becomes best-effort.
    """
    labels = np.asarray(getattr(dataset, "labels", dataset))
    groups = getattr(dataset, "groups", None)
    if labels.ndim != 1 or len(labels) == 0:
        raise StructuralError("labels must be a non-empty 1-D array")
    if num_folds < 2:
        raise StructuralError(f"need at least 2 folds (got {num_folds})")
    if num_folds > len(labels):
        raise StructuralError(
            f"{num_folds} folds over {len(labels)} samples"
        )
    rng = np.random.default_rng(seed)

    # Units are single samples, or whole groups when groups are present.
    if groups is None:
        units = [[i] for i in range(len(labels))]
    else:
        by_group, solo = {}, []
        for i, g in enumerate(groups):
            if g is None:
                solo.append([i])
            else:
                by_group.setdefault(g, []).append(i)
        units = sorted(by_group.values()) + solo
    unit_label = [np.bincount(labels[u]).argmax() for u in units]

    assignments = np.full(len(labels), -1, dtype=np.int64)
    cursor = 0
    for cls in np.unique(unit_label):
        members = [u for u, l in zip(units, unit_label) if l == cls]
        if len(members) < num_folds and groups is None:
            warnings.warn(
                f"class {cls} has {len(members)} sample(s) for {num_folds} "
                f"folds; some folds get none",
                stacklevel=2,
            )
        order = rng.permutation(len(members))
        for j, u in enumerate(order):
            for i in members[u]:
                assignments[i] = (cursor + j) % num_folds
        cursor = (cursor + len(members)) % num_folds
    return FoldPlan(num_folds=num_folds, assignments=assignments, seed=seed)
