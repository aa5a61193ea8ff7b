"""Dataset manifests (CSV of image path + true label) and a synthetic
corpus generator for desk-scale experiments.

Corpus images are smooth by construction (low-frequency lattice noise over
a mid-gray base) so a small median filter is close to an identity on clean
inputs, and labels are taken from the target oracle's own clean verdicts.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ManifestError
from .image import Image, load_png, save_png
from .ledger import QueryLedger
from .noise import PerlinLattice, _perlin_raw
from .oracle import Oracle

MANIFEST_HEADER = ["path", "label"]


@dataclass
class DatasetItem:
    item_id: str
    label: int
    image: Image


@dataclass
class LabeledDataset:
    name: str
    items: list[DatasetItem]

    def __post_init__(self):
        if not self.items:
            raise ManifestError(f"dataset {self.name!r} is empty")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def side(self) -> int:
        return self.items[0].image.side

    @property
    def ids(self) -> list[str]:
        return [it.item_id for it in self.items]


def read_manifest(path) -> list[tuple[str, int]]:
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != MANIFEST_HEADER:
                raise ManifestError(f"{path}: expected header 'path,label', got {header}")
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != 2:
                    raise ManifestError(f"{path}:{lineno}: expected 2 columns")
                img_path, label_s = rec
                try:
                    label = int(label_s)
                except ValueError as e:
                    raise ManifestError(f"{path}:{lineno}: label {label_s!r} is not an integer") from e
                if label < 0:
                    raise ManifestError(f"{path}:{lineno}: label must be non-negative")
                full = img_path if os.path.isabs(img_path) else os.path.join(base, img_path)
                if not os.path.exists(full):
                    raise ManifestError(f"{path}:{lineno}: image {img_path!r} does not exist")
                rows.append((full, label))
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    if not rows:
        raise ManifestError(f"{path}: manifest has no rows")
    return rows


def load_dataset(manifest_path, name: str | None = None) -> LabeledDataset:
    rows = read_manifest(manifest_path)
    items = [DatasetItem(item_id=p, label=lbl, image=load_png(p)) for p, lbl in rows]
    sides = {it.image.side for it in items}
    if len(sides) != 1:
        raise ManifestError(f"{manifest_path}: mixed image sides {sorted(sides)}")
    return LabeledDataset(name=name or os.path.basename(str(manifest_path)), items=items)


def check_disjoint(a: LabeledDataset, b: LabeledDataset) -> None:
    overlap = set(a.ids) & set(b.ids)
    if overlap:
        raise ManifestError(f"datasets {a.name!r} and {b.name!r} share "
                            f"{len(overlap)} paths, e.g. {sorted(overlap)[0]!r}")


def synth_image(side: int, rng: np.random.Generator) -> Image:
    """One smooth synthetic image: two low-frequency lattice-noise layers
    over mid-gray, with a small constant per-channel offset."""
    lattice = PerlinLattice.build(int(rng.integers(0, 2**31)))
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    lam1 = rng.uniform(side / 4.0, side)
    lam2 = rng.uniform(side / 8.0, side / 2.0)
    phase = rng.uniform(0.0, 64.0, size=2)
    layer1 = _perlin_raw(xs / lam1 + phase[0], ys / lam1 + phase[0], lattice)
    layer2 = _perlin_raw(xs / lam2 + phase[1], ys / lam2 + phase[1], lattice)
    gray = 128.0 + 70.0 * layer1 + 25.0 * layer2
    offsets = rng.uniform(-8.0, 8.0, size=3)
    pixels = np.clip(gray[:, :, None] + offsets[None, None, :], 0.0, 255.0)
    return Image(pixels)


def generate_corpus(out_dir, count: int, side: int, seed: int, oracle: Oracle) -> str:
    """Write `count` synthetic PNGs plus a manifest whose labels are the
    oracle's clean verdicts.  Returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    ledger = QueryLedger(None)
    rows = []
    for i in range(count):
        img = synth_image(side, rng)
        name = f"img_{i:05d}.png"
        path = os.path.join(out_dir, name)
        save_png(img, path)
        verdict = oracle.classify(load_png(path), top_k=1, ledger=ledger)
        rows.append((name, verdict.top))
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return manifest
