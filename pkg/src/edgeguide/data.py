"""Folder-dataset ingestion and batching.

Datasets follow the layout ``<root>/images/*.{png,jpg}`` plus
``<root>/masks/*.png`` with files paired by filename stem.  Masks are
8-bit grayscale and binarized at 127/255.  Batch order is a pure function
of (manifest, seed), so a fixed seed reproduces the exact stream.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import torch
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
MASK_THRESHOLD = 127
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class DataError(RuntimeError):
    """Raised for missing, unpaired, or undecodable dataset files."""


@dataclass
class DatasetManifest:
    name: str
    split: str = "train"
    stems: list[str] = field(default_factory=list)
    image_paths: list[str] = field(default_factory=list)
    mask_paths: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.stems)


@dataclass
class Batch:
    images: torch.Tensor      # [B,3,S,S] float32, channel-normalized
    images_raw: np.ndarray    # [B,S,S,3] float32 in [0,1], for edge extraction
    masks: torch.Tensor       # [B,1,S,S] float32 in {0,1}
    ids: list[str]


def _verify_decodable(path: str):
    try:
        with Image.open(path) as img:
            img.verify()
    except Exception as exc:
        raise DataError(f"undecodable image file {path}: {exc}") from exc


def load_manifest(root_dir: str, name: str, split: str = "train") -> DatasetManifest:
    """Build a sorted, stem-paired manifest from an images/masks folder pair."""
    images_dir = os.path.join(root_dir, "images")
    masks_dir = os.path.join(root_dir, "masks")
    for d in (images_dir, masks_dir):
        if not os.path.isdir(d):
            raise DataError(f"missing dataset directory: {d}")

    images = {}
    for fname in os.listdir(images_dir):
        stem, ext = os.path.splitext(fname)
        if ext.lower() in IMAGE_EXTENSIONS:
            images[stem] = os.path.join(images_dir, fname)
    masks = {}
    for fname in os.listdir(masks_dir):
        stem, ext = os.path.splitext(fname)
        if ext.lower() == ".png":
            masks[stem] = os.path.join(masks_dir, fname)

    unpaired = sorted(set(images) ^ set(masks))
    if unpaired:
        raise DataError(f"unpaired image/mask stems in {root_dir}: {', '.join(unpaired)}")
    if not images:
        raise DataError(f"empty dataset: no paired samples under {root_dir}")

    manifest = DatasetManifest(name=name, split=split)
    for stem in sorted(images):
        _verify_decodable(images[stem])
        _verify_decodable(masks[stem])
        manifest.stems.append(stem)
        manifest.image_paths.append(images[stem])
        manifest.mask_paths.append(masks[stem])
    return manifest


def merge_manifests(manifests: list[DatasetManifest], name: str) -> DatasetManifest:
    """Merge several manifests, qualifying stems by source to stay unique."""
    if not manifests:
        raise DataError("cannot merge zero manifests")
    merged = DatasetManifest(name=name, split=manifests[0].split)
    entries = []
    for m in manifests:
        for stem, img, mask in zip(m.stems, m.image_paths, m.mask_paths):
            entries.append((f"{m.name}/{stem}", img, mask))
    for stem, img, mask in sorted(entries):
        merged.stems.append(stem)
        merged.image_paths.append(img)
        merged.mask_paths.append(mask)
    return merged


def write_listing(manifest: DatasetManifest, path: str):
    """Cache a manifest as one stem<TAB>image<TAB>mask line per sample."""
    with open(path, "w", encoding="utf-8") as fh:
        for stem, img, mask in zip(manifest.stems, manifest.image_paths, manifest.mask_paths):
            fh.write(f"{stem}\t{img}\t{mask}\n")


def read_listing(path: str, name: str, split: str = "train") -> DatasetManifest:
    manifest = DatasetManifest(name=name, split=split)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"malformed manifest line {lineno} in {path}")
            manifest.stems.append(parts[0])
            manifest.image_paths.append(parts[1])
            manifest.mask_paths.append(parts[2])
    if not manifest.stems:
        raise DataError(f"empty manifest listing: {path}")
    return manifest


def load_sample(image_path: str, mask_path: str, image_size: int):
    """Load one (image, mask) pair resized to image_size, image in [0,1]."""
    try:
        with Image.open(image_path) as img:
            image = img.convert("RGB").resize((image_size, image_size), Image.BILINEAR)
        with Image.open(mask_path) as msk:
            mask = msk.convert("L").resize((image_size, image_size), Image.NEAREST)
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"failed to load sample {image_path}: {exc}") from exc
    image_np = np.asarray(image, dtype=np.float32) / 255.0
    mask_np = (np.asarray(mask) > MASK_THRESHOLD).astype(np.float32)
    return image_np, mask_np


def normalize_images(images_raw: np.ndarray) -> torch.Tensor:
    """[B,S,S,3] in [0,1] -> channel-normalized torch [B,3,S,S]."""
    normed = (images_raw - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(np.ascontiguousarray(normed.transpose(0, 3, 1, 2)))


def make_batches(
    manifest: DatasetManifest,
    batch_size: int,
    shuffle: bool = False,
    seed: int = 0,
    image_size: int = 352,
    hflip: bool = False,
    vflip: bool = False,
) -> Iterator[Batch]:
    """Yield normalized batches; the final partial batch is retained."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(manifest))
    rng = np.random.Generator(np.random.PCG64(seed))
    if shuffle:
        order = rng.permutation(order)

    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        images, masks, ids = [], [], []
        for idx in chunk:
            image_np, mask_np = load_sample(
                manifest.image_paths[idx], manifest.mask_paths[idx], image_size
            )
            if hflip and rng.random() < 0.5:
                image_np = image_np[:, ::-1].copy()
                mask_np = mask_np[:, ::-1].copy()
            if vflip and rng.random() < 0.5:
                image_np = image_np[::-1].copy()
                mask_np = mask_np[::-1].copy()
            images.append(image_np)
            masks.append(mask_np)
            ids.append(manifest.stems[idx])
        images_raw = np.stack(images)
        yield Batch(
            images=normalize_images(images_raw),
            images_raw=images_raw,
            masks=torch.from_numpy(np.stack(masks))[:, None],
            ids=ids,
        )
