"""Deterministic synthetic corpus for pipeline runs and tests.

Fifty small grayscale images across the five modalities, each paired
with a mask of one to three elliptical blobs.  Blobs are placed on a
cell grid with margins so they can never touch, which keeps the
component count equal to the blob count under either connectivity.
Everything derives from one seed through ``random.Random``, so two
generations into different directories are file-for-file identical.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from PIL import Image, ImageDraw

# (dataset, modality, mask mode); two datasets get labeled masks so both
# decode paths run end to end.
FIXTURE_DATASETS = (
    ("ct_demo", "CT", "binary"),
    ("us_demo", "Ultrasound", "binary"),
    ("derm_demo", "Dermoscopy", "binary"),
    ("nuclei_demo", "Nuclei", "labeled"),
    ("bact_demo", "Bacteria", "labeled"),
)

IMAGES_PER_DATASET = 10
TRAIN_PER_DATASET = 8

# Mixed sizes, several of which do not divide the 1000-grid evenly.
_SIZES = (
    (64, 64),
    (96, 72),
    (80, 80),
    (72, 96),
    (120, 88),
    (56, 56),
    (100, 76),
    (88, 120),
    (76, 100),
    (112, 64),
)


def _blob_cells(rng: random.Random, n_blobs: int) -> list[tuple[int, int]]:
    cells = [(row, col) for row in range(2) for col in range(2)]
    return sorted(rng.sample(cells, n_blobs))


def _draw_sample(
    rng: random.Random, width: int, height: int, mask_mode: str
) -> tuple[Image.Image, Image.Image]:
    image = Image.new("L", (width, height), color=rng.randint(20, 60))
    mask = Image.new("L", (width, height), color=0)
    image_draw = ImageDraw.Draw(image)
    mask_draw = ImageDraw.Draw(mask)

    # Broad background texture so images are not flat.
    for _ in range(6):
        x0 = rng.randint(0, width - 2)
        y0 = rng.randint(0, height - 2)
        x1 = min(width - 1, x0 + rng.randint(4, width // 2))
        y1 = min(height - 1, y0 + rng.randint(4, height // 2))
        image_draw.rectangle((x0, y0, x1, y1), fill=rng.randint(25, 75))

    n_blobs = rng.randint(1, 3)
    cell_w = width // 2
    cell_h = height // 2
    for index, (row, col) in enumerate(_blob_cells(rng, n_blobs)):
        # Keep 2px margins inside the cell so blobs never touch.
        max_w = max(4, cell_w - 6)
        max_h = max(4, cell_h - 6)
        blob_w = rng.randint(4, max_w)
        blob_h = rng.randint(4, max_h)
        x0 = col * cell_w + 2 + rng.randint(0, max(0, cell_w - blob_w - 4))
        y0 = row * cell_h + 2 + rng.randint(0, max(0, cell_h - blob_h - 4))
        box = (x0, y0, x0 + blob_w - 1, y0 + blob_h - 1)
        image_draw.ellipse(box, fill=rng.randint(150, 230))
        label = index + 1 if mask_mode == "labeled" else 1
        mask_draw.ellipse(box, fill=label)
    return image, mask


def make_corpus(root: Path, seed: int = 7) -> Path:
    """Generate images, masks, and the manifest; returns the manifest path."""
    rng = random.Random(seed)
    root.mkdir(parents=True, exist_ok=True)
    entries: list[dict[str, object]] = []
    for dataset, modality, mask_mode in FIXTURE_DATASETS:
        (root / "images" / dataset).mkdir(parents=True, exist_ok=True)
        (root / "masks" / dataset).mkdir(parents=True, exist_ok=True)
        for index in range(IMAGES_PER_DATASET):
            width, height = _SIZES[index]
            image, mask = _draw_sample(rng, width, height, mask_mode)
            image_rel = f"images/{dataset}/img_{index:02d}.png"
            mask_rel = f"masks/{dataset}/img_{index:02d}.png"
            image.save(root / image_rel)
            mask.save(root / mask_rel)
            entries.append(
                {
                    "dataset": dataset,
                    "modality": modality,
                    "image": image_rel,
                    "mask": mask_rel,
                    "mask_mode": mask_mode,
                    "split": "train" if index < TRAIN_PER_DATASET else "test",
                }
            )
    manifest = root / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry, separators=(",", ":")) + "\n")
    return manifest
