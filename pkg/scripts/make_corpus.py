"""Regenerate the checked-in 256x256 image corpus from scikit-image's bundled sample photos.

    python scripts/make_corpus.py [--out data]

data/train/ holds the example "before" image; data/corpus/ the held-out test images.
"""

import argparse
from pathlib import Path

import numpy as np
import skimage.data
from skimage.transform import resize

from oneshot_retouch.image_io import ImageBuf, save_image

TRAIN = ["astronaut"]
CORPUS = ["camera", "coffee", "chelsea", "rocket", "coins", "moon", "clock", "brick"]
SIZE = 256


def square_crop(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    return img[y0:y0 + s, x0:x0 + s]


def prepare(name: str) -> ImageBuf:
    img = getattr(skimage.data, name)().astype(np.float64) / 255.0
    img = resize(square_crop(img), (SIZE, SIZE), order=3, anti_aliasing=True)
    return ImageBuf.from_array(img)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    for sub, names in (("train", TRAIN), ("corpus", CORPUS)):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for name in names:
            path = out / sub / f"{name}.png"
            save_image(prepare(name), path)
            print(path)


if __name__ == "__main__":
    main()
