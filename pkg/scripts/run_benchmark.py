"""Filter-transfer benchmark: train on the example pair, score on the held-out corpus.

    python scripts/run_benchmark.py [--filters gaussian,unsharp] [--epochs 300] [--k 256]

For each filter the example image is filtered to make the "after" image, a
model is trained on that one pair, and the filter's output on every corpus
image is compared with the model's.  Prints one tab-separated row per filter.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from oneshot_retouch.experiment import evaluate_on_corpus, list_images, load_luma, train_on_filter
from oneshot_retouch.filters import FilterSpec
from oneshot_retouch.training import TrainConfig

ROOT = Path(__file__).resolve().parent.parent

FILTERS = {
    "gaussian": FilterSpec("gaussian"),
    "unsharp": FilterSpec("unsharp"),
    "bilateral": FilterSpec("bilateral"),
    "ll_smooth": FilterSpec("local_laplacian", {"alpha": 2.0, "sigma_r": 0.2}),
    "ll_enhance": FilterSpec("local_laplacian", {"alpha": 0.5, "sigma_r": 0.1}),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--filters", default=",".join(FILTERS))
    ap.add_argument("--train", default=str(ROOT / "data" / "train" / "astronaut.png"))
    ap.add_argument("--corpus", default=str(ROOT / "data" / "corpus"))
    ap.add_argument("--k", type=int, default=TrainConfig.K)
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--baseline", choices=("blend", "regressor"), default="blend")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = replace(TrainConfig(), K=args.k, epochs=args.epochs, baseline=args.baseline, seed=args.seed)
    before = load_luma(args.train)
    planes = {p.stem: load_luma(p) for p in list_images(args.corpus)}
    print("filter\tPSNR_dB\tSSIM\ttrain_s\tparameters")
    for name in args.filters.split(","):
        spec = FILTERS[name]
        t0 = time.perf_counter()
        model, _ = train_on_filter(before, spec, cfg)
        secs = time.perf_counter() - t0
        rep = evaluate_on_corpus(model, planes, spec)
        print(f"{name}\t{rep.psnr_db:.2f}\t{rep.ssim:.4f}\t{secs:.0f}\t{model.n_params()}", flush=True)


if __name__ == "__main__":
    main()
