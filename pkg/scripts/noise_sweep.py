"""GA error and presentation accuracy as label and mask noise grow.

Singleton-only corpora (85% cephalic); one line per noise setting.

    python3 scripts/noise_sweep.py [--cases 100] [--trees 50]
"""

import argparse

from osp_pipeline.evaluation import run_cross_validation
from osp_pipeline.forest import ForestParams
from osp_pipeline.synthetic import CorpusSpec, generate_corpus

SETTINGS = [(0.0, 0.0), (0.05, 1.0), (0.10, 2.0), (0.20, 3.0), (0.30, 4.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=100)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    n_breech = round(0.15 * args.cases)
    counts = {"singleton_cephalic": args.cases - n_breech, "singleton_breech": n_breech}
    print(f"{'label_noise':>11} {'mask_px':>7} {'GA median':>9} {'GA IQR':>7} {'n_GA':>5} {'pres acc':>8}")
    for label_noise, mask_noise in SETTINGS:
        spec = CorpusSpec(counts, seed=args.seed, label_noise=label_noise, mask_noise_px=mask_noise)
        r = run_cross_validation(generate_corpus(spec), 5, ForestParams(n_trees=args.trees, seed=args.seed))
        t = r.presentation_confusion
        total = sum(t.correct.values()) + sum(t.incorrect.values())
        acc = sum(t.correct.values()) / total if total else float("nan")
        ga = r.ga_overall
        med = f"{ga.median_days:+.2f}" if ga.n else "n/a"
        iqr = f"{ga.iqr_days:.2f}" if ga.n else "n/a"
        print(f"{label_noise:11.2f} {mask_noise:7.1f} {med:>9} {iqr:>7} {ga.n:5d} {acc:8.3f}")


if __name__ == "__main__":
    main()
