"""Build the bundled synthetic neuropathic-pain trial.

Only the shape is realistic: 71 vs 70 subjects and the dropout-reason
counts (adverse event + lack of efficacy coded mnar, administrative coded
mar). Outcomes are simulated changes in VAS pain (0-100 scale), so higher
is worse. Dropouts tend to be the subjects doing badly for mnar reasons.

    python scripts/make_synthetic_trial.py [--seed 7] [--out PATH]
"""

import argparse
import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "trimest" / "datasets" / "synthetic_pain_trial.csv"

# (arm, n, n_ae_loe, n_admin); arm 1 = treatment A
ARMS = [(1, 71, 21, 12), (0, 70, 7, 13)]
MEAN_CHANGE = {1: -30.0, 0: -18.0}


def build(seed: int):
    rng = np.random.default_rng(seed)
    rows = []
    for arm, n, n_mnar, n_mar in ARMS:
        baseline = np.clip(rng.normal(68, 10, n), 40, 100).round(1)
        change = MEAN_CHANGE[arm] + 0.3 * (baseline - 68) + rng.normal(0, 20, n)
        change = np.clip(change, -baseline, 100 - baseline).round(1)
        # mnar dropouts: drawn preferentially from the worst (highest) changes
        order = np.argsort(-(change + rng.normal(0, 8, n)))
        mnar = set(order[:n_mnar].tolist())
        rest = [i for i in range(n) if i not in mnar]
        mar = set(rng.choice(rest, n_mar, replace=False).tolist())
        prefix = "A" if arm == 1 else "B"
        for i in range(n):
            reason = "mnar" if i in mnar else "mar" if i in mar else "observed"
            out = "" if reason != "observed" else f"{change[i]:.1f}"
            rows.append([f"{prefix}{i + 1:03d}", arm, out, reason, f"{baseline[i]:.1f}"])
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    rows = build(args.seed)
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "arm", "outcome", "reason", "baseline_vas"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
