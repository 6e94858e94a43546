"""Writes a synthetic cohort with NHEFS-style columns to data/.

The covariates mimic the marginal shapes of the real study (N = 1561 smokers
aged 25-74); treatment is rare (about 9%) and depends on the covariates
through a logistic model. Nothing here is real survey data.
"""
import argparse
import csv
import json
import pathlib

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=1561)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    n = 1561

    sex = rng.binomial(1, 0.51, n)
    age = np.clip(np.rint(rng.normal(43.9, 12.0, n)), 25, 74).astype(int)
    race = rng.binomial(1, 0.13, n)
    education = rng.choice([1, 2, 3, 4, 5], size=n, p=[0.19, 0.06, 0.41, 0.09, 0.25])
    smokeintensity = np.clip(np.rint(rng.gamma(3.0, 7.0, n)), 1, 80).astype(int)
    smokeyrs = np.clip(np.rint(age - 18 + rng.normal(0, 5, n)), 1, age - 10).astype(int)
    active = rng.choice([0, 1, 2], size=n, p=[0.45, 0.44, 0.11])
    exercise = rng.choice([0, 1, 2], size=n, p=[0.19, 0.42, 0.39])
    wt71 = np.clip(rng.normal(78.0 - 12.0 * sex, 14.0, n), 36.0, 170.0)

    lin = (-2.6 + 0.35 * sex - 0.03 * (age - 44) + 0.4 * race - 0.02 * (smokeintensity - 21)
           + 0.25 * (education == 5) - 0.3 * (active == 2) + 0.2 * (exercise == 0))
    treat = rng.binomial(1, 1.0 / (1.0 + np.exp(-lin)))

    y = (2.5 - 1.2 * treat - 0.9 * sex - 0.11 * (age - 44) + 0.05 * (smokeintensity - 21)
         - 0.07 * (wt71 - 71) + 0.6 * (exercise == 2) - 0.8 * (active == 2)
         + rng.normal(0.0, 7.5, n))

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nhefs_synthetic.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seqn", "treat", "wt82_71", "sex", "age", "race", "education", "smokeintensity",
                    "smokeyrs", "active", "exercise", "wt71"])
        for i in range(n):
            w.writerow([10000 + i, treat[i], f"{y[i]:.3f}", sex[i], age[i], race[i], education[i],
                        smokeintensity[i], smokeyrs[i], active[i], exercise[i], f"{wt71[i]:.2f}"])

    schema = {
        "outcome": "wt82_71",
        "treatment": "treat",
        "covariates": ["sex", "age", "race", "education", "smokeintensity", "smokeyrs",
                       "active", "exercise", "wt71"],
        "categorical": {
            "education": ["1", "2", "3", "4", "5"],
            "active": ["0", "1", "2"],
            "exercise": ["0", "1", "2"],
        },
        "mode": "causal",
    }
    with open(out / "nhefs_synthetic.schema.json", "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")
    print(f"treated share {treat.mean():.3f}")


if __name__ == "__main__":
    main()
