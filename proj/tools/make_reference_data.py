#!/usr/bin/env python3
"""Regenerate the bundled schedules and toy inputs under data/.

The schedules are synthetic Heligman-Pollard curves, not copies of any
published table.
"""
import argparse
import pathlib

import numpy as np

AGES = np.arange(100)


def heligman_pollard(a, b, c, d, e, f, g, h):
    x = AGES + 0.5
    ratio = a ** ((x + b) ** c) + d * np.exp(-e * np.log(x / f) ** 2) + g * h ** x
    q = ratio / (1.0 + ratio)
    return -np.log1p(-q)


FEMALE = heligman_pollard(0.004, 0.01, 0.30, 0.0001, 10.0, 19.0, 2e-5, 1.105)
MALE = heligman_pollard(0.005, 0.01, 0.30, 0.0008, 12.0, 21.0, 4e-5, 1.10)
# target population: higher infant and young-adult mortality than the standard
REFERENCE = heligman_pollard(0.008, 0.02, 0.30, 0.0012, 8.0, 22.0, 4.5e-5, 1.10)


def age_shares():
    # slowly shrinking cohorts with a logistic old-age taper (about 7% aged 65+)
    w = (1.0 - 0.003 * AGES) / (1.0 + np.exp((AGES - 64.0) / 8.0))
    return w / w.sum()


def write_standard(path):
    with open(path, "w") as out:
        out.write("age,sex,log_rate\n")
        for sex, m in (("female", FEMALE), ("male", MALE)):
            for x in AGES:
                out.write(f"{x},{sex},{np.log(m[x]):.10f}\n")


def write_reference(path):
    shares = age_shares()
    with open(path, "w") as out:
        out.write("age,population_share,rate\n")
        for x in AGES:
            out.write(f"{x},{shares[x]:.17g},{REFERENCE[x]:.17g}\n")


def write_toy(directory, seed):
    rng = np.random.default_rng(seed)
    shares = age_shares()
    with open(directory / "dataset.csv", "w") as out:
        out.write("area_id,sex,age,deaths,exposure\n")
        for area, size in (("3550308", 40000.0), ("3509502", 6000.0)):
            for sex, m in (("female", FEMALE * 1.3), ("male", MALE * 1.3)):
                exposure = size * 0.5 * shares
                deaths = rng.poisson(exposure * m)
                for x in AGES:
                    out.write(f"{area},{sex},{x},{deaths[x]},{exposure[x]:.4f}\n")
    (directory / "seeds.txt").write_text("# replicate seeds\n11\n12\n")
    (directory / "fit.conf").write_text(
        "# quick MCMC settings for the toy data\n"
        "chains = 2\nburn-in = 2000\nthin = 10\nkeep = 100\n"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()
    (args.out / "toy").mkdir(parents=True, exist_ok=True)
    write_standard(args.out / "standard_hmd_like.csv")
    write_reference(args.out / "reference_sp_like.csv")
    write_toy(args.out / "toy", args.seed)


if __name__ == "__main__":
    main()
