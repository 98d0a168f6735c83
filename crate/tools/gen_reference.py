"""Regenerates crates/core/tests/data/reference_formulas.json.

Inputs come from a splitmix64 stream that the Rust tests reproduce, so only
the expected outputs are stored. Every value is evaluated with mpmath at 60
significant digits from the exact binary64 inputs, then rounded once.
"""

import json
import pathlib

from mpmath import mp, mpf, exp

mp.dps = 60
MASK = (1 << 64) - 1
CASES = 1250
SEED = 0x5EED_CA4B


class SplitMix:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def unit(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo, hi):
        return lo + (hi - lo) * self.unit()


def gini_equality(xs):
    n = len(xs)
    total = sum(xs)
    if total == 0:
        return mpf(1)
    double = sum(abs(a - b) for a in xs for b in xs)
    return 1 - double / (2 * (n - 1) * total)


def main():
    rng = SplitMix(SEED)
    out = {"seed": SEED, "cases": CASES}

    rows = []
    for _ in range(CASES):
        t, a, b = rng.uniform(0, 1000), rng.uniform(0.01, 1), rng.uniform(1, 1000)
        rows.append(float(mpf(a) * (1 - exp(-mpf(t) / mpf(b)))))
    out["labor_coefficient"] = rows

    rows = []
    for _ in range(CASES):
        z, l, c, eta = rng.uniform(0, 1e5), rng.uniform(0, 100), rng.uniform(0, 1), rng.uniform(0.01, 0.99)
        k = 1 - mpf(eta)
        rows.append(float((mpf(z) ** k - 1) / k - mpf(c) * mpf(l)))
    out["utility"] = rows

    rows = []
    for _ in range(CASES):
        rc, n, d = rng.uniform(0.5, 3), rng.uniform(0, 50), rng.uniform(0, 0.5)
        rows.append(float(exp(-mpf(d) * mpf(rc) * mpf(n))))
    out["power_consumption"] = rows

    rows = []
    for _ in range(CASES):
        pcs = [rng.uniform(0, 1) for _ in range(5)]
        sizes = [rng.uniform(0.5, 2) for _ in range(5)]
        n_p = int(rng.next_u64() % 20) + 1
        w = sum(mpf(p) * mpf(s) for p, s in zip(pcs, sizes))
        rows.append(float(n_p / (w + n_p)))
    out["green_rate"] = rows

    rows = []
    for _ in range(CASES):
        pc, gr = rng.uniform(0, 1), rng.uniform(0, 1)
        rows.append(float(max(mpf(0.1), min(mpf(1), mpf(pc) * (1 - mpf(gr))))))
    out["emission_level"] = rows

    rows = []
    for _ in range(CASES):
        xs = [rng.uniform(0, 1e4) for _ in range(5)]
        rows.append(float(sum(mpf(x) for x in xs)))
    out["productivity"] = rows

    rows = []
    for _ in range(CASES):
        xs = [mpf(rng.uniform(0, 1e4)) for _ in range(5)]
        rows.append(float(gini_equality(xs)))
    out["equality"] = rows

    rows = []
    for _ in range(CASES):
        prod, eq, ee, ce = rng.uniform(0, 1e5), rng.uniform(0, 1), rng.uniform(0, 500), rng.uniform(0, 0.1)
        rows.append(float(mpf(prod) * mpf(eq) * exp(-mpf(ce) * mpf(ee))))
    out["social_welfare"] = rows

    path = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/data/reference_formulas.json"
    path.write_text(json.dumps(out, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
