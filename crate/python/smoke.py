"""Smoke test for the revclt extension module. Run python/build.sh first."""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import revclt  # noqa: E402


def main() -> None:
    chain = revclt.Chain.example1()
    print(chain, "theta =", chain.theta)

    an = revclt.Analyzer(chain)
    for n in (10**3, 10**4, 10**5, 10**6):
        ratio = an.sigma_sq(n) / (2 * n * math.log(n))
        print(f"n={n:>8}  sigma_n^2/(2n log n) = {ratio:.5f}")
    assert an.kappa() is None

    sigma = math.sqrt(an.sigma_sq(10**4))
    sums = revclt.simulate(chain, 10**4, 400, seed=42)
    z = [s / sigma for s in sums]
    ks_half = revclt.ks_normal(z, 0.5)
    ks_one = revclt.ks_normal(z, 1.0)
    print(f"KS to N(0,1/2) = {ks_half:.4f}, KS to N(0,1) = {ks_one:.4f}")
    assert ks_half < ks_one

    law = revclt.HoldingLaw(chain)
    print("k^2 P(|Y|>=k) at k=1000:", 1e6 * law.survival(1000))

    stable = revclt.StableRef(1.5)
    print(f"stable c_alpha = {stable.c:.6f}, F(1) = {stable.cdf(1.0):.6f}")

    r = revclt.evaluate_criterion(2)
    print("criterion 2:", "PASS" if r["pass"] else "FAIL")
    print("ok")


if __name__ == "__main__":
    main()
