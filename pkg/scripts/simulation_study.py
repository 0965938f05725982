"""Estimator accuracy on simulated models with known effects.

Draws random discrete models, samples each at several sizes and reports the
absolute error of the decomposition against the exact effects.

    python3 scripts/simulation_study.py --models 10 --sizes 5000 20000 50000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from causal_disparity import scm
from causal_disparity.decompose import estimate_decomposition
from causal_disparity.rng import subseed
from causal_disparity.tabular import bind_roles

EFFECTS = ("tv", "ctf_de", "ctf_ie", "ctf_se")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=10, help="random discrete models")
    ap.add_argument("--sizes", type=int, nargs="+", default=[5000, 20000, 50000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=5, help="cross-fitting folds")
    args = ap.parse_args()

    print(f"{'n':>8} " + " ".join(f"{'mean|' + e + '|':>14}" for e in EFFECTS) + f" {'max':>8} {'sec':>6}")
    for n in args.sizes:
        errs, t0 = [], time.perf_counter()
        for i in range(args.models):
            spec = scm.DiscreteScm.random(np.random.default_rng(subseed(args.seed, "model", i)))
            data = bind_roles(scm.sample(spec, n, subseed(args.seed, "sample", n, i)), scm.scm_schema(spec))
            p = estimate_decomposition(data, k=args.k, b=0, seed=subseed(args.seed, "fit", i)).points()
            truth = scm.true_effects(spec).to_dict()
            errs.append([abs(p[e] - truth[e]) for e in EFFECTS])
        errs = np.asarray(errs)
        print(f"{n:>8} " + " ".join(f"{v:>14.4f}" for v in errs.mean(axis=0))
              + f" {errs.max():>8.4f} {time.perf_counter() - t0:>6.1f}")


if __name__ == "__main__":
    main()
