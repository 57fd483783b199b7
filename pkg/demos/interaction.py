"""Hierarchical interaction screening on a planted ``x1 * x2`` effect.

Prints the path statistics around the CV minimum and the interaction
network at the selected lambda.

    python3 demos/interaction.py [seed]
"""

import sys

from stratlasso.core import make_folds
from stratlasso.glinternet import cv_glinternet, export_network, path_statistics
from stratlasso.synth import cohort_preset, generate


def main(seed=0):
    ds = generate(cohort_preset("interaction", seed=seed))
    print(f"{ds.n} rows, {ds.p} features, candidate: "
          f"{[f.name for f in ds.features if f.interaction_candidate]}")
    model = cv_glinternet(ds, make_folds(ds, 3, seed))
    stats = path_statistics(model)
    print("index  lambda    mains  pairs  cv_deviance")
    for i, (lam, n_main, n_int, err) in enumerate(stats):
        if i < 3 or abs(i - model.selected) <= 2:
            mark = "  <- CV minimum" if i == model.selected else ""
            print(f"{i:5d}  {lam:.5f}  {n_main:5d}  {n_int:5d}  {err:.4f}{mark}")
    print("\nnetwork at the selected lambda:")
    print(export_network(model, model.selected), end="")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
