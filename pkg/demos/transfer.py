"""Pretrained lasso on a small minority group that shares the majority's signal.

Fits the overall lasso, picks alpha by pooled CV deviance and compares the
minority group's test AUC against a lasso trained on the minority rows only.

    python3 demos/transfer.py [seed]
"""

import sys

from stratlasso.core import DataConfig, assemble, make_folds
from stratlasso.evaluation import auc, delong_one_sided
from stratlasso.lasso import fit_lasso_cv
from stratlasso.pretrained import fit_pretrained
from stratlasso.synth import cohort_preset, generate


def main(seed=0):
    cfg = cohort_preset("transfer", seed=seed)
    train = generate(cfg)
    test = generate(cfg.with_sizes({"MAJ": 0, "MIN": 2000}, seed=10_000 + seed))
    print(f"train: {train.n} rows ({sum(train.group == 'MIN')} minority), "
          f"test: {test.n} minority rows")

    folds = make_folds(train, 3, seed)
    pt = fit_pretrained(train, folds)
    print("pooled CV deviance by alpha:")
    for a, dev in pt.alpha_curve.items():
        print(f"  alpha={a:<5} {dev:.4f}{'  <- chosen' if float(a) == pt.alpha else ''}")
    print(f"overall support S: {len(pt.support)} features")

    minority = assemble(train, DataConfig.group_only("MIN"))
    plain = fit_lasso_cv(minority, make_folds(minority, 3, seed))

    s_pt = pt.predict_proba(test.X, test.group)
    s_plain = plain.predict_proba(test.X)
    cmp = delong_one_sided(s_plain, s_pt, test.y)
    print(f"minority test AUC: group-only {auc(s_plain, test.y):.3f}, "
          f"pretrained {auc(s_pt, test.y):.3f}")
    print(f"Delta AUC {cmp.delta_auc:+.3f}, one-sided DeLong p = {cmp.p_one_sided:.2g}")
    print(f"nonzero coefficients: group-only {plain.best.nonzero_count}, "
          f"fine-tuned {pt.group_fits['MIN'].best.nonzero_count}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
