"""Seeded generator of multi-group logistic datasets with planted signal."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, FeatureMeta
from .errors import InvalidConfig, UnknownPreset

PRESETS = ("paperlike_small", "transfer", "interaction", "null")


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``groups`` is a sequence of ``(label, n, intercept)``.  Effects are given
    as ``(indices, coefficients)`` with 0-based feature indices; features are
    named ``x1 .. xp``.  Features listed in ``binary`` are drawn as 0/1 and
    exposed as two-level categoricals.
    """

    groups: tuple
    p: int
    shared_support: tuple = ((), ())
    group_specific: dict = field(default_factory=dict)
    interactions: tuple = ()
    candidate_indices: frozenset = frozenset()
    binary: frozenset = frozenset()
    correlation: float = 0.0
    seed: int = 0

    def validate(self):
        if self.p < 1:
            raise InvalidConfig("p must be at least 1")
        if not self.groups:
            raise InvalidConfig("at least one group is required")
        labels = [g[0] for g in self.groups]
        if len(set(labels)) != len(labels):
            raise InvalidConfig("group labels must be unique")
        for label, n, _ in self.groups:
            if int(n) < 1:
                raise InvalidConfig(f"group {label!r} needs n >= 1")
        if not 0.0 <= self.correlation < 1.0:
            raise InvalidConfig("correlation must lie in [0, 1)")
        effects = [self.shared_support] + list(self.group_specific.values())
        for idx, coef in effects:
            if len(idx) != len(coef):
                raise InvalidConfig("effect indices and coefficients differ in length")
            self._check_indices(idx)
        for g in self.group_specific:
            if g not in labels:
                raise InvalidConfig(f"group-specific effects for unknown group {g!r}")
        for i, j, _ in self.interactions:
            self._check_indices((i, j))
            if i == j:
                raise InvalidConfig("interaction needs two distinct features")
        self._check_indices(self.candidate_indices)
        self._check_indices(self.binary)

    def _check_indices(self, idx):
        for i in idx:
            if not 0 <= int(i) < self.p:
                raise InvalidConfig(f"feature index {i} out of range for p={self.p}")

    def features(self):
        out = []
        for j in range(self.p):
            cand = j in self.candidate_indices
            if j in self.binary:
                out.append(FeatureMeta(f"x{j + 1}", "categorical", ("0", "1"), cand))
            else:
                out.append(FeatureMeta(f"x{j + 1}", "continuous", (), cand))
        return out

    def with_sizes(self, sizes, seed=None):
        """Same signal with new group sizes (``{label: n}``) and seed.

        Groups given size 0 are dropped together with their specific effects.
        """
        groups = tuple((g, int(sizes.get(g, n)), b) for g, n, b in self.groups)
        groups = tuple(g for g in groups if g[1] > 0)
        kept = {g[0] for g in groups}
        specific = {g: v for g, v in self.group_specific.items() if g in kept}
        return replace(self, groups=groups, group_specific=specific,
                       seed=self.seed if seed is None else seed)


def _draw_features(rng, n, p, rho, binary):
    Z = rng.standard_normal((n, p))
    if rho > 0:
        X = np.empty_like(Z)
        X[:, 0] = Z[:, 0]
        c = np.sqrt(1.0 - rho * rho)
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
    else:
        X = Z
    for j in binary:
        X[:, j] = (X[:, j] > 0).astype(float)
    return X


def generate_with_truth(config):
    """Draw a dataset and return it with the generating logit of each row."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    binary = sorted(int(j) for j in config.binary)
    shared = np.zeros(config.p)
    shared[list(config.shared_support[0])] = config.shared_support[1]
    Xs, ys, gs, logits = [], [], [], []
    for label, n, intercept in config.groups:
        n = int(n)
        X = _draw_features(rng, n, config.p, config.correlation, binary)
        beta = shared.copy()
        if label in config.group_specific:
            idx, coef = config.group_specific[label]
            np.add.at(beta, list(idx), coef)
        logit = intercept + X @ beta
        for i, j, c in config.interactions:
            logit = logit + c * X[:, i] * X[:, j]
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
        Xs.append(X)
        ys.append(y)
        gs.append(np.full(n, str(label)))
        logits.append(logit)
    ds = Dataset(np.vstack(Xs), np.concatenate(ys), np.concatenate(gs), config.features())
    return ds, np.concatenate(logits)


def generate(config):
    """Draw a dataset; see :func:`generate_with_truth` for the logits."""
    return generate_with_truth(config)[0]


def write_truth(path, dataset, logit):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "group", "logit"])
        for i in range(dataset.n):
            w.writerow([i, dataset.group[i], repr(float(logit[i]))])


def cohort_preset(name, seed=0):
    """Named generator configurations.

    ``paperlike_small``
        Five groups with biobank-like size ratios scaled to a majority
        of 8,000 (smallest group 148, ratio about 54:1), ``p = 50``, shared
        and group-specific effects, one planted interaction, a binary
        candidate feature.
    ``transfer``
        A majority of 1,000 rows and a minority of 60 with identical signal
        on five of 20 features.
    ``interaction``
        One group of 2,000, ``logit = x1 + x2 + 2 x1 x2``, candidate ``x1``.
    ``null``
        Two groups, no signal.
    """
    if name == "paperlike_small":
        return SynthConfig(
            groups=(("WB", 8000, -1.4), ("AD", 672, -1.2), ("NBE", 585, -1.3),
                    ("SA", 189, -1.0), ("AF", 148, -1.1)),
            p=50,
            shared_support=((0, 2, 3, 4, 5, 6), (0.8, 0.6, -0.5, 0.4, 0.3, -0.3)),
            group_specific={"SA": ((7, 8), (0.5, -0.4)), "AF": ((9, 10), (0.6, 0.4)),
                            "AD": ((11,), (0.3,))},
            interactions=((0, 3, 0.4),),
            candidate_indices=frozenset({0, 1, 2}),
            binary=frozenset({1}),
            correlation=0.2,
            seed=seed,
        )
    if name == "transfer":
        return SynthConfig(
            groups=(("MAJ", 1000, -0.5), ("MIN", 60, -0.5)),
            p=20,
            shared_support=((0, 1, 2, 3, 4), (1.0, -0.8, 0.7, 0.6, -0.5)),
            seed=seed,
        )
    if name == "interaction":
        return SynthConfig(
            groups=(("A", 2000, 0.0),),
            p=10,
            shared_support=((0, 1), (1.0, 1.0)),
            interactions=((0, 1, 2.0),),
            candidate_indices=frozenset({0}),
            seed=seed,
        )
    if name == "null":
        return SynthConfig(groups=(("A", 200, 0.0), ("B", 100, 0.0)), p=10, seed=seed)
    raise UnknownPreset(name)
