"""Small data generators shared across test modules (independent of the
package's own simulation generators, which they help cross-check)."""

import numpy as np

from shapevar.designs import ClusteredDesign, IndependentDesign
from shapevar.variance import IndexKind


def g1(mu):
    return 0.25 * (mu - 0.9)


def gen_independent_g1(n, seed):
    rng = np.random.default_rng(seed)
    x1 = rng.binomial(1, 0.5, size=n).astype(float)
    x2 = rng.uniform(0.0, 2.0, size=n)
    mu = 1.0 + x1 + x2
    y = mu + rng.normal(size=n) * g1(mu)
    X = np.column_stack([np.ones(n), x1, x2])
    return IndependentDesign(y, X, t=x2)


def gen_clustered(n_subjects, seed, index_kind, sigma_b=0.1, n_per=5, g=g1,
                  center_noise=False):
    index_kind = IndexKind(index_kind)
    rng = np.random.default_rng(seed)
    ys, Xs, Zs, ts = [], [], [], []
    for _ in range(n_subjects):
        x1 = float(rng.binomial(1, 0.5))
        x2 = rng.uniform(0.0, 5.0, size=n_per)
        mu = 1.0 + x1 + x2
        b = rng.normal() * sigma_b
        nu = mu + b if index_kind is IndexKind.CONDITIONAL_MEAN else mu
        z = rng.normal(size=n_per)
        if center_noise:
            # kill the sampled between-subject component so the ML estimate
            # of the random-effect variance sits on the zero boundary
            z = z - z.mean()
        y = mu + b + z * g(nu)
        Xs.append(np.column_stack([np.ones(n_per), np.full(n_per, x1), x2]))
        Zs.append(np.ones((n_per, 1)))
        ts.append(x2)
        ys.append(y)
    ids = [f"s{i}" for i in range(n_subjects)]
    return ClusteredDesign.from_blocks(ids, ys, Xs, Zs, ts)
