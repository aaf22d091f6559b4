"""Brute-force reference computations on small datasets (pure Python loops)."""

import random
from collections import Counter

from swiglab.scm import Dataset


def random_small_dataset(rng: random.Random, max_rows: int = 50, need_subset: bool = True) -> Dataset:
    """Rows over a random X support with every needed cell populated."""
    k = rng.randint(1, 4)
    levels = rng.sample(range(7), k)
    rows = []
    for x in levels:
        for z in (0, 1):
            rows.append((x, 1, z, z, rng.randint(0, 1)))
        if need_subset:
            rows.append((x, 0, None, None, None))
    budget = rng.randint(len(rows), max_rows)
    while len(rows) < budget:
        x = rng.choice(levels)
        if rng.random() < 0.6:
            z = rng.randint(0, 1)
            rows.append((x, 1, z, rng.randint(0, 2), rng.randint(0, 1)))
        elif need_subset:
            rows.append((x, 0, None, None, None))
    rng.shuffle(rows)
    return Dataset.from_rows(rows)


def brute_force(d: Dataset, z: int) -> dict[str, float]:
    """Saturated-table g-formula and row-level IPW, written from scratch."""
    rows = list(zip(d.x.tolist(), d.s.tolist(), d.z.tolist(), d.y.tolist()))
    n = len(rows)
    nx = Counter(r[0] for r in rows)
    nxs1 = Counter(r[0] for r in rows if r[1] == 1)
    nxs0 = Counter(r[0] for r in rows if r[1] == 0)
    nxz = Counter(r[0] for r in rows if r[1] == 1 and r[2] == z)
    sy = Counter()
    for x, s, zz, y in rows:
        if s == 1 and zz == z:
            sy[x] += y
    n1 = sum(nxs1.values())
    n0 = n - n1

    def ybar(x):
        return sy[x] / nxz[x]

    out = {
        "g_target": sum(nx[x] / n * ybar(x) for x in nx),
        "g_trial": sum(nxs1[x] / n1 * ybar(x) for x in nxs1) if n1 else float("nan"),
        "g_subset": sum(nxs0[x] / n0 * ybar(x) for x in nxs0) if n0 else float("nan"),
    }
    tot_t = tot_s = tot_1 = 0.0
    for x, s, zz, y in rows:
        if s == 1 and zz == z:
            ps = nxs1[x] / nx[x]
            pz = nxz[x] / nxs1[x]
            tot_t += y / (ps * pz)
            tot_s += y * (1 - ps) / (ps * pz)
            tot_1 += y / pz
    out["ipw_target"] = tot_t / n
    out["ipw_subset"] = tot_s / n / (n0 / n) if n0 else float("nan")
    out["ipw_trial"] = tot_1 / n1 if n1 else float("nan")
    return out
