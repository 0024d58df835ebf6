"""Statistical and numerical checks of the arrangement and training primitives.

Every suite compares the library code path against an independent
oracle computed from a dense copy of the matrix (or from closed-form
formulas) and reports measured values next to their bounds.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arrangement import Designation, IndStream, build_minibatch, coo_draw_batch
from .data import AssociationMatrix, weighted_jaccard
from .lsh import angular_lsh_map, jaccard_lsh_map
from .metrics import cosine_move_experiment
from .sampling import derive_rng
from .trainer import loss_terms, score


@dataclass
class Check:
    name: str
    measured: float
    bound: str
    passed: bool


@dataclass
class VerifyReport:
    suite: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, measured, bound, passed):
        self.checks.append(Check(name, float(measured), bound, bool(passed)))

    def format(self) -> str:
        lines = [f"[{self.suite}] {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f}s)"]
        for c in self.checks:
            lines.append(f"  {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.measured:.6g} ({c.bound})")
        return "\n".join(lines)


def standard_matrix(seed: int = 0, n: int = 20, density: float = 0.6) -> AssociationMatrix:
    """Seeded n x n matrix with weights in {1, 2, 4}; every row and column nonempty."""
    rng = np.random.default_rng(seed)
    while True:
        mask = rng.random((n, n)) < density
        if mask.any(axis=0).all() and mask.any(axis=1).all():
            break
    dense = np.where(mask, rng.choice([1.0, 2.0, 4.0], size=(n, n)), 0.0)
    return AssociationMatrix.from_dense(dense)


def _draw_chunks(kappa, designation, n_draws, rng, chunk=200_000):
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        yield coo_draw_batch(kappa, designation, m, rng)
        done += m


# ---------------------------------------------------------------------------

def suite_marginals(n_draws: int = 10**6, seed: int = 0, min_fraction: float = 0.99) -> VerifyReport:
    """Per-pair inclusion frequency of COO microbatches vs kappa_ij / sum of axis maxima."""
    report = VerifyReport("marginals")
    kappa = standard_matrix(seed)
    dense = kappa.to_dense()
    for designation in Designation:
        rng = derive_rng(seed, "verify-marginals", designation.value)
        counts = np.zeros(dense.shape)
        for batch in _draw_chunks(kappa, designation, n_draws, rng):
            np.add.at(counts, (batch.focus, batch.context), 1)
        axis_max = dense.max(axis=0) if designation is Designation.FOCUS else dense.max(axis=1)
        p = dense / axis_max.sum()
        support = dense > 0
        se = np.sqrt(p * (1 - p) / n_draws)
        z = np.abs(counts / n_draws - p)[support] / se[support]
        frac = float((z <= 3).mean())
        report.add(f"{designation.value}: fraction of pairs within 3 s.e.", frac,
                   f">= {min_fraction}", frac >= min_fraction)
        report.add(f"{designation.value}: draws outside support", counts[~support].sum(), "== 0",
                   counts[~support].sum() == 0)
    return report


def suite_coplacement(n_draws: int = 10**6, seed: int = 0) -> VerifyReport:
    """Every COO microbatch holding (i, j) also holds every (i', j) with kappa_i'j >= kappa_ij."""
    report = VerifyReport("coplacement")
    kappa = standard_matrix(seed)
    dense = kappa.to_dense()
    for designation in Designation:
        rng = derive_rng(seed, "verify-coplacement", designation.value)
        # orient so that rows of `lines` are the anchor's full weight vector
        lines = dense.T if designation is Designation.FOCUS else dense
        violations = 0
        for batch in _draw_chunks(kappa, designation, n_draws, rng):
            anchor, member = ((batch.context, batch.focus) if designation is Designation.FOCUS
                              else (batch.focus, batch.context))
            sizes = batch.sizes()
            w = lines[anchor, member]
            if np.any(w <= 0):
                violations += int((w <= 0).sum())
            min_w = np.minimum.reduceat(w, batch.offsets[:-1])
            first_anchor = anchor[batch.offsets[:-1]]
            required = (lines[first_anchor] >= min_w[:, None]).sum(axis=1)
            # with distinct members, equal counts mean the required set is present
            key = np.repeat(np.arange(sizes.size), sizes) * lines.shape[1] + member
            distinct = np.unique(key).size == key.size
            violations += int((required != sizes).sum()) + (0 if distinct else 1)
        report.add(f"{designation.value}: violations in {n_draws} microbatches", violations,
                   "== 0", violations == 0)
    return report


def suite_jaccard_preservation(n_pairs: int = 20, collections: int = 10**4, size: int = 100,
                               seed: int = 0, tol: float = 0.02) -> VerifyReport:
    """Mean empirical weighted Jaccard over focus sub-epochs vs the Jaccard of kappa rows."""
    report = VerifyReport("jaccard-preservation")
    kappa = standard_matrix(seed)
    dense = kappa.to_dense()
    n, m = dense.shape
    rng = derive_rng(seed, "verify-jaccard")
    all_pairs = list(itertools.combinations(range(n), 2))
    pick = rng.choice(len(all_pairs), size=n_pairs, replace=False)
    pairs = np.array([all_pairs[k] for k in pick])
    sums = np.zeros(n_pairs)
    defined = np.zeros(n_pairs, dtype=np.int64)
    chunk = max(1, 200_000 // size)
    done = 0
    while done < collections:
        c = min(chunk, collections - done)
        batch = coo_draw_batch(kappa, Designation.FOCUS, c * size, rng)
        coll = np.repeat(np.arange(c * size) // size, batch.sizes())
        X = np.zeros((c, n, m), dtype=np.int64)
        np.add.at(X, (coll, batch.focus, batch.context), 1)
        a, b = X[:, pairs[:, 0], :], X[:, pairs[:, 1], :]
        num = np.minimum(a, b).sum(axis=2)
        den = np.maximum(a, b).sum(axis=2)
        ok = den > 0
        sums += np.where(ok, num / np.where(ok, den, 1), 0.0).sum(axis=0)
        defined += ok.sum(axis=0)
        done += c
    for k, (i, i2) in enumerate(pairs.tolist()):
        target = weighted_jaccard(dense[i], dense[i2])
        mean = sums[k] / defined[k] if defined[k] else math.nan
        err = abs(mean - target)
        report.add(f"rows ({i},{i2}) J={target:.4f}: |mean - J|", err, f"<= {tol}", err <= tol)
    return report


def suite_lsh_collisions(n_maps: int = 10**5, n_pairs: int = 20, seed: int = 0,
                         tol: float = 0.02) -> VerifyReport:
    """Collision rates of Jaccard and angular maps vs their closed forms."""
    report = VerifyReport("lsh-collisions")
    kappa = standard_matrix(seed)
    dense = kappa.to_dense()
    rng = derive_rng(seed, "verify-lsh")
    all_pairs = list(itertools.combinations(range(kappa.n_focus), 2))
    pairs = np.array([all_pairs[k] for k in rng.choice(len(all_pairs), n_pairs, replace=False)])
    hits = np.zeros(n_pairs)
    for _ in range(n_maps):
        keys = jaccard_lsh_map(kappa, Designation.FOCUS, rng).keys
        hits += keys[pairs[:, 0]] == keys[pairs[:, 1]]
    for k, (i, i2) in enumerate(pairs.tolist()):
        target = weighted_jaccard(dense[i], dense[i2])
        err = abs(hits[k] / n_maps - target)
        report.add(f"jaccard rows ({i},{i2}) J={target:.4f}: |rate - J|", err, f"<= {tol}",
                   err <= tol)

    dim = 3
    coarse = rng.standard_normal((2 * n_pairs, dim))
    hits = np.zeros(n_pairs)
    left, right = np.arange(0, 2 * n_pairs, 2), np.arange(1, 2 * n_pairs, 2)
    for _ in range(n_maps):
        keys = angular_lsh_map(coarse, Designation.FOCUS, rng).keys
        hits += keys[left] == keys[right]
    cos = np.einsum("ij,ij->i", coarse[left], coarse[right]) / (
        np.linalg.norm(coarse[left], axis=1) * np.linalg.norm(coarse[right], axis=1))
    target = 1 - np.arccos(np.clip(cos, -1, 1)) / np.pi
    for k in range(n_pairs):
        err = abs(hits[k] / n_maps - target[k])
        report.add(f"angular pair {k} p={target[k]:.4f}: |rate - p|", err, f"<= {tol}", err <= tol)
    return report


def _fd_grad(fun, x, h):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def suite_gradients(n_points: int = 1000, seed: int = 0, h: float = 1e-4,
                    tol: float = 1e-5) -> VerifyReport:
    """Analytic SGNS gradients (w.r.t. f, c and bias) vs central finite differences."""
    report = VerifyReport("gradients")
    rng = derive_rng(seed, "verify-gradients")
    dims = (1, 5, 50)
    worst = {True: 0.0, False: 0.0}
    for p in range(n_points):
        d = dims[p % 3]
        with_bias = bool((p // 3) % 2)
        f = rng.standard_normal(d) * 1.5 / math.sqrt(d)
        c = rng.standard_normal(d) * 1.5 / math.sqrt(d)
        beta = float(rng.standard_normal()) if with_bias else 0.0
        for kind in ("positive", "negative"):
            _, g = loss_terms(score(f, c, beta), kind)
            analytic = np.concatenate([g * c, g * f, [g] if with_bias else []])

            def loss(x):
                return loss_terms(score(x[:d], x[d:2 * d], x[2 * d] if with_bias else 0.0), kind)[0]

            x0 = np.concatenate([f, c, [beta] if with_bias else []])
            numeric = _fd_grad(loss, x0, h)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-300)
            worst[with_bias] = max(worst[with_bias], float((np.abs(analytic - numeric) / denom).max()))
    for with_bias in (False, True):
        report.add(f"max relative error ({'with' if with_bias else 'without'} bias)",
                   worst[with_bias], f"< {tol}", worst[with_bias] < tol)
    return report


def suite_cosine_move(trials: int = 10**4, seed: int = 0) -> VerifyReport:
    """Shared-context positive updates raise cos(f1, f2) on average."""
    report = VerifyReport("cosine-move")
    means = {}
    for eta in (0.02, 0.05):
        for d in (10, 50, 100):
            rng = derive_rng(seed, "verify-cosine-move", str(d), str(eta))
            means[d, eta] = cosine_move_experiment(d, eta, trials, rng)
            report.add(f"d={d} eta={eta}: mean increase", means[d, eta], "> 0", means[d, eta] > 0)
    for eta in (0.02, 0.05):
        diff = means[10, eta] - means[100, eta]
        report.add(f"eta={eta}: mean(d=10) - mean(d=100)", diff, "> 0", diff > 0)
    return report


def suite_negatives(n_minibatches: int = 10**5, seed: int = 0, b: int = 4, lam: int = 10,
                    min_fraction: float = 0.99) -> VerifyReport:
    """Negative pair counts of built minibatches vs lam * ||k_.j|| * ||k_i.|| / ||k||.

    Uses independent microbatches so each minibatch has exactly ``b``
    positives; the per-minibatch count of a negative pair is then a
    product of independent binomials with closed-form variance.
    """
    report = VerifyReport("negatives")
    kappa = standard_matrix(seed)
    dense = kappa.to_dense()
    total = dense.sum()
    r = dense.sum(axis=1) / total
    q = dense.sum(axis=0) / total
    for designation in Designation:
        rng = derive_rng(seed, "verify-negatives", designation.value)
        stream = IndStream(kappa, derive_rng(seed, "verify-negatives-stream", designation.value),
                           designation)
        counts = np.zeros(dense.shape)
        for _ in range(n_minibatches):
            mb = build_minibatch(stream, kappa, b, lam, designation, rng)
            ni, nj = mb.negative_pairs()
            np.add.at(counts, (ni, nj), 1)
        # A = positives on the matched side, B = draws of the negative entity
        pa, pb = (r[:, None], q[None, :]) if designation is Designation.FOCUS else (q[None, :], r[:, None])
        EA, EB = b * pa, lam * pb
        EA2 = b * pa * (1 - pa) + EA ** 2
        EB2 = lam * pb * (1 - pb) + EB ** 2
        mean = EA * EB
        var = EA2 * EB2 - mean ** 2
        z = np.abs(counts / n_minibatches - mean) / np.sqrt(var / n_minibatches)
        frac = float((z <= 3).mean())
        report.add(f"{designation.value}: fraction of pairs within 3 s.e.", frac,
                   f">= {min_fraction}", frac >= min_fraction)
    return report


SUITES = {
    "marginals": suite_marginals,
    "coplacement": suite_coplacement,
    "jaccard-preservation": suite_jaccard_preservation,
    "lsh-collisions": suite_lsh_collisions,
    "gradients": suite_gradients,
    "cosine-move": suite_cosine_move,
    "negatives": suite_negatives,
}


def run_suite(name: str, **kwargs) -> VerifyReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    start = time.perf_counter()
    report = SUITES[name](**kwargs)
    report.seconds = time.perf_counter() - start
    return report
