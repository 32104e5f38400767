"""Numerical verification harness for the scoring closed form.

Four checks, each over seeded random instances:

  identity       closed-form score vs. the explicit gradient-matrix route
  finite_diff    explicit route vs. central finite differences on the loss
  self_bounding  score <= 2 tau^2 * loss at the predicted label
  fixed_point    fixed-point iteration reaches a small update residual, and
                 its tiny-temperature limit matches per-class centroids

Instance law: embeddings are unit vectors; weight columns are unit vectors
scaled by min(1, 6/tau). The cap keeps the temperature-scaled logit spread
bounded, so predictions never collapse to within float dust of one-hot.
Central differences lose all relative accuracy in that regime (the score
underflows toward zero while the difference quotient keeps ~1e-10 noise), so
uncapped instances would measure the probe, not the implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import (ClassifierWeights, ce_loss, centroid_limit,
                         fixed_point_weights, grad_ce, raw_logits)
from .scoring import gradnorm_score, score_direct

FD_STEP = 1e-5
REL_TOL = 1e-6
TAUS = (1.0, 12.5, 50.0)


@dataclass
class CheckResult:
    name: str
    trials: int
    worst: float        # worst relative error (or residual) observed
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst {self.worst:.3e} "
                f"(tolerance {self.tolerance:.1e}, {self.trials} trials)")


def random_instance(rng: np.random.Generator) -> tuple[np.ndarray, ClassifierWeights, float]:
    """One (r, W, tau) triple under the capped-logit instance law."""
    d = int(rng.integers(4, 65))
    c = int(rng.integers(2, 11))
    tau = float(TAUS[int(rng.integers(len(TAUS)))])
    r = rng.standard_normal(d)
    r /= np.sqrt(r @ r)
    w = rng.standard_normal((d, c))
    w /= np.sqrt((w * w).sum(axis=0))
    w *= min(1.0, 6.0 / tau)
    return r, ClassifierWeights(w), tau


def fd_grad(z: np.ndarray, y: int, weights: ClassifierWeights, tau: float,
            step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of ce_loss with respect to every weight."""
    w0 = weights.matrix
    g = np.empty_like(w0)
    for i in range(w0.shape[0]):
        for j in range(w0.shape[1]):
            w_plus = w0.copy()
            w_plus[i, j] += step
            w_minus = w0.copy()
            w_minus[i, j] -= step
            f_plus = ce_loss(z, y, ClassifierWeights(w_plus), tau)
            f_minus = ce_loss(z, y, ClassifierWeights(w_minus), tau)
            g[i, j] = (f_plus - f_minus) / (2.0 * step)
    return g


def check_identity(seed: int = 0, trials: int = 1000) -> CheckResult:
    """Closed form vs. explicit gradient route, relative to the explicit one."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        r, w, tau = random_instance(rng)
        s_closed, _, _ = gradnorm_score(r, w, tau)
        s_direct = score_direct(r, w, tau)
        worst = max(worst, abs(s_closed - s_direct) / max(s_direct, 1e-12))
    return CheckResult("closed-form identity", trials, worst, REL_TOL, worst <= REL_TOL)


def check_finite_diff(seed: int = 0, trials: int = 60) -> CheckResult:
    """Explicit score vs. the score of the finite-difference gradient.

    Trials are fewer than the identity check because every trial runs
    2 * dim * classes loss evaluations.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        r, w, tau = random_instance(rng)
        pred = int(np.argmax(raw_logits(r, w)))
        g_fd = fd_grad(r, pred, w, tau)
        s_fd = float((g_fd * g_fd).sum())
        s_direct = score_direct(r, w, tau)
        worst = max(worst, abs(s_direct - s_fd) / max(s_fd, 1e-12))
    return CheckResult("finite differences", trials, worst, REL_TOL, worst <= REL_TOL)


def check_self_bounding(seed: int = 0, trials: int = 1000) -> CheckResult:
    """score <= 2 tau^2 * loss at the predicted label, zero violations."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    violations = 0
    for _ in range(trials):
        r, w, tau = random_instance(rng)
        s, pred, _ = gradnorm_score(r, w, tau)
        bound = 2.0 * tau * tau * ce_loss(r, pred, w, tau)
        margin = s - bound   # must stay <= 0
        worst = max(worst, margin)
        if margin > 0.0:
            violations += 1
    return CheckResult("self-bounding", trials, worst, 0.0, violations == 0)


def check_fixed_point(seed: int = 0, trials: int = 20,
                      residual_tol: float = 1e-6,
                      centroid_tol: float = 1e-4) -> CheckResult:
    """Fixed-point iteration residual, plus the tiny-tau centroid limit.

    Labels follow a nearest-prototype rule rather than pure noise: the update
    rescales each class sum onto the sphere, and only label assignments with
    some geometric coherence admit a stationary point with positive radial
    multiplier. Under label-free noise the class sums point away from every
    column and the update map has only flip cycles, so the residual cannot
    vanish for any iteration scheme. Pseudo-labels in the pipeline come from
    k-means, which is exactly this coherent regime.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(trials):
        d = int(rng.integers(3, 17))
        c = int(rng.integers(2, 6))
        n = int(rng.integers(4 * c, 201))
        x = rng.standard_normal((n, d))
        x /= np.sqrt((x * x).sum(axis=1))[:, None]
        while True:
            protos = rng.standard_normal((c, d))
            protos /= np.sqrt((protos * protos).sum(axis=1))[:, None]
            y = np.argmax(x @ protos.T, axis=1)
            if np.unique(y).size == c:
                break
        res = fixed_point_weights(x, y, tau=1.0)
        worst = max(worst, res.residual)
        if res.residual > residual_tol:
            ok = False
        limit = fixed_point_weights(x, y, tau=1e-6)
        cent = centroid_limit(x, y)
        gap = np.sqrt(((limit.weights.matrix - cent.matrix) ** 2).sum(axis=0)).max()
        if gap > centroid_tol:
            ok = False
            worst = max(worst, float(gap))
    return CheckResult("fixed point", trials, worst, residual_tol, ok)


def run_all(seed: int = 0, trials: int = 1000) -> list[CheckResult]:
    return [
        check_identity(seed, trials),
        check_finite_diff(seed, max(10, trials // 16)),
        check_self_bounding(seed, trials),
        check_fixed_point(seed, max(5, trials // 50)),
    ]
