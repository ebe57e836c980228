"""Convergence-bound constants, distance tracking and rate comparison.

For a subsystem of p leaders and one follower on a (mu, L)-strongly-convex
problem with step eta and elastic factor rho, the seed-averaged mean squared
distance to the optimum d_t is bounded by

    d_t <= h^t d_0 + (c_0 - eta^2 s1/gamma) (1-gamma)^t (1 - (p/(p+1))^t)
           + eta^2 s1 (1 - h^t)/gamma

with gamma = 2 eta mu L/(mu+L), h = p(1-gamma)/(p+1), s1 the gradient-noise
variance bound and c_0 the worst initial squared distance.  The bound's
tail decays like (1-gamma)^t (the h^t term only dominates early), and with
noise it flattens at eta^2 s1/gamma.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError


@dataclass
class TheoryParams:
    eta: float
    rho: float
    alpha: float
    p: int
    beta: float
    gamma: float
    h: float
    k_const: float
    sigma1_sq: float
    c0: float
    d0: float

    def as_dict(self):
        return {
            "eta": self.eta,
            "rho": self.rho,
            "alpha": self.alpha,
            "p": self.p,
            "beta": self.beta,
            "gamma": self.gamma,
            "h": self.h,
            "k_const": self.k_const,
            "sigma1_sq": self.sigma1_sq,
            "c0": self.c0,
            "d0": self.d0,
        }


@dataclass
class DistanceSeries:
    d: np.ndarray
    seeds_averaged: int
    stderr: Optional[np.ndarray] = None


def subsystem_p(m, follower_count):
    """Leaders per follower for whole-system runs, rounded to nearest integer."""
    return int((m - follower_count) / follower_count + 0.5)


def derive_theory_params(problem, hp, p, sigma1_sq, initial_ws):
    """Compute the bound constants, rejecting out-of-domain configurations."""
    if problem.kind == "mlp" or not problem.convex:
        raise ValidationError("theory constants need a strongly convex problem")
    if problem.mu is None or problem.lipschitz is None or problem.mu <= 0:
        raise ValidationError("theory constants need known mu > 0 and L")
    if problem.optimum is None:
        raise ValidationError("theory constants need a known optimum")
    if p < 1:
        raise ValidationError("p must be >= 1")
    if sigma1_sq < 0:
        raise ValidationError("sigma1_sq must be >= 0")
    alpha = hp.eta * hp.rho
    beta = p * alpha
    if alpha >= 1.0:
        raise ValidationError(f"alpha = {alpha:.6g} must be < 1")
    if beta >= 1.0:
        raise ValidationError(f"beta = p*alpha = {beta:.6g} must be < 1")
    mu, L = problem.mu, problem.lipschitz
    limit = 2.0 * (1.0 - beta) / (mu + L)
    if hp.eta > limit:
        raise ValidationError(
            f"eta = {hp.eta} exceeds 2*(1-beta)/(mu+L) = {limit:.6g}"
        )
    gamma = 2.0 * hp.eta * mu * L / (mu + L)
    h = p * (1.0 - gamma) / (p + 1)
    k_const = (1.0 - gamma) / (p + 1)
    sq = [float(np.dot(w - problem.optimum, w - problem.optimum)) for w in initial_ws]
    return TheoryParams(
        eta=hp.eta,
        rho=hp.rho,
        alpha=alpha,
        p=p,
        beta=beta,
        gamma=gamma,
        h=h,
        k_const=k_const,
        sigma1_sq=float(sigma1_sq),
        c0=max(sq),
        d0=float(np.mean(sq)),
    )


def distance_bound(tp, t):
    """Upper bound for d_t; accepts a scalar or an array of iterations."""
    t = np.asarray(t, dtype=np.float64)
    floor = tp.eta ** 2 * tp.sigma1_sq / tp.gamma
    ht = tp.h ** t
    decay = (1.0 - tp.gamma) ** t
    frac = 1.0 - (tp.p / (tp.p + 1.0)) ** t
    out = ht * tp.d0 + (tp.c0 - floor) * decay * frac + floor * (1.0 - ht)
    return float(out) if out.ndim == 0 else out


def mean_square_distance(ws, w_star):
    """Average squared distance of the given parameter vectors to the optimum."""
    if len(ws) == 0:
        raise ValidationError("need at least one vector")
    acc = 0.0
    for w in ws:
        diff = np.asarray(w) - w_star
        acc += float(np.dot(diff, diff))
    return acc / len(ws)


def measure_distance_series(traces):
    """Seed-average the per-iteration distance series of an ensemble."""
    if len(traces) == 0:
        raise ValidationError("empty trace ensemble")
    for tr in traces:
        if tr.d_t is None:
            raise ValidationError(
                "trace lacks a distance series; run in theory mode with a known optimum"
            )
    stacked = np.stack([tr.d_t for tr in traces])
    n = stacked.shape[0]
    stderr = stacked.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else None
    return DistanceSeries(d=stacked.mean(axis=0), seeds_averaged=n, stderr=stderr)


def empirical_tail_ratio(d, window=100):
    """Tail estimate of d_{t+1}/d_t over the last ``window`` transitions."""
    d = np.asarray(d)
    usable = d[:-1] > 0
    ratios = d[1:][usable] / d[:-1][usable]
    if len(ratios) == 0:
        return float("nan")
    return float(np.mean(ratios[-window:]))


def check_bound_dominance(series, tp, slack):
    """Verify d_t <= (1+slack)*bound(t) at every recorded iteration."""
    d = series.d
    t = np.arange(len(d))
    bound = distance_bound(tp, t)
    allowed = (1.0 + slack) * bound
    bad = np.nonzero(d > allowed)[0]
    ratio = empirical_tail_ratio(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(bound > 0, d / bound, np.inf)
    return {
        "pass": bool(len(bad) == 0),
        "first_violation_t": int(bad[0]) if len(bad) else None,
        "empirical_ratio": ratio,
        "h": tp.h,
        "slack": slack,
        "worst_excess_ratio": float(np.max(excess)),
        "seeds_averaged": series.seeds_averaged,
        "constants": tp.as_dict(),
    }


def privacy_tradeoff_floor(tp, clip_C, sigma2):
    """Asymptotic penalty the noise mechanism adds: eta^2 C^2 sigma2^2 / gamma.

    Independent of p by construction, which is what makes the private
    variant scale with the leader count.
    """
    return tp.eta ** 2 * clip_C ** 2 * sigma2 ** 2 / tp.gamma


def rate_comparison(h, p, t_grid):
    """Tabulate h^t against 1/((p+1)t) and find the permanent crossover.

    Exponential decay always overtakes the 1/t baseline; the report carries
    the first grid point after which it stays ahead, plus the index from
    which the product h^t (p+1) t is monotone decreasing.
    """
    if not 0.0 < h < 1.0:
        raise ValidationError("h must be in (0, 1)")
    t = np.asarray(t_grid, dtype=np.int64)
    if t.min() < 1:
        raise ValidationError("t grid must start at t >= 1")
    exp_rate = h ** t.astype(np.float64)
    base_rate = 1.0 / ((p + 1) * t)
    product = exp_rate * (p + 1) * t
    ahead = exp_rate < base_rate
    crossover = None
    for i in range(len(t)):
        if ahead[i:].all():
            crossover = int(t[i])
            break
    mono_from = None
    for i in range(len(t) - 1):
        if np.all(np.diff(product[i:]) < 0):
            mono_from = int(t[i])
            break
    return {
        "h": h,
        "p": p,
        "crossover_t": crossover,
        "monotone_decreasing_from": mono_from,
        "product_final": float(product[-1]),
        "t_grid": t.tolist(),
        "exponential": exp_rate.tolist(),
        "baseline": base_rate.tolist(),
    }
