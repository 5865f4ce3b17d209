"""Functional Frank-Wolfe boosting loop with three step-size policies.

Variant 0 uses the fixed schedule gamma = 2 / (delta * t + 2), variant 1 a
Monte-Carlo line search over the blend weight, and variant 2 a fully
corrective simplex Frank-Wolfe solve over all atom weights.  A Monte-Carlo
duality-gap estimate per iteration doubles as stopping certificate, and
``curvature_probe`` exposes the smoothness surrogate used in the theory
checks.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .densities import (
    BaseDensity,
    Family,
    Mixture,
    QuadratureGrid,
    quadrature_kl,
    standard_noise,
    _trapezoid,
)
from .lmo import LambdaSchedule, LmoConfig, LmoResult, lmo_solve
from .models import TargetModel, log_joint_batch

ATOM_MERGE_TOL = 1e-9


def _entropy_int(seed) -> int:
    """Fold a seed-like value into an integer usable as SeedSequence entropy."""
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


class Variant(str, enum.Enum):
    FIXED_STEP = "fixed_step"
    LINE_SEARCH = "line_search"
    FULLY_CORRECTIVE = "fully_corrective"


@dataclass(frozen=True)
class FwConfig:
    variant: Variant = Variant.FIXED_STEP
    max_iters: int = 10
    delta: float = 1.0  # assumed LMO accuracy, enters the step size and certificate
    gap_tolerance: float = 0.0
    gap_samples: int = 2048
    seed: int = 0
    lmo: LmoConfig = field(default_factory=LmoConfig)
    line_search_grid: int = 21
    corrective_iters: int = 200

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be nonnegative")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass
class IterationRecord:
    t: int
    gamma: float
    train_ll: float
    relbo_estimate: float
    gap_estimate: Optional[float] = None
    gap_stderr: Optional[float] = None
    kl_oracle: Optional[float] = None
    wallclock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "gamma": self.gamma,
            "train_ll": self.train_ll,
            "relbo_estimate": self.relbo_estimate,
            "gap_estimate": self.gap_estimate,
            "gap_stderr": self.gap_stderr,
            "kl_oracle": self.kl_oracle,
            "wallclock": self.wallclock,
        }


@dataclass
class BoostTrace:
    records: list[IterationRecord]
    mixtures: list[Mixture]
    eps0: Optional[float] = None
    best_iteration: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "mixtures": [
                {
                    "weights": m.weights.tolist(),
                    "atoms": [
                        {
                            "family": a.family.value,
                            "loc": a.loc.tolist(),
                            "scale": a.scale.tolist(),
                        }
                        for a in m.atoms
                    ],
                }
                for m in self.mixtures
            ],
            "eps0": self.eps0,
            "best_iteration": self.best_iteration,
            "stopped_early": self.stopped_early,
        }


def fixed_step_gamma(t: int, delta: float) -> float:
    """Variant-0 step size 2 / (delta * t + 2)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    return 2.0 / (delta * t + 2.0)


def _atoms_equal(a: BaseDensity, b: BaseDensity) -> bool:
    return (
        a.family is b.family
        and a.dim == b.dim
        and np.max(np.abs(a.loc - b.loc)) <= ATOM_MERGE_TOL
        and np.max(np.abs(a.scale - b.scale)) <= ATOM_MERGE_TOL
    )


def mixture_step(q_t: Mixture, s: BaseDensity, gamma: float) -> Mixture:
    """Convex step (1 - gamma) * q_t + gamma * s, merging duplicate atoms."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return q_t
    if gamma == 1.0:
        return Mixture.single(s)
    atoms = list(q_t.atoms)
    weights = list(q_t.weights * (1.0 - gamma))
    for i, a in enumerate(atoms):
        if _atoms_equal(a, s):
            weights[i] += gamma
            break
    else:
        atoms.append(s)
        weights.append(gamma)
    return Mixture.from_unnormalized(atoms, weights)


def _crn_mixture_sampler(atoms: list[BaseDensity], n: int, seed):
    """Common-random-number sampler over a fixed atom list.

    Draws one uniform per sample for component selection and one standardized
    noise row per (sample, atom family) so that evaluations at different
    weight vectors are paired.
    """
    rng = np.random.default_rng(seed)
    dim = atoms[0].dim
    u = rng.uniform(size=n)
    noise = {}
    for fam in {a.family for a in atoms}:
        noise[fam] = standard_noise(fam, n, dim, rng)

    def sample(weights: np.ndarray) -> np.ndarray:
        edges = np.cumsum(weights)
        edges[-1] = 1.0
        idx = np.searchsorted(edges, u, side="right")
        idx = np.minimum(idx, len(atoms) - 1)
        out = np.empty((n, dim))
        for k, atom in enumerate(atoms):
            sel = idx == k
            if np.any(sel):
                out[sel] = atom.transform(noise[atom.family][sel])
        return out

    return sample


def _neg_elbo_of_weights(
    atoms: list[BaseDensity], model: TargetModel, sampler
) -> Callable[[np.ndarray], float]:
    """KL-up-to-a-constant surrogate E_q[log q - log p] under CRN sampling."""

    def objective(weights: np.ndarray) -> float:
        q = Mixture.from_unnormalized(atoms, weights)
        z = sampler(weights)
        return float(np.mean(q.log_prob(z) - log_joint_batch(model, z)))

    return objective


def line_search_gamma(
    q_t: Mixture,
    s: BaseDensity,
    model: TargetModel,
    n_grid: int = 21,
    n_samples: int = 2048,
    seed=0,
) -> float:
    """Variant-1 step size: grid search plus golden-section refinement of the
    blended negative ELBO, with common random numbers across gamma.  Ties are
    broken toward smaller gamma."""
    atoms = list(q_t.atoms) + [s]
    sampler = _crn_mixture_sampler(atoms, n_samples, seed)
    objective = _neg_elbo_of_weights(atoms, model, sampler)

    def blend_weights(gamma: float) -> np.ndarray:
        return np.concatenate([q_t.weights * (1.0 - gamma), [gamma]])

    gammas = np.linspace(0.0, 1.0, n_grid)
    values = np.array([objective(blend_weights(g)) for g in gammas])
    best = int(np.argmin(values))  # argmin takes the first minimum: small-gamma tie-break
    if values[best] >= values[0] - 1e-12:
        return 0.0
    lo = gammas[max(best - 1, 0)]
    hi = gammas[min(best + 1, n_grid - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = objective(blend_weights(c)), objective(blend_weights(d))
    for _ in range(40):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = objective(blend_weights(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = objective(blend_weights(d))
    refined = (a + b) / 2.0
    if objective(blend_weights(refined)) < values[best]:
        return float(refined)
    return float(gammas[best])


def fully_corrective_weights(
    atoms,
    model: TargetModel,
    n_samples: int = 2048,
    seed=0,
    inner_iters: int = 200,
) -> np.ndarray:
    """Variant-2 weight solve: simplex-constrained Frank-Wolfe on the
    Monte-Carlo negative ELBO, with fixed per-atom samples (CRN).

    Uses the identity grad_i = E_{s_i}[log q_w - log p] (up to a constant on
    the simplex) so one batch of samples per atom serves every inner step.
    """
    atoms = list(atoms)
    k = len(atoms)
    if k == 1:
        return np.array([1.0])
    ss = np.random.SeedSequence(entropy=(_entropy_int(seed), 1414))
    seeds = ss.spawn(k)
    # per-atom fixed samples and cached log densities
    comp_logs = []  # comp_logs[i]: (n, k) log s_j under atom i's samples
    logp = []
    for i, atom in enumerate(atoms):
        z = atom.sample(n_samples, seeds[i])
        comp_logs.append(np.stack([a.log_prob(z) for a in atoms], axis=1))
        logp.append(log_joint_batch(model, z))
    w = np.full(k, 1.0 / k)
    for it in range(inner_iters):
        with np.errstate(divide="ignore"):
            logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)
        grad = np.empty(k)
        for i in range(k):
            shifted = comp_logs[i] + logw
            m = shifted.max(axis=1)
            logq = m + np.log(np.sum(np.exp(shifted - m[:, None]), axis=1))
            grad[i] = np.mean(logq - logp[i])
        j = int(np.argmin(grad))
        fw_gap = float(w @ grad - grad[j])
        if fw_gap <= 1e-8:
            break
        gamma = 2.0 / (it + 2.0)
        w = (1.0 - gamma) * w
        w[j] += gamma
    return w / w.sum()


class GapEstimate(NamedTuple):
    value: float
    stderr: float


def duality_gap_estimate(
    q_t: Mixture, s_t: BaseDensity, model: TargetModel, n: int, seed
) -> GapEstimate:
    """Monte-Carlo estimate of <q_t - s_t, log(q_t / p)> with its standard error.

    ``p`` enters only through the unnormalized log-joint; the normalizer
    cancels between the two expectations.
    """
    if q_t.dim != model.dim or s_t.dim != model.dim:
        raise ValueError("dimension mismatch")
    ss = np.random.SeedSequence(entropy=(_entropy_int(seed), 1618))
    sq, ssamp = ss.spawn(2)
    zq = q_t.sample(n, sq)
    zs = s_t.sample(n, ssamp)
    aq = q_t.log_prob(zq) - log_joint_batch(model, zq)
    as_ = q_t.log_prob(zs) - log_joint_batch(model, zs)
    value = float(np.mean(aq) - np.mean(as_))
    stderr = float(math.sqrt(np.var(aq) / n + np.var(as_) / n))
    return GapEstimate(value, stderr)


def certificate_gap(
    q_t: Mixture,
    candidates: list[BaseDensity],
    model: TargetModel,
    n: int,
    seed,
    spike_probe: bool = True,
) -> tuple[GapEstimate, int]:
    """Best Monte-Carlo gap over a candidate atom pool.

    The true duality gap is a supremum over all atoms; any finite pool gives a
    lower estimate, so the pool max is the tightest certificate available.
    Pools that include the current mixture's own atoms keep the estimate
    nonnegative in expectation, since the weighted atom gaps sum to zero.
    With ``spike_probe`` the pool also gets a narrow atom at the sampled point
    the mixture under-covers the most — the supremum is approached by
    shrinking atoms at the residual minimizer, so this candidate tightens the
    certificate further (it never influences the returned index).

    Returns the best estimate and the index of the provided atom attaining the
    best gap among ``candidates``.
    """
    if not candidates:
        raise ValueError("need at least one candidate atom")
    ss = np.random.SeedSequence(entropy=(_entropy_int(seed), 1618))
    seeds = ss.spawn(len(candidates) + 2)
    zq = q_t.sample(n, seeds[0])
    aq = q_t.log_prob(zq) - log_joint_batch(model, zq)

    def atom_estimate(s: BaseDensity, s_seed) -> GapEstimate:
        zs = s.sample(n, s_seed)
        as_ = q_t.log_prob(zs) - log_joint_batch(model, zs)
        return GapEstimate(
            float(np.mean(aq) - np.mean(as_)),
            float(math.sqrt(np.var(aq) / n + np.var(as_) / n)),
        )

    best: Optional[GapEstimate] = None
    best_idx = 0
    for i, s in enumerate(candidates):
        est = atom_estimate(s, seeds[i + 1])
        if best is None or est.value > best.value:
            best, best_idx = est, i
    if spike_probe:
        anchor = candidates[best_idx]
        z_star = zq[int(np.argmin(aq))]
        probe = BaseDensity(
            anchor.family,
            z_star,
            np.maximum(0.1 * np.mean([a.scale for a in q_t.atoms], axis=0),
                       anchor.scale_floor),
            anchor.scale_floor,
            anchor.param_box,
        )
        est = atom_estimate(probe, seeds[-1])
        if est.value > best.value:
            best = est
    return best, best_idx


def curvature_probe(
    s: BaseDensity, q: Mixture, gammas, grid: QuadratureGrid
) -> list[float]:
    """(2 / gamma^2) * KL(q + gamma (s - q) || q) by 1-D quadrature, per gamma."""
    if s.dim != 1 or q.dim != 1:
        raise ValueError("curvature probe is 1-D only")
    z = grid.points()
    dens_s = np.exp(s.log_prob(z.reshape(-1, 1)))
    dens_q = np.exp(q.log_prob(z.reshape(-1, 1)))
    out = []
    for gamma in gammas:
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        y = dens_q + gamma * (dens_s - dens_q)
        assert np.all(y >= 0.0), "blended density went negative"
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.where(y > 0, y * (np.log(y) - np.log(dens_q)), 0.0)
        kl = float(_trapezoid(integrand, z))
        out.append(2.0 / gamma**2 * kl)
    return out


_ORACLE_GRID = QuadratureGrid(-12.0, 12.0, 4001)


def _kl_oracle(model: TargetModel, q: Mixture) -> Optional[float]:
    if model.posterior_log_pdf is None or model.dim != 1:
        return None
    return quadrature_kl(q, model.posterior_log_pdf, _ORACLE_GRID)


def run_boosting(
    model: TargetModel,
    cfg: FwConfig,
    progress: Optional[Callable[[IterationRecord], None]] = None,
) -> tuple[Mixture, BoostTrace]:
    """Algorithm: plain BBVI for the initial iterate, then greedy residual
    atoms combined per the configured variant, with a duality-gap certificate
    each iteration.  Returns the iterate with the best training log-likelihood
    (the MC ELBO stands in when the model carries no training data)."""
    ss = np.random.SeedSequence(entropy=(cfg.seed, 2718))
    lmo_seeds = ss.spawn(cfg.max_iters + 2)
    gap_seeds = ss.spawn(cfg.max_iters + 2)
    step_seeds = ss.spawn(cfg.max_iters + 1)
    metric_seed = ss.spawn(1)[0]

    def solve(q: Optional[Mixture], t: int) -> LmoResult:
        lmo_cfg = replace(cfg.lmo, seed=int(lmo_seeds[t].generate_state(1)[0]))
        if q is None:
            # initial iterate is a plain black-box VI fit: full entropy weight
            lmo_cfg = replace(lmo_cfg, lambda_schedule=LambdaSchedule("constant", 1.0))
        return lmo_solve(model, q, t, lmo_cfg)

    def train_ll(q: Mixture) -> float:
        # common seed across iterates: paired comparisons for selection
        z = q.sample(cfg.gap_samples, metric_seed)
        if model.train_log_likelihood is not None:
            return float(model.train_log_likelihood(z))
        return float(np.mean(log_joint_batch(model, z) - q.log_prob(z)))

    t_start = time.perf_counter()
    res0 = solve(None, 0)
    q = Mixture.single(res0.atom)
    records = [
        IterationRecord(
            t=0,
            gamma=1.0,
            train_ll=train_ll(q),
            relbo_estimate=res0.relbo_estimate,
            kl_oracle=_kl_oracle(model, q),
            wallclock=time.perf_counter() - t_start,
        )
    ]
    mixtures = [q]
    if progress:
        progress(records[0])
    stopped = False

    for t in range(1, cfg.max_iters + 1):
        t_iter = time.perf_counter()
        res = solve(q, t)
        candidates = [res.atom] + list(q.atoms)
        gap, best_cand = certificate_gap(
            q, candidates, model, cfg.gap_samples,
            int(gap_seeds[t].generate_state(1)[0]),
        )
        records[-1].gap_estimate = gap.value
        records[-1].gap_stderr = gap.stderr
        # gap_tolerance = 0 disables stopping: the MC gap estimate of an
        # approximate LMO can dip below zero even when the primal error is not
        if cfg.gap_tolerance > 0.0 and gap.value / cfg.delta <= cfg.gap_tolerance:
            stopped = True
            break
        step_seed = int(step_seeds[t - 1].generate_state(1)[0])
        # the step direction is the pool's best-gap atom: exact Frank-Wolfe
        # restricted to {fresh atom} + current support
        direction = candidates[best_cand]
        if cfg.variant is Variant.FIXED_STEP:
            gamma = fixed_step_gamma(t, cfg.delta)
            q = mixture_step(q, direction, gamma)
        elif cfg.variant is Variant.LINE_SEARCH:
            gamma = line_search_gamma(
                q, direction, model,
                n_grid=cfg.line_search_grid, n_samples=cfg.gap_samples, seed=step_seed,
            )
            q = mixture_step(q, direction, gamma)
        else:
            trial = mixture_step(q, res.atom, 0.5)  # appends/merges the atom
            weights = fully_corrective_weights(
                trial.atoms, model,
                n_samples=cfg.gap_samples, seed=step_seed, inner_iters=cfg.corrective_iters,
            )
            q = Mixture(trial.atoms, weights)
            gamma = float(weights[-1]) if len(weights) == len(trial.atoms) else 0.0
        records.append(
            IterationRecord(
                t=t,
                gamma=gamma,
                train_ll=train_ll(q),
                relbo_estimate=res.relbo_estimate,
                kl_oracle=_kl_oracle(model, q),
                wallclock=time.perf_counter() - t_iter,
            )
        )
        mixtures.append(q)
        if progress:
            progress(records[-1])

    if not stopped and cfg.max_iters > 0:
        # certificate for the final iterate needs one extra LMO solve
        final_t = len(records)
        res_fin = solve(q, final_t)
        gap, _ = certificate_gap(
            q, [res_fin.atom] + list(q.atoms), model, cfg.gap_samples,
            int(gap_seeds[final_t].generate_state(1)[0]),
        )
        records[-1].gap_estimate = gap.value
        records[-1].gap_stderr = gap.stderr

    best = int(np.argmax([r.train_ll for r in records]))
    trace = BoostTrace(
        records=records,
        mixtures=mixtures,
        eps0=records[0].kl_oracle,
        best_iteration=best,
        stopped_early=stopped,
    )
    return mixtures[best], trace
