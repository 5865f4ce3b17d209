"""Black-box atom solver: stochastic gradient ascent on the residual ELBO.

The inner Frank-Wolfe step fits a fresh atom s by maximizing

    E_s[log p(x, z)] - lambda * E_s[log s(z)] - E_s[log q_t(z)]

over the atom's (loc, log-scale) parameters.  With ``q_t`` absent and
lambda = 1 this is exactly the ELBO, i.e. plain black-box VI.  Gradients come
either from the reparameterization trick (needs the model gradient) or from
the score-function estimator with a baseline; the entropy term is always
handled analytically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .densities import BaseDensity, Family, Mixture, standard_noise
from .models import TargetModel, grad_log_joint_batch, log_joint_batch


class Estimator(str, enum.Enum):
    REPARAMETERIZATION = "reparameterization"
    SCORE_FUNCTION = "score_function"


class InitScheme(str, enum.Enum):
    RANDOM_NORMAL = "random_normal"
    PERTURB_CURRENT = "perturb_current"


@dataclass(frozen=True)
class LambdaSchedule:
    """Entropy-weight schedule: ``inverse_sqrt`` gives 1/sqrt(t+1)."""

    kind: str = "inverse_sqrt"  # "inverse_sqrt" | "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("inverse_sqrt", "constant"):
            raise ValueError(f"unknown lambda schedule {self.kind!r}")
        if self.value <= 0:
            raise ValueError("lambda must be positive")


def lambda_at(t: int, schedule: LambdaSchedule) -> float:
    if t < 0:
        raise ValueError("iteration index must be >= 0")
    if schedule.kind == "inverse_sqrt":
        return 1.0 / math.sqrt(t + 1.0)
    return schedule.value


@dataclass(frozen=True)
class LmoConfig:
    family: Family = Family.GAUSSIAN
    n_mc_samples: int = 32
    n_steps: int = 2000
    step_size: float = 0.01
    estimator: Estimator = Estimator.REPARAMETERIZATION
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    scale_floor: float = 1e-3
    param_box: float = 1e3
    init: InitScheme = InitScheme.RANDOM_NORMAL
    seed: int = 0

    def __post_init__(self):
        if self.n_mc_samples < 1:
            raise ValueError("n_mc_samples must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.scale_floor <= 0:
            raise ValueError("scale_floor must be positive")
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "init", InitScheme(self.init))


@dataclass(frozen=True)
class LmoResult:
    atom: BaseDensity
    relbo_estimate: float
    converged: bool
    steps_used: int


def _draw(s: BaseDensity, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    eps = standard_noise(s.family, n, s.dim, rng)
    return eps, s.transform(eps)


def relbo_estimate(
    s: BaseDensity,
    model: TargetModel,
    q_t: Optional[Mixture],
    lam: float,
    n: int,
    seed,
) -> float:
    """Monte-Carlo residual-ELBO estimate over ``n`` samples from ``s``.

    Without ``q_t`` (first iteration) the residual term is dropped, so with
    lam = 1 this is the plain ELBO estimate on the same samples.
    """
    if s.dim != model.dim:
        raise ValueError("atom and model dimension disagree")
    _, z = _draw(s, n, seed)
    val = np.mean(log_joint_batch(model, z)) - lam * np.mean(s.log_prob(z))
    if q_t is not None:
        if q_t.dim != model.dim:
            raise ValueError("mixture and model dimension disagree")
        val = val - np.mean(q_t.log_prob(z))
    return float(val)


def elbo_estimate(s: BaseDensity, model: TargetModel, n: int, seed) -> float:
    """Plain black-box VI objective: RELBO with lam = 1 and no current iterate."""
    return relbo_estimate(s, model, None, 1.0, n, seed)


def _score_param_grads(s: BaseDensity, z: np.ndarray):
    """d log s(z) / d loc and / d log-scale, per sample and coordinate."""
    u = (z - s.loc) / s.scale
    if s.family is Family.GAUSSIAN:
        return u / s.scale, u * u - 1.0
    return np.sign(u) / s.scale, np.abs(u) - 1.0


def _relbo_grad_parts(
    s: BaseDensity,
    model: TargetModel,
    q_t: Optional[Mixture],
    lam: float,
    n: int,
    seed,
    estimator: Estimator,
    baseline: Optional[float],
):
    """Returns (g_loc, g_log_scale, relbo_value, residual_mean)."""
    eps, z = _draw(s, n, seed)
    f = log_joint_batch(model, z)  # residual integrand: log p - log q_t
    if q_t is not None:
        f = f - q_t.log_prob(z)
    log_s = s.log_prob(z)
    value = float(np.mean(f) - lam * np.mean(log_s))

    if estimator is Estimator.REPARAMETERIZATION:
        if model.grad_log_joint is None:
            raise ValueError("reparameterization estimator needs the model gradient")
        g = grad_log_joint_batch(model, z)
        if q_t is not None:
            g = g - q_t.grad_log_prob(z)
        g_loc = g.mean(axis=0)
        g_log_scale = np.mean(g * eps, axis=0) * s.scale
    else:
        b = float(np.mean(f)) if baseline is None else baseline
        d_loc, d_log_scale = _score_param_grads(s, z)
        centered = (f - b)[:, None]
        g_loc = np.mean(centered * d_loc, axis=0)
        g_log_scale = np.mean(centered * d_log_scale, axis=0)
    # entropy term handled analytically: d(lam * H)/d log-scale = lam per coordinate
    g_log_scale = g_log_scale + lam
    return g_loc, g_log_scale, value, float(np.mean(f))


def relbo_grad(
    s: BaseDensity,
    model: TargetModel,
    q_t: Optional[Mixture],
    lam: float,
    n: int,
    seed,
    estimator: Estimator = Estimator.REPARAMETERIZATION,
    baseline: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stochastic gradient of the RELBO w.r.t. (loc, log-scale)."""
    g_loc, g_log_scale, _, _ = _relbo_grad_parts(
        s, model, q_t, lam, n, seed, Estimator(estimator), baseline
    )
    return g_loc, g_log_scale


def _softplus(x):
    return np.logaddexp(0.0, x)


def _inv_softplus(y):
    # inverse of softplus for y > 0
    return y + np.log(-np.expm1(-y))


class _Adam:
    """Per-coordinate adaptive steps for the atom parameters."""

    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _initial_params(
    model: TargetModel,
    q_t: Optional[Mixture],
    cfg: LmoConfig,
    rng: np.random.Generator,
):
    d = model.dim
    if cfg.init is InitScheme.PERTURB_CURRENT and q_t is not None:
        anchor = q_t.atoms[int(np.argmax(q_t.weights))]
        loc = anchor.loc + 0.5 * rng.standard_normal(d)
        scale0 = np.maximum(anchor.scale, cfg.scale_floor + 1e-6)
    else:
        loc = rng.standard_normal(d)
        # start narrow: wide inits tend to settle on mode-averaging atoms
        scale0 = np.full(d, 0.5)
    u = _inv_softplus(np.maximum(scale0 - cfg.scale_floor, 1e-6))
    return np.clip(loc, -cfg.param_box, cfg.param_box), u


def lmo_solve(
    model: TargetModel,
    q_t: Optional[Mixture],
    t: int,
    cfg: LmoConfig,
) -> LmoResult:
    """Fit one atom by stochastic gradient ascent on the RELBO.

    The scale runs through ``scale_floor + softplus(u)`` so the returned atom
    is never degenerate; locations are clipped to the parameter box.  The best
    iterate under an exponential moving average of the RELBO estimate is
    returned.  Deterministic given (model, q_t, t, cfg).
    """
    lam = lambda_at(t, cfg.lambda_schedule)
    ss = np.random.SeedSequence(entropy=(cfg.seed, t))
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    step_seeds = ss.spawn(cfg.n_steps + 1)

    last_error: Exception | None = None
    for attempt in range(2):
        loc, u = _initial_params(model, q_t, cfg, init_rng)
        opt = _Adam(2 * model.dim, cfg.step_size)
        ema = None
        best_ema = -np.inf
        best_params = (loc.copy(), u.copy())
        baseline = None
        ema_checkpoint = None
        failed = False
        for k in range(cfg.n_steps):
            scale = cfg.scale_floor + _softplus(u)
            atom = BaseDensity(cfg.family, loc, scale, cfg.scale_floor, cfg.param_box)
            g_loc, g_log_scale, value, f_mean = _relbo_grad_parts(
                atom, model, q_t, lam, cfg.n_mc_samples,
                step_seeds[k], cfg.estimator, baseline,
            )
            if not (np.all(np.isfinite(g_loc)) and np.all(np.isfinite(g_log_scale))
                    and np.isfinite(value)):
                failed = True
                break
            # running-mean baseline for the score-function estimator
            baseline = f_mean if baseline is None else 0.9 * baseline + 0.1 * f_mean
            ema = value if ema is None else 0.9 * ema + 0.1 * value
            if k >= min(20, cfg.n_steps // 10) and ema > best_ema:
                best_ema = ema
                best_params = (loc.copy(), u.copy())
            if k == (3 * cfg.n_steps) // 4:
                ema_checkpoint = ema
            # chain rule through scale = floor + softplus(u)
            g_u = g_log_scale * expit(u) / scale
            delta = opt.step(np.concatenate([g_loc, g_u]))
            loc = np.clip(loc + delta[: model.dim], -cfg.param_box, cfg.param_box)
            u = u + delta[model.dim:]
        if failed:
            last_error = RuntimeError("non-finite RELBO objective during LMO solve")
            continue
        loc, u = best_params
        scale = cfg.scale_floor + _softplus(u)
        atom = BaseDensity(cfg.family, loc, scale, cfg.scale_floor, cfg.param_box)
        if best_ema == -np.inf:
            best_ema = ema if ema is not None else float("nan")
        converged = (
            ema_checkpoint is not None
            and abs(best_ema - ema_checkpoint) <= 1e-2 * (1.0 + abs(best_ema))
        )
        return LmoResult(atom, float(best_ema), converged, cfg.n_steps)
    raise last_error or RuntimeError("LMO solve failed")
