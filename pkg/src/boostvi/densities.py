"""Mean-field location-scale base densities, mixtures, and 1-D quadrature oracles.

Atoms are diagonal Gaussian or Laplace densities with a hard lower bound on
every scale entry (non-degeneracy) and locations confined to a box.  Mixtures
are convex combinations of atoms; all log-density evaluation goes through a
max-shifted log-sum-exp.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_SCALE_FLOOR = 1e-3
DEFAULT_PARAM_BOX = 1e3

# trapezoid was renamed in numpy 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class CoarseGridError(ValueError):
    """Raised when doubling the quadrature resolution moves the result too much."""


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class BaseDensity:
    """A single mean-field atom: independent Gaussian or Laplace per coordinate.

    ``scale`` is the standard deviation for Gaussians and the diversity b for
    Laplace.  Every entry must sit at or above ``scale_floor`` and every
    location inside ``[-param_box, param_box]``.
    """

    family: Family
    loc: np.ndarray
    scale: np.ndarray
    scale_floor: float = DEFAULT_SCALE_FLOOR
    param_box: float = DEFAULT_PARAM_BOX

    def __post_init__(self):
        loc = _as_vector(self.loc, "loc")
        scale = _as_vector(self.scale, "scale")
        if loc.shape != scale.shape:
            raise ValueError("loc and scale must have the same length")
        if self.scale_floor <= 0:
            raise ValueError("scale_floor must be positive")
        if np.any(scale < self.scale_floor * (1.0 - 1e-12)):
            raise ValueError(f"scale entries must be >= scale_floor={self.scale_floor}")
        if np.any(np.abs(loc) > self.param_box):
            raise ValueError(
                f"loc entries must lie in the param_box [-{self.param_box}, {self.param_box}]"
            )
        loc.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    def _check_points(self, z) -> np.ndarray:
        Z = np.asarray(z, dtype=float)
        squeeze = Z.ndim == 1
        Z = np.atleast_2d(Z)
        if Z.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {Z.shape[1]}")
        return Z, squeeze

    def log_prob(self, z):
        """Log density at ``z``; accepts one point of shape (D,) or a batch (n, D)."""
        Z, squeeze = self._check_points(z)
        u = (Z - self.loc) / self.scale
        if self.family is Family.GAUSSIAN:
            lp = -0.5 * LOG_2PI - np.log(self.scale) - 0.5 * u * u
        else:
            lp = -np.log(2.0 * self.scale) - np.abs(u)
        out = lp.sum(axis=1)
        return float(out[0]) if squeeze else out

    def grad_log_prob(self, z):
        """Gradient of the log density in z, batched like :meth:`log_prob`."""
        Z, squeeze = self._check_points(z)
        u = (Z - self.loc) / self.scale
        if self.family is Family.GAUSSIAN:
            g = -u / self.scale
        else:
            g = -np.sign(u) / self.scale
        return g[0] if squeeze else g

    def entropy(self) -> float:
        """Closed-form differential entropy."""
        if self.family is Family.GAUSSIAN:
            return float(np.sum(0.5 * np.log(2.0 * math.pi * math.e * self.scale**2)))
        return float(np.sum(1.0 + np.log(2.0 * self.scale)))

    def log_sup_norm(self) -> float:
        if self.family is Family.GAUSSIAN:
            return float(-np.sum(np.log(self.scale * math.sqrt(2.0 * math.pi))))
        return float(-np.sum(np.log(2.0 * self.scale)))

    def sup_norm(self) -> float:
        """Maximum density value (attained at loc)."""
        return math.exp(self.log_sup_norm())

    def transform(self, eps: np.ndarray) -> np.ndarray:
        """Location-scale map applied to standardized noise of shape (n, D)."""
        return self.loc + self.scale * eps

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        return self.transform(standard_noise(self.family, n, self.dim, rng))


def standard_noise(family: Family, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Standardized noise: N(0,1) draws, or standard Laplace via inverse CDF."""
    if Family(family) is Family.GAUSSIAN:
        return rng.standard_normal((n, dim))
    u = rng.uniform(size=(n, dim)) - 0.5
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


# convenience free functions mirroring the method API

def base_log_prob(d: BaseDensity, z):
    return d.log_prob(z)


def entropy_closed_form(d: BaseDensity) -> float:
    return d.entropy()


def sup_norm(d: BaseDensity) -> float:
    return d.sup_norm()


def kl_gaussian_closed(p: BaseDensity, q: BaseDensity) -> float:
    """KL(p || q) for two diagonal Gaussians of equal dimension."""
    if p.family is not Family.GAUSSIAN or q.family is not Family.GAUSSIAN:
        raise ValueError("closed-form KL requires two Gaussian densities")
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    var_ratio = (p.scale / q.scale) ** 2
    mean_term = ((p.loc - q.loc) / q.scale) ** 2
    return float(0.5 * np.sum(var_ratio + mean_term - 1.0 - np.log(var_ratio)))


@dataclass(frozen=True)
class Mixture:
    """Convex combination of atoms with simplex weights."""

    atoms: tuple[BaseDensity, ...]
    weights: np.ndarray

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("mixture needs at least one atom")
        w = _as_vector(self.weights, "weights")
        if len(w) != len(atoms):
            raise ValueError("weights and atoms must have the same length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total}")
        dims = {a.dim for a in atoms}
        if len(dims) != 1:
            raise ValueError("all atoms must share one dimension")
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_unnormalized(cls, atoms, weights) -> "Mixture":
        w = _as_vector(weights, "weights")
        return cls(tuple(atoms), w / w.sum())

    @classmethod
    def single(cls, atom: BaseDensity) -> "Mixture":
        return cls((atom,), np.array([1.0]))

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    def _component_log_probs(self, Z: np.ndarray) -> np.ndarray:
        return np.stack([a.log_prob(Z) for a in self.atoms], axis=1)  # (n, K)

    def log_prob(self, z):
        Z = np.asarray(z, dtype=float)
        squeeze = Z.ndim == 1
        Z = np.atleast_2d(Z)
        if Z.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {Z.shape[1]}")
        comp = self._component_log_probs(Z)
        with np.errstate(divide="ignore"):
            logw = np.where(self.weights > 0, np.log(np.maximum(self.weights, 1e-300)), -np.inf)
        out = logsumexp(comp + logw, axis=1)
        return float(out[0]) if squeeze else out

    def grad_log_prob(self, z):
        """Responsibility-weighted atom score, batched like :meth:`log_prob`."""
        Z = np.asarray(z, dtype=float)
        squeeze = Z.ndim == 1
        Z = np.atleast_2d(Z)
        comp = self._component_log_probs(Z)
        with np.errstate(divide="ignore"):
            logw = np.where(self.weights > 0, np.log(np.maximum(self.weights, 1e-300)), -np.inf)
        logits = comp + logw
        resp = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))  # (n, K)
        grads = np.stack([a.grad_log_prob(Z) for a in self.atoms], axis=1)  # (n, K, D)
        out = np.einsum("nk,nkd->nd", resp, grads)
        return out[0] if squeeze else out

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(self.atoms), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, atom in enumerate(self.atoms):
            sel = idx == k
            m = int(sel.sum())
            if m:
                out[sel] = atom.transform(standard_noise(atom.family, m, self.dim, rng))
        return out


def mixture_log_prob(m: Mixture, z):
    return m.log_prob(z)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform 1-D grid for trapezoid-rule oracles."""

    lo: float
    hi: float
    n_points: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid requires lo < hi")
        if self.n_points < 3:
            raise ValueError("grid requires n_points >= 3")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)

    def doubled(self) -> "QuadratureGrid":
        return replace(self, n_points=2 * self.n_points - 1)


def _log_density_1d(obj, z: np.ndarray) -> np.ndarray:
    """Evaluate an object with ``log_prob`` or a plain callable on 1-D points."""
    if hasattr(obj, "log_prob"):
        return np.asarray(obj.log_prob(z.reshape(-1, 1)))
    return np.asarray(obj(z))


def _kl_on_grid(q, p, grid: QuadratureGrid) -> float:
    z = grid.points()
    lq = _log_density_1d(q, z)
    lp = _log_density_1d(p, z)
    # normalize p on the grid; q is assumed to be a proper density
    shift = lp.max()
    log_zp = shift + math.log(_trapezoid(np.exp(lp - shift), z))
    lp = lp - log_zp
    dens_q = np.exp(lq)
    integrand = np.where(dens_q > 0, dens_q * (lq - lp), 0.0)
    return float(_trapezoid(integrand, z))


def quadrature_kl(q, p, grid: QuadratureGrid, refine_tol: float | None = None) -> float:
    """Trapezoid estimate of KL(q || p) on a 1-D grid, renormalizing p.

    With ``refine_tol`` set, the grid resolution is doubled and a shift larger
    than the tolerance raises :class:`CoarseGridError`.
    """
    val = _kl_on_grid(q, p, grid)
    if refine_tol is not None:
        refined = _kl_on_grid(q, p, grid.doubled())
        if abs(refined - val) > refine_tol:
            raise CoarseGridError(
                f"KL quadrature moved by {abs(refined - val):.3g} (> {refine_tol:.3g}) "
                f"when doubling n_points={grid.n_points}"
            )
        val = refined
    return val
