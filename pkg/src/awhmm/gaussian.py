"""Gaussian distributions, closed-form divergences and PSD matrix functions.

The 2-Wasserstein distance between Gaussians never inverts a covariance, so
singular (degenerate) Gaussians are first-class citizens here.  Only the
likelihood code and the KL divergence need invertible covariances; the former
regularizes, the latter raises.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._rng import make_rng
from .errors import DimensionError, PSDError, SingularCovarianceError, SymmetryError

SYM_TOL = 1e-10
PSD_CLAMP = 1e-8
SINGULAR_TOL = 1e-12


def _check_symmetric(s, what="matrix"):
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {s.shape}")
    scale = 1.0 + (np.max(np.abs(s)) if s.size else 0.0)
    asym = np.max(np.abs(s - s.T)) if s.size else 0.0
    if not np.isfinite(asym) or asym > SYM_TOL * scale:
        raise SymmetryError(f"{what} is not symmetric (max asymmetry {asym:.3g})")
    return 0.5 * (s + s.T)


def _clamped_eigh(s, what="matrix"):
    lam, vec = np.linalg.eigh(s)
    scale = np.max(np.abs(lam)) if lam.size else 0.0
    if lam.size and lam[0] < -PSD_CLAMP * scale:
        raise PSDError(
            f"{what} is not positive semi-definite "
            f"(smallest eigenvalue {lam[0]:.3g}, largest {lam[-1]:.3g})"
        )
    return np.clip(lam, 0.0, None), vec


def sqrtm_psd(s):
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues in ``[-1e-8 * lambda_max, 0)`` are treated as round-off and
    set to zero; anything more negative raises :class:`PSDError`.
    """
    s = _check_symmetric(s)
    lam, vec = _clamped_eigh(s)
    r = (vec * np.sqrt(lam)) @ vec.T
    return 0.5 * (r + r.T)


def sym_expm(s):
    """Matrix exponential of a symmetric matrix (always symmetric PD)."""
    s = _check_symmetric(s)
    lam, vec = np.linalg.eigh(s)
    e = (vec * np.exp(lam)) @ vec.T
    return 0.5 * (e + e.T)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Full-covariance Gaussian ``N(mean, cov)``.

    The covariance is symmetrized on construction and small negative
    eigenvalues are clamped; the arrays are stored read-only.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0 and mean.size == 1:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("Gaussian parameters must be finite")
        cov = _check_symmetric(cov, "covariance")
        lam, vec = np.linalg.eigh(cov)
        scale = np.max(np.abs(lam))
        if lam[0] < -PSD_CLAMP * scale:
            raise PSDError(f"covariance is not PSD (smallest eigenvalue {lam[0]:.3g})")
        if lam[0] < 0:
            cov = (vec * np.clip(lam, 0.0, None)) @ vec.T
            cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @cached_property
    def _eig(self):
        lam, vec = np.linalg.eigh(self.cov)
        return np.clip(lam, 0.0, None), vec

    @cached_property
    def sqrt_cov(self):
        lam, vec = self._eig
        r = (vec * np.sqrt(lam)) @ vec.T
        return 0.5 * (r + r.T)

    @cached_property
    def factor(self):
        """``L`` with ``L @ L.T == cov``; defined for singular covariances too."""
        lam, vec = self._eig
        return vec * np.sqrt(lam)

    @property
    def is_singular(self):
        lam, _ = self._eig
        return lam[0] <= SINGULAR_TOL * max(lam[-1], 0.0)

    @cached_property
    def _likelihood_terms(self):
        cov = self.cov
        if self.is_singular:
            ridge = 1e-9 * np.trace(cov) / self.dim + 1e-12
            cov = cov + ridge * np.eye(self.dim)
        chol = np.linalg.cholesky(cov)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return chol, logdet

    def __eq__(self, other):
        if not isinstance(other, Gaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def _check_same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _key(g):
    return g.mean.tobytes() + g.cov.tobytes()


def _w2_squared(a, b):
    if a is b or a == b:
        return 0.0
    # fixed argument order makes the value bitwise symmetric
    if _key(a) > _key(b):
        a, b = b, a
    r = a.sqrt_cov
    m = r @ b.cov @ r
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))
    scale = np.max(np.abs(lam))
    if lam[0] < -PSD_CLAMP * max(scale, 1e-300):
        raise PSDError("intermediate product in W2 formula is not PSD")
    cross = np.sum(np.sqrt(np.clip(lam, 0.0, None)))
    trace_term = np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross
    diff = a.mean - b.mean
    return float(diff @ diff) + max(float(trace_term), 0.0)


def w2_gaussian(a, b):
    """Closed-form 2-Wasserstein distance between two Gaussians.

    .. math::
        W_2^2 = \\|\\mu_1-\\mu_2\\|^2
        + \\operatorname{tr}\\big(\\Sigma_1+\\Sigma_2
        - 2(\\Sigma_1^{1/2}\\Sigma_2\\Sigma_1^{1/2})^{1/2}\\big)

    Singular covariances are accepted.  The trace part is clamped at zero
    before the square root.
    """
    _check_same_dim(a, b)
    return float(np.sqrt(_w2_squared(a, b)))


def pairwise_w2(first, second):
    """Matrix of ``w2_gaussian`` over two component lists."""
    out = np.empty((len(first), len(second)))
    for i, a in enumerate(first):
        for j, b in enumerate(second):
            out[i, j] = w2_gaussian(a, b)
    return out


def kl_gaussian(a, b):
    """KL(a || b) in nats; raises if ``b`` has a singular covariance."""
    _check_same_dim(a, b)
    lam_b, _ = b._eig
    if lam_b[0] <= SINGULAR_TOL * lam_b[-1]:
        raise SingularCovarianceError(
            "KL divergence is infinite/undefined: second covariance is singular"
        )
    if a == b:
        return 0.0
    lam_a, _ = a._eig
    if lam_a[0] <= 0.0:
        return float("inf")
    d = a.dim
    chol = np.linalg.cholesky(b.cov)
    sol = np.linalg.solve(chol, a.cov)
    trace = float(np.trace(np.linalg.solve(chol.T, sol)))
    z = np.linalg.solve(chol, b.mean - a.mean)
    maha = float(z @ z)
    logdet_b = 2.0 * np.sum(np.log(np.diag(chol)))
    logdet_a = float(np.sum(np.log(lam_a)))
    return max(0.5 * (trace + maha - d + logdet_b - logdet_a), 0.0)


def log_pdf(g, x):
    """Log density of ``g`` at ``x`` (a point of shape (d,) or points (n, d)).

    Singular covariances get a small diagonal ridge so the value is finite.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != g.dim:
        raise DimensionError(f"point dimension {pts.shape[1]} != Gaussian dimension {g.dim}")
    chol, logdet = g._likelihood_terms
    z = np.linalg.solve(chol, (pts - g.mean).T)
    out = -0.5 * (np.sum(z * z, axis=0) + logdet + g.dim * np.log(2.0 * np.pi))
    return float(out[0]) if single else out


def sample_gaussian(g, n, seed):
    """Draw ``n`` points; deterministic given ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    z = rng.standard_normal((n, g.dim))
    return g.mean + z @ g.factor.T


def fit_gaussian(points):
    """Maximum-likelihood Gaussian (biased covariance) of a point set."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mean = pts.mean(axis=0)
    centered = pts - mean
    return Gaussian(mean, centered.T @ centered / len(pts))
