"""Synthetic spectral ground-truth models.

Everything downstream (regularization paths, online runs, error
decompositions) measures against a model defined here: an explicit
kernel eigen-system, a regression function with prescribed regularity,
and bounded noise. The default basis is the cosine family on [0, 1],

    phi_0(x) = 1,   phi_k(x) = sqrt(2) cos(pi k x)  (k >= 1),

orthonormal for the uniform measure, so every norm and path quantity
has a closed form in eigen-coordinates.

Functions are represented by their coefficient vectors in this basis
(plain float ndarrays); operations validate lengths at the boundary.
"""

from __future__ import annotations

import dataclasses
import io
import math
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import zeta

COSINE_BASIS = "cosine-u01"

# Points used to certify sup-norm quantities (kappa, sup |f_rho|).
CERTIFICATION_GRID_SIZE = 10_000


class Sample(NamedTuple):
    x: float
    y: float


@dataclasses.dataclass(frozen=True)
class EigenSystem:
    """Retained eigenpairs (mu_alpha, phi_alpha) of the kernel operator.

    eigenvalues must be strictly positive and nonincreasing; the family
    phi_alpha is fixed by basis_id (only the cosine basis is built in).
    """

    eigenvalues: np.ndarray
    basis_id: str = COSINE_BASIS

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d array")
        if not np.all(ev > 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be nonincreasing")
        if self.basis_id != COSINE_BASIS:
            raise ValueError(f"unknown basis_id: {self.basis_id!r}")
        ev = ev.copy()
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def modes(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def trace(self) -> float:
        """Sum of retained eigenvalues (= quadrature of K(x,x), Mercer)."""
        return float(self.eigenvalues.sum())


def basis_matrix(n_modes: int, x) -> np.ndarray:
    """Evaluate the cosine basis: returns phi_alpha(x) for alpha < n_modes.

    x may be a scalar (returns shape (n_modes,)) or a 1-d array of m
    points (returns shape (m, n_modes)).
    """
    x_arr = np.asarray(x, dtype=float)
    k = np.arange(n_modes)
    out = np.cos(np.pi * np.multiply.outer(x_arr, k))
    out *= np.where(k == 0, 1.0, math.sqrt(2.0))
    return out


@dataclasses.dataclass(frozen=True)
class SpectralModel:
    """Ground truth: eigen-system + source coefficients + bounded noise.

    f_rho = sum_alpha mu_alpha^r g_alpha phi_alpha, y = f_rho(x) + xi with
    xi uniform on [-sigma, sigma] and x uniform on [0, 1]. M_rho and kappa
    are certified bounds: |y| <= M_rho always, K(x, x) <= kappa^2 always.
    """

    eigen: EigenSystem
    regularity_r: float
    source_coeffs: np.ndarray      # g_alpha
    noise_halfwidth: float         # sigma
    M_rho: float
    kappa: float
    f_rho_coeffs: np.ndarray       # c_alpha = mu_alpha^r g_alpha
    source_norm: float             # ||L^{-r} f_rho||_rho = ||g||_2
    truncation_tail_sq: float = 0.0  # sum_{alpha >= N} c_alpha^2 (reported bias floor)

    def __post_init__(self):
        for name in ("source_coeffs", "f_rho_coeffs"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            if arr.shape != (self.eigen.modes,):
                raise ValueError(f"{name} must have one entry per eigen mode")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.regularity_r <= 0:
            raise ValueError("regularity_r must be positive")
        if self.noise_halfwidth < 0:
            raise ValueError("noise_halfwidth must be nonnegative")

    @property
    def modes(self) -> int:
        return self.eigen.modes

    @property
    def mu(self) -> np.ndarray:
        return self.eigen.eigenvalues

    def lk_power_source_norm(self, s: float) -> float:
        """||L^{-s} f_rho||_rho = (sum mu_alpha^{2(r-s)} g_alpha^2)^{1/2}."""
        w = self.mu ** (self.regularity_r - s) * self.source_coeffs
        return float(np.linalg.norm(w))

    def f_rho_norm_rho(self) -> float:
        return float(np.linalg.norm(self.f_rho_coeffs))

    def f_rho_norm_K(self) -> float:
        return norm_K(self, self.f_rho_coeffs)


def make_model(
    eigenvalues,
    source_coeffs,
    regularity_r: float = 1.0,
    noise_halfwidth: float = 0.0,
    truncation_tail_sq: float = 0.0,
) -> SpectralModel:
    """Assemble a model, certifying M_rho and kappa.

    kappa^2 is the cosine-basis series bound mu_0 + 2 sum_{k>=1} mu_k
    (attained at x = 0); sup |f_rho| is the matching coefficient bound
    |c_0| + sqrt(2) sum_{k>=1} |c_k|. Both are cross-checked against a
    dense evaluation grid and the larger value is stored.
    """
    eig = EigenSystem(np.asarray(eigenvalues, dtype=float))
    g = np.asarray(source_coeffs, dtype=float)
    if g.shape != (eig.modes,):
        raise ValueError("source_coeffs must have one entry per eigen mode")
    mu = eig.eigenvalues
    c = mu**regularity_r * g

    kappa_sq_series = float(mu[0] + 2.0 * mu[1:].sum())
    sup_series = float(abs(c[0]) + math.sqrt(2.0) * np.abs(c[1:]).sum())

    xs = np.linspace(0.0, 1.0, CERTIFICATION_GRID_SIZE)
    phi = basis_matrix(eig.modes, xs)
    kappa_sq_grid = float(np.max((phi * phi) @ mu))
    sup_grid = float(np.max(np.abs(phi @ c)))

    kappa = math.sqrt(max(kappa_sq_series, kappa_sq_grid))
    m_rho = max(sup_series, sup_grid) + noise_halfwidth

    return SpectralModel(
        eigen=eig,
        regularity_r=float(regularity_r),
        source_coeffs=g,
        noise_halfwidth=float(noise_halfwidth),
        M_rho=m_rho,
        kappa=kappa,
        f_rho_coeffs=c,
        source_norm=float(np.linalg.norm(g)),
        truncation_tail_sq=float(truncation_tail_sq),
    )


def make_power_law_model(
    modes: int = 256,
    mu_decay: float = 2.0,
    source_decay: float = 1.0,
    regularity_r: float = 1.0,
    noise_halfwidth: float = 0.5,
) -> SpectralModel:
    """Reference family: mu_k = (k+1)^{-mu_decay}, g_k = (k+1)^{-source_decay}.

    mu_decay > 1 gives a trace-class operator; source_decay > 1/2 gives a
    square-summable source. The discarded tail mass sum_{k >= modes} c_k^2
    is recorded exactly via the Hurwitz zeta function.
    """
    if modes <= 0:
        raise ValueError("modes must be positive")
    if mu_decay <= 1.0:
        raise ValueError("mu_decay must exceed 1 (trace class)")
    if source_decay <= 0.5:
        raise ValueError("source_decay must exceed 1/2 (square-summable source)")
    k1 = np.arange(1, modes + 1, dtype=float)  # k + 1
    mu = k1**-mu_decay
    g = k1**-source_decay
    # c_k = (k+1)^{-(mu_decay * r + source_decay)}; tail of sum c_k^2 from k = modes on.
    s = 2.0 * (mu_decay * regularity_r + source_decay)
    tail = float(zeta(s, modes + 1))
    return make_model(mu, g, regularity_r, noise_halfwidth, truncation_tail_sq=tail)


# ---------------------------------------------------------------------------
# Pointwise evaluation and norms


def kernel_eval(model: SpectralModel, x, x2) -> float:
    """Truncated Mercer series K(x, x') = sum mu_alpha phi_alpha(x) phi_alpha(x')."""
    phi_a = basis_matrix(model.modes, x)
    phi_b = basis_matrix(model.modes, x2)
    return float(np.dot(phi_a * model.mu, phi_b))


def eval_function(model: SpectralModel, f, x):
    """Evaluate f = sum a_alpha phi_alpha at x (scalar or array of points)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (model.modes,):
        raise ValueError(
            f"coefficient vector has {f.shape} entries, model has {model.modes} modes"
        )
    out = basis_matrix(model.modes, x) @ f
    return float(out) if out.ndim == 0 else out

def norm_rho(f) -> float:
    return float(np.linalg.norm(np.asarray(f, dtype=float)))


def norm_K(model: SpectralModel, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (model.modes,):
        raise ValueError("coefficient vector does not match model mode count")
    return float(np.sqrt(np.sum(f * f / model.mu)))


def lk_power_apply(model: SpectralModel, f, p: float) -> np.ndarray:
    """Apply L_K^p in eigen-coordinates (scale coefficient alpha by mu_alpha^p)."""
    return np.asarray(f, dtype=float) * model.mu**p


# ---------------------------------------------------------------------------
# Sampling


def draw_sample(model: SpectralModel, rng: np.random.Generator) -> Sample:
    """One draw (x, y): x uniform on [0,1], y = f_rho(x) + Uniform[-sigma, sigma].

    |y| <= M_rho holds by construction (M_rho certifies sup|f_rho| + sigma).
    """
    x = float(rng.random())
    xi = float(rng.uniform(-model.noise_halfwidth, model.noise_halfwidth))
    y = eval_function(model, model.f_rho_coeffs, x) + xi
    return Sample(x, y)


def draw_batch(model: SpectralModel, rng: np.random.Generator, size: int):
    """Vectorized draws: returns (xs, ys) arrays of the given size.

    The stream layout (all xs first, then all noise) is what the run
    kernels consume, so nodal and spectral runs with the same seed see
    identical samples.
    """
    xs = rng.random(size)
    noise = rng.uniform(-model.noise_halfwidth, model.noise_halfwidth, size)
    ys = basis_matrix(model.modes, xs) @ model.f_rho_coeffs + noise
    return xs, ys


# ---------------------------------------------------------------------------
# Quadrature diagnostics


def quadrature_rule(n_nodes: int):
    """Gauss-Legendre nodes/weights mapped from [-1, 1] to [0, 1]."""
    nodes, weights = leggauss(n_nodes)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def orthonormality_defect(eig: EigenSystem, n_nodes: int | None = None) -> float:
    """max_{j,k} |quadrature(phi_j phi_k) - delta_jk|.

    The integrand for modes (j, k) oscillates at frequency (j+k) pi, so the
    default node count scales with the retained mode count.
    """
    if n_nodes is None:
        n_nodes = max(256, 8 * eig.modes)
    xs, ws = quadrature_rule(n_nodes)
    phi = basis_matrix(eig.modes, xs)
    gram = phi.T @ (phi * ws[:, None])
    return float(np.max(np.abs(gram - np.eye(eig.modes))))


def mercer_trace_defect(model: SpectralModel, n_nodes: int | None = None) -> float:
    """|quadrature of K(x,x) - sum mu_alpha|."""
    if n_nodes is None:
        n_nodes = max(256, 8 * model.modes)
    xs, ws = quadrature_rule(n_nodes)
    phi = basis_matrix(model.modes, xs)
    diag = (phi * phi) @ model.mu
    return float(abs(np.dot(ws, diag) - model.eigen.trace))


# ---------------------------------------------------------------------------
# Config-key serialization (modes, mu_decay, source_decay, r, sigma, seed)

_MODEL_KEYS = ("modes", "mu_decay", "source_decay", "r", "sigma", "seed")


def model_to_config_text(
    modes: int,
    mu_decay: float,
    source_decay: float,
    r: float,
    sigma: float,
    seed: int,
) -> str:
    """Render a power-law model spec as a key=value block."""
    buf = io.StringIO()
    buf.write(f"modes = {modes:d}\n")
    buf.write(f"mu_decay = {mu_decay:.17g}\n")
    buf.write(f"source_decay = {source_decay:.17g}\n")
    buf.write(f"r = {r:.17g}\n")
    buf.write(f"sigma = {sigma:.17g}\n")
    buf.write(f"seed = {seed:d}\n")
    return buf.getvalue()


def model_from_config_text(text: str):
    """Parse a key=value block into (SpectralModel, seed).

    Accepts exactly the keys modes, mu_decay, source_decay, r, sigma, seed
    ('#' starts a comment); missing keys take the reference defaults.
    """
    values = {
        "modes": 256,
        "mu_decay": 2.0,
        "source_decay": 1.0,
        "r": 1.0,
        "sigma": 0.5,
        "seed": 0,
    }
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _MODEL_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = int(val) if key in ("modes", "seed") else float(val)
        except ValueError:
            raise ValueError(f"line {lineno}: bad value for {key}: {val!r}") from None
    model = make_power_law_model(
        modes=values["modes"],
        mu_decay=values["mu_decay"],
        source_decay=values["source_decay"],
        regularity_r=values["r"],
        noise_halfwidth=values["sigma"],
    )
    return model, int(values["seed"])
