"""Compatible ambient metrics, unitary frames, and affine Darboux charts.

The ambient manifold is the square symplectic torus (period 2*pi in every
coordinate) with the constant standard form omega0.  A metric G is compatible
when J := -G^{-1} Omega0 squares to -I; then (G, omega0, J) is a compatible
triple.  Two constructions are provided:

* an exponential family G(p) = expm(Y(p)) with Y(p) a trigonometric polynomial
  valued in the symmetric matrices that anticommute with Omega0.  Such G is
  compatible exactly (expm(Y/2) is symplectic and symmetric, so G = S^T S with
  S symplectic), periodic, and has closed-form derivatives to second order via
  Frechet-series recurrences.  This family is complex-analytic in the point,
  which the complex-step linearization of the volume gradient relies on.
* a pointwise polar retraction that projects an arbitrary positive metric onto
  the compatible ones (value-only; derivatives by finite differences).

Frames: a unitary frame at p is a real matrix upsilon with
upsilon^T G(p) upsilon = I and upsilon^T Omega0 upsilon = Omega0, built by
Gram-Schmidt over the complex structure J_p.  Affine charts z -> p + upsilon z
pull omega back to omega0 exactly; the scaled pullback metric
g^t(z) = upsilon^T G(p + t upsilon z) upsilon is the object all scaling
estimates and the reduction pipeline consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, RankDeficiencyError
from .geomcore import standard_symplectic_matrix

__all__ = [
    "EuclideanMetric",
    "SymplecticExpMetric",
    "CompatibilizedMetric",
    "ChartMetric",
    "UnitaryFrame",
    "compatibilize_values",
    "compatibility_defect",
    "symmetric_anticommuting_basis",
    "default_perturbed_metric",
    "unitary_frame",
    "frame_fit",
    "frame_defects",
    "unitary_embedding",
    "unitary_algebra_basis",
    "ball_samples",
    "estimate_sweep",
    "EstimateReport",
]

_SERIES_TERMS = 30


def _eye_like(shape: tuple, d: int, dtype) -> np.ndarray:
    out = np.zeros(shape + (d, d), dtype=dtype)
    out[..., range(d), range(d)] = 1.0
    return out


class EuclideanMetric:
    """The flat metric g0 = identity on R^{2n}; trivially compatible."""

    def __init__(self, n: int):
        self.n = n
        self.dim = 2 * n

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        return _eye_like(points.shape[:-1], self.dim, points.dtype)

    def derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        d = self.dim
        return np.zeros(points.shape[:-1] + (d, d, d), dtype=points.dtype)

    def second_derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        d = self.dim
        return np.zeros(points.shape[:-1] + (d, d, d, d), dtype=points.dtype)


def symmetric_anticommuting_basis(n: int) -> list[np.ndarray]:
    """Orthonormal basis of {X = X^T : X Omega0 = -Omega0 X} in R^{2n x 2n}.

    This is the tangent space (at the identity) of compatible metrics inside
    the exponential family; its dimension is n(n+1).
    """
    d = 2 * n
    om = standard_symplectic_matrix(n)
    rows = []
    # antisymmetry constraints X_ij - X_ji = 0
    for i in range(d):
        for j in range(i + 1, d):
            r = np.zeros((d, d))
            r[i, j], r[j, i] = 1.0, -1.0
            rows.append(r.reshape(-1))
    # anticommutator constraints (X Om + Om X)_ij = 0
    for i in range(d):
        for j in range(d):
            r = np.zeros((d, d))
            # d/dX_kl of (X Om + Om X)_ij = delta_ik Om_lj + Om_ik delta_jl
            for k in range(d):
                for l in range(d):
                    r[k, l] = (om[l, j] if k == i else 0.0) + (om[i, k] if l == j else 0.0)
            rows.append(r.reshape(-1))
    null = scipy.linalg.null_space(np.array(rows))
    if null.shape[1] != n * (n + 1):
        raise RankDeficiencyError(
            f"anticommuting-symmetric space has dim {null.shape[1]}, expected {n * (n + 1)}"
        )
    return [null[:, k].reshape(d, d) for k in range(null.shape[1])]


@dataclass
class SymplecticExpMetric:
    """G(p) = expm(Y(p)), Y(p) = amplitude * sum_k (A_k cos(m_k.p) + B_k sin(m_k.p)).

    A_k, B_k are symmetric and anticommute with Omega0, so G is compatible at
    every point without any retraction, and 2*pi-periodic since the wave
    vectors m_k are integers.  Derivatives are Frechet derivatives of expm,
    evaluated by the convergent series recurrences

        T_j = T_{j-1} Y / j,
        F_j(E) = (F_{j-1}(E) Y + T_{j-1} E) / j,
        S_j(E1,E2) = (S_{j-1} Y + F_{j-1}(E1) E2 + F_{j-1}(E2) E1) / j,

    summed to 30 terms (|Y| stays well under 1 in every intended use).  All
    operations are polynomial in the point, hence safe under complex-step
    differentiation.
    """

    n: int
    wave_vectors: np.ndarray  # (K, 2n) integers
    cos_coeffs: np.ndarray  # (K, 2n, 2n)
    sin_coeffs: np.ndarray  # (K, 2n, 2n)
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        self.wave_vectors = np.asarray(self.wave_vectors, dtype=float)
        self.cos_coeffs = np.asarray(self.cos_coeffs, dtype=float)
        self.sin_coeffs = np.asarray(self.sin_coeffs, dtype=float)
        d = 2 * self.n
        om = standard_symplectic_matrix(self.n)
        for name, coeffs in (("cos", self.cos_coeffs), ("sin", self.sin_coeffs)):
            for X in coeffs:
                if np.max(np.abs(X - X.T)) > 1e-12 or np.max(np.abs(X @ om + om @ X)) > 1e-12:
                    raise ConfigError(f"{name} coefficient not in the compatible tangent space")
        if self.wave_vectors.shape != (len(self.cos_coeffs), d):
            raise ConfigError("wave vector shape mismatch")
        if np.max(np.abs(self.wave_vectors - np.round(self.wave_vectors))) > 0:
            raise ConfigError("wave vectors must be integers (periodicity)")

    @property
    def dim(self) -> int:
        return 2 * self.n

    # -- generator Y and its coordinate derivatives --------------------------

    def _phase(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        arg = np.einsum("...m,km->...k", points, self.wave_vectors)
        return np.cos(arg), np.sin(arg)

    def generator(self, points: np.ndarray) -> np.ndarray:
        c, s = self._phase(points)
        return self.amplitude * (
            np.einsum("...k,kij->...ij", c, self.cos_coeffs)
            + np.einsum("...k,kij->...ij", s, self.sin_coeffs)
        )

    def _generator_d1(self, points: np.ndarray) -> np.ndarray:
        # [..., mu, i, j] = dY_ij / dp_mu
        c, s = self._phase(points)
        return self.amplitude * (
            np.einsum("...k,km,kij->...mij", -s, self.wave_vectors, self.cos_coeffs)
            + np.einsum("...k,km,kij->...mij", c, self.wave_vectors, self.sin_coeffs)
        )

    def _generator_d2(self, points: np.ndarray) -> np.ndarray:
        # [..., mu, nu, i, j]
        c, s = self._phase(points)
        mm = np.einsum("km,kn->kmn", self.wave_vectors, self.wave_vectors)
        return self.amplitude * (
            np.einsum("...k,kmn,kij->...mnij", -c, mm, self.cos_coeffs)
            + np.einsum("...k,kmn,kij->...mnij", -s, mm, self.sin_coeffs)
        )

    # -- exponential series ---------------------------------------------------

    def value(self, points: np.ndarray) -> np.ndarray:
        Y = self.generator(np.asarray(points))
        d = Y.shape[-1]
        T = _eye_like(Y.shape[:-2], d, Y.dtype)
        out = T.copy()
        for j in range(1, _SERIES_TERMS + 1):
            T = T @ Y / j
            out = out + T
        return out

    def _frechet(self, Y: np.ndarray, E: np.ndarray) -> np.ndarray:
        """Directional derivative of expm at Y along each direction in E.

        E has one extra axis of directions just before the matrix axes.
        """
        d = Y.shape[-1]
        Yb = Y[..., None, :, :]
        T = _eye_like(Y.shape[:-2] + (1,), d, np.result_type(Y, E))
        F = np.zeros_like(E, dtype=np.result_type(Y, E))
        total = np.zeros_like(F)
        for j in range(1, _SERIES_TERMS + 1):
            F = (F @ Yb + T @ E) / j
            T = T @ Yb / j
            total = total + F
        return total

    def _frechet2(self, Y: np.ndarray, E1: np.ndarray, E2: np.ndarray) -> np.ndarray:
        """Symmetric second Frechet derivative along stacked direction pairs."""
        d = Y.shape[-1]
        dt = np.result_type(Y, E1, E2)
        Yb = Y[..., None, :, :]
        T = _eye_like(Y.shape[:-2] + (1,), d, dt)
        F1 = np.zeros_like(E1, dtype=dt)
        F2 = np.zeros_like(E2, dtype=dt)
        S = np.zeros_like(E1, dtype=dt)
        total = np.zeros_like(S)
        for j in range(1, _SERIES_TERMS + 1):
            S = (S @ Yb + F1 @ E2 + F2 @ E1) / j
            F1 = (F1 @ Yb + T @ E1) / j
            F2 = (F2 @ Yb + T @ E2) / j
            T = T @ Yb / j
            total = total + S
        return total

    def derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        return self._frechet(self.generator(points), self._generator_d1(points))

    def second_derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        d = self.dim
        Y = self.generator(points)
        dY = self._generator_d1(points)
        lead = points.shape[:-1]
        E1 = np.broadcast_to(dY[..., :, None, :, :], lead + (d, d, d, d)).reshape(
            lead + (d * d, d, d)
        )
        E2 = np.broadcast_to(dY[..., None, :, :, :], lead + (d, d, d, d)).reshape(
            lead + (d * d, d, d)
        )
        S = self._frechet2(Y, E1, E2).reshape(lead + (d, d, d, d))
        d2Y = self._generator_d2(points).reshape(lead + (d * d, d, d))
        S = S + self._frechet(Y, d2Y).reshape(lead + (d, d, d, d))
        return S

    def symplectic_factor(self, points: np.ndarray) -> np.ndarray:
        """S(p) = expm(Y(p)/2): symmetric, symplectic, with S^T S = G."""
        half = SymplecticExpMetric(
            self.n, self.wave_vectors, self.cos_coeffs, self.sin_coeffs, self.amplitude / 2
        )
        return half.value(points)


def default_perturbed_metric(
    n: int = 2, amplitude: float = 0.05, seed: int = 0, num_waves: int = 3
) -> SymplecticExpMetric:
    """Seeded trigonometric compatible perturbation of the flat metric."""
    rng = np.random.default_rng(seed)
    basis = symmetric_anticommuting_basis(n)
    waves, cos_c, sin_c = [], [], []
    while len(waves) < num_waves:
        m = rng.integers(-2, 3, size=2 * n)
        if not np.any(m):
            continue
        waves.append(m)
        ca = rng.normal(size=len(basis))
        cb = rng.normal(size=len(basis))
        cos_c.append(sum(a * X for a, X in zip(ca, basis)) / np.sqrt(len(basis)))
        sin_c.append(sum(b * X for b, X in zip(cb, basis)) / np.sqrt(len(basis)))
    return SymplecticExpMetric(
        n, np.array(waves, dtype=float), np.array(cos_c), np.array(sin_c), amplitude
    )


# ---------------------------------------------------------------------------
# polar retraction onto compatible metrics


def compatibilize_values(H: np.ndarray) -> np.ndarray:
    """Pointwise polar retraction of positive metrics onto compatible ones.

    A is defined by omega0(u, v) = H(Au, v); its polar unitary factor J
    satisfies J^2 = -I, and G(u, v) := omega0(u, Jv) is the returned
    compatible metric.  Fixed points are exactly the compatible metrics.
    Conformal factors are normalized away: c*g0 maps to g0, since J only sees
    the conformal class of H against omega0.
    """
    H = np.asarray(H, dtype=float)
    d = H.shape[-1]
    om = standard_symplectic_matrix(d // 2)
    w, V = np.linalg.eigh(H)
    if np.any(w <= 0):
        raise RankDeficiencyError("metric not positive definite")
    Hs = np.einsum("...ik,...k,...jk->...ij", V, np.sqrt(w), V)
    Hsi = np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)
    At = -Hsi @ om @ Hsi  # antisymmetric
    M = -At @ At  # = At^T At, symmetric positive
    w2, V2 = np.linalg.eigh(M)
    Misqrt = np.einsum("...ik,...k,...jk->...ij", V2, 1.0 / np.sqrt(w2), V2)
    Jt = At @ Misqrt
    J = Hsi @ Jt @ Hs
    return om @ J


def compatibility_defect(values: np.ndarray) -> float:
    """max |J^2 + I| over points, J = -G^{-1} Omega0."""
    d = values.shape[-1]
    om = standard_symplectic_matrix(d // 2)
    J = -np.linalg.solve(values, np.broadcast_to(om, values.shape))
    eye = np.eye(d)
    return float(np.max(np.abs(J @ J + eye)))


class CompatibilizedMetric:
    """Compatible metric obtained by retracting an arbitrary metric evaluator.

    Derivatives come from central finite differences of the retracted values
    (step fd_step); adequate for curvature terms at qualitative accuracy, not
    for the complex-step assembly paths (those require analytic families).
    """

    def __init__(self, raw: Callable[[np.ndarray], np.ndarray], n: int, fd_step: float = 1e-5):
        self.raw = raw
        self.n = n
        self.dim = 2 * n
        self.fd_step = fd_step

    def value(self, points: np.ndarray) -> np.ndarray:
        return compatibilize_values(self.raw(np.asarray(points)))

    def derivative(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        d = self.dim
        h = self.fd_step
        cols = []
        for mu in range(d):
            e = np.zeros(d)
            e[mu] = h
            cols.append((self.value(points + e) - self.value(points - e)) / (2 * h))
        return np.stack(cols, axis=-3)


# ---------------------------------------------------------------------------
# unitary frames


@dataclass
class UnitaryFrame:
    """A point of the ambient torus plus a frame matrix unitary for (G, omega0)."""

    point: np.ndarray
    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.point = np.asarray(self.point, dtype=float)
        self.matrix = np.asarray(self.matrix, dtype=float)


def _gram_schmidt_frame(G: np.ndarray, candidates: Sequence[np.ndarray]) -> np.ndarray:
    """Complex Gram-Schmidt against J = -G^{-1} Omega0.

    Orthonormalizes w.r.t. the Hermitian form h(u, v) = G(u, v) + i omega0(u, v)
    on the complex vector space (R^{2n}, J); columns come out interleaved as
    (u_1, J u_1, ..., u_n, J u_n), which gives upsilon^T G upsilon = I and
    upsilon^T Omega0 upsilon = Omega0 in the standard conventions.
    """
    d = G.shape[0]
    n = d // 2
    om = standard_symplectic_matrix(n)
    J = -np.linalg.solve(G, om)
    built: list[np.ndarray] = []
    cand = list(candidates)
    cols = []
    for _ in range(n):
        v = None
        while cand:
            v = np.array(cand.pop(0), dtype=float)
            for u in built:
                Ju = J @ u
                v = v - (u @ G @ v) * u - (Ju @ G @ v) * Ju
            norm2 = float(v @ G @ v)
            if norm2 > 1e-16:
                v = v / np.sqrt(norm2)
                break
            v = None
        if v is None:
            raise RankDeficiencyError("frame Gram-Schmidt ran out of independent seeds")
        built.append(v)
        cols.extend([v, J @ v])
    return np.stack(cols, axis=-1)


def unitary_frame(metric, p: np.ndarray, seed: int = 0) -> UnitaryFrame:
    """A (G, omega0)-unitary frame at p from a seeded random start."""
    p = np.asarray(p, dtype=float)
    G = metric.value(p)
    rng = np.random.default_rng(seed)
    candidates = [rng.normal(size=G.shape[0]) for _ in range(4 * G.shape[0])]
    return UnitaryFrame(p, _gram_schmidt_frame(G, candidates))


def frame_fit(metric, p: np.ndarray, target: np.ndarray) -> UnitaryFrame:
    """Correct a nearly-unitary frame to an exact one at p.

    Seeds the Gram-Schmidt with the target's x_j columns, so the output is a
    smooth function of (p, target) near any valid frame and reduces to the
    identity correction when the target is already unitary.
    """
    p = np.asarray(p, dtype=float)
    G = metric.value(p)
    target = np.asarray(target, dtype=float)
    seeds = [target[:, 2 * j] for j in range(target.shape[1] // 2)]
    extra = [np.eye(target.shape[0])[:, k] for k in range(target.shape[0])]
    return UnitaryFrame(p, _gram_schmidt_frame(G, seeds + extra))


def frame_defects(metric, frame: UnitaryFrame) -> tuple[float, float]:
    G = metric.value(frame.point)
    om = standard_symplectic_matrix(G.shape[0] // 2)
    u = frame.matrix
    return (
        float(np.max(np.abs(u.T @ G @ u - np.eye(G.shape[0])))),
        float(np.max(np.abs(u.T @ om @ u - om))),
    )


def unitary_embedding(gamma: np.ndarray) -> np.ndarray:
    """Real 2n x 2n matrix of z -> gamma z in interleaved coordinates."""
    gamma = np.asarray(gamma, dtype=complex)
    n = gamma.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[0::2, 0::2] = gamma.real
    out[0::2, 1::2] = -gamma.imag
    out[1::2, 0::2] = gamma.imag
    out[1::2, 1::2] = gamma.real
    return out


def unitary_algebra_basis(n: int) -> list[np.ndarray]:
    """Basis of u(n); the first n entries are the diagonal (stabilizer) part.

    Order: i E_jj for each j, then for j < k the pair (E_jk - E_kj)/sqrt(2),
    i (E_jk + E_kj)/sqrt(2).  Downstream code relies on this ordering to
    identify the diagonal-torus directions.
    """
    out = []
    for j in range(n):
        m = np.zeros((n, n), dtype=complex)
        m[j, j] = 1j
        out.append(m)
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k], m[k, j] = 1.0, -1.0
            out.append(m / np.sqrt(2))
            m = np.zeros((n, n), dtype=complex)
            m[j, k], m[k, j] = 1j, 1j
            out.append(m / np.sqrt(2))
    return out


# ---------------------------------------------------------------------------
# affine charts and scaling estimates


class ChartMetric:
    """Scaled chart pullback g^t(z) = upsilon^T G(p + t upsilon z) upsilon.

    Implements the same evaluator interface as the ambient metrics, so the
    graph-volume machinery can run unchanged in chart coordinates.  At t = 0
    (or for the flat metric) it is identically the identity matrix.
    """

    def __init__(self, base, frame: UnitaryFrame, t: float):
        self.base = base
        self.frame = frame
        self.t = float(t)
        self.dim = base.dim

    def embed(self, z: np.ndarray) -> np.ndarray:
        """Ambient coordinates of chart points: p + t * upsilon z."""
        z = np.asarray(z)
        return self.frame.point + self.t * np.einsum("nm,...m->...n", self.frame.matrix, z)

    def value(self, z: np.ndarray) -> np.ndarray:
        G = self.base.value(self.embed(z))
        u = self.frame.matrix
        return np.einsum("ia,...ij,jb->...ab", u, G, u)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        D = self.base.derivative(self.embed(z))
        u = self.frame.matrix
        D = np.einsum("ia,...nij,jb->...nab", u, D, u)
        return self.t * np.einsum("nm,...nab->...mab", u, D)

    def second_derivative(self, z: np.ndarray) -> np.ndarray:
        S = self.base.second_derivative(self.embed(z))
        u = self.frame.matrix
        S = np.einsum("ia,...mnij,jb->...mnab", u, S, u)
        S = np.einsum("mc,...mnab->...cnab", u, S)
        S = np.einsum("nd,...cnab->...cdab", u, S)
        return self.t**2 * S


def ball_samples(dim: int, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic uniform samples of the solid ball B_radius in R^dim."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / dim)
    return r * dirs


@dataclass
class EstimateReport:
    t_values: list[float]
    constants: dict[int, list[float]]  # k -> per-t fitted constant
    ratios: dict[int, float]  # k -> max/min across t
    bounded: bool
    ratio_bound: float


def estimate_sweep(
    metric,
    frames: Sequence[UnitaryFrame],
    t_values: Sequence[float],
    k_max: int = 2,
    radius: float = 1.0,
    num_samples: int = 160,
    seed: int = 0,
    ratio_bound: float = 2.0,
) -> EstimateReport:
    """Scaling constants of the chart metrics: sup |d^k (g^t - g0)| / t^k.

    For each derivative order k the constant C_k(t) is the max over the frame
    list and over ball samples; the report records whether each C_k stays
    within ratio_bound across the t list (flat behaviour in t).
    """
    z = ball_samples(metric.dim, radius, num_samples, seed)
    eye = np.eye(metric.dim)
    constants: dict[int, list[float]] = {k: [] for k in range(k_max + 1)}
    for t in t_values:
        sup = {k: 0.0 for k in range(k_max + 1)}
        for fr in frames:
            cm = ChartMetric(metric, fr, t)
            sup[0] = max(sup[0], float(np.max(np.abs(cm.value(z) - eye))))
            if k_max >= 1:
                sup[1] = max(sup[1], float(np.max(np.abs(cm.derivative(z)))))
            if k_max >= 2:
                sup[2] = max(sup[2], float(np.max(np.abs(cm.second_derivative(z)))))
        for k in range(k_max + 1):
            constants[k].append(sup[k] / t**k if k > 0 else sup[0] / t)
    ratios = {}
    for k, vals in constants.items():
        lo, hi = min(vals), max(vals)
        ratios[k] = 1.0 if hi < 1e-15 else hi / max(lo, 1e-300)
    bounded = all(r <= ratio_bound for r in ratios.values())
    return EstimateReport(list(map(float, t_values)), constants, ratios, bounded, ratio_bound)
