"""Base manifold charts, metric and magnetic fields, and the twisted form.

All field evaluators are vectorized: ``q`` may carry leading batch axes
``(..., d)`` and matrix results come back as ``(..., d, d)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .symplectic import (
    DegenerateFormError,
    QuadraticForm,
    SymplecticMatrix,
    classify_resonance,
    symplectic_complement,
    williamson,
)

TWO_PI = 2.0 * np.pi


class SingularMetricError(ValueError):
    """Metric is not invertible at a base point."""

    def __init__(self, message, point=None, condition=None):
        super().__init__(message)
        self.point = point
        self.condition = condition


# ---------------------------------------------------------------------------
# base manifold


@dataclass(frozen=True)
class BaseManifold:
    """A periodic box chart (flat torus) or a single unwrapped patch.

    ``periods`` of None means a patch: coordinates are not wrapped.
    ``cuplength`` and ``crit`` are topological constants supplied by the
    fixture, not computed.
    """

    dim: int
    periods: tuple | None = None
    cuplength: int = 0
    crit: int = 1
    name: str = ""

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dimension must be positive")
        if self.periods is not None:
            per = tuple(float(x) for x in self.periods)
            if len(per) != self.dim or min(per) <= 0:
                raise ValueError(f"need {self.dim} positive periods, got {self.periods}")
            object.__setattr__(self, "periods", per)
        if self.cuplength < 0 or self.crit < 0:
            raise ValueError("topology constants must be nonnegative")

    @classmethod
    def torus(cls, dim, period=TWO_PI, cuplength=None, crit=None, name=""):
        """Flat torus ``T^dim``; CL(T^d) = d and Crit(T^d) = d + 1."""
        return cls(
            dim,
            (period,) * dim,
            dim if cuplength is None else cuplength,
            dim + 1 if crit is None else crit,
            name or f"T{dim}",
        )

    @property
    def is_periodic(self) -> bool:
        return self.periods is not None

    def wrap(self, q):
        q = np.asarray(q, dtype=float)
        if self.periods is None:
            return q
        return np.mod(q, np.asarray(self.periods))

    def delta(self, q1, q0):
        """Shortest coordinate displacement ``q1 - q0`` in the chart."""
        d = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
        if self.periods is None:
            return d
        per = np.asarray(self.periods)
        return d - per * np.round(d / per)

    def grid(self, resolution, axes=None, fixed=None):
        """Regular grid; axes outside ``axes`` are held at ``fixed``."""
        axes = range(self.dim) if axes is None else list(axes)
        fixed = np.zeros(self.dim) if fixed is None else np.asarray(fixed, dtype=float)
        per = self.periods or (1.0,) * self.dim
        lines = [np.arange(resolution) * per[a] / resolution for a in axes]
        pts = []
        for combo in itertools.product(*lines):
            q = fixed.copy()
            q[list(axes)] = combo
            pts.append(q)
        return np.array(pts)


# ---------------------------------------------------------------------------
# metrics


class MetricField:
    """Riemannian metric ``g(q)``; subclasses provide ``matrix``.

    ``derivative`` defaults to central differences with step ``h_fd`` and
    returns ``dg[..., k, i, j] = d g_ij / d q_k``.
    """

    h_fd = 1e-6
    constant = False

    def matrix(self, q):
        raise NotImplementedError

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        d = q.shape[-1]
        out = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = self.h_fd
            out.append((self.matrix(q + e) - self.matrix(q - e)) / (2 * self.h_fd))
        return np.stack(out, axis=-3)

    def inverse(self, q, max_cond: float = 1e12):
        g = self.matrix(q)
        try:
            gi = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            gi = None
        if gi is None or not np.isfinite(gi).all():
            cond = np.linalg.cond(g)
            raise SingularMetricError(f"singular metric (cond = {np.max(cond):.3e})", q, cond)
        return gi


@dataclass(frozen=True)
class ConstantMetric(MetricField):
    """``g(q) = G`` everywhere."""

    G: np.ndarray

    def __post_init__(self):
        g = np.array(self.G, dtype=float)
        if not np.array_equal(g, g.T):
            raise ValueError("metric matrix not symmetric")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("metric matrix not positive definite")
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "_Ginv", np.linalg.inv(g))

    constant = True

    def matrix(self, q):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(self.G, q.shape[:-1] + self.G.shape).copy()

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        d = self.G.shape[0]
        return np.zeros(q.shape[:-1] + (d, d, d))

    def inverse(self, q):
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            return self._Ginv
        return np.broadcast_to(self._Ginv, q.shape[:-1] + self._Ginv.shape)


@dataclass(frozen=True)
class ConformalMetric(MetricField):
    """``g(q) = (scale + amplitude * sin(q[axis])) * I``."""

    dim: int
    scale: float = 1.0
    amplitude: float = 0.0
    axis: int = 0

    def __post_init__(self):
        if self.scale - abs(self.amplitude) <= 0:
            raise ValueError("conformal factor must stay positive")

    def _factor(self, q):
        return self.scale + self.amplitude * np.sin(q[..., self.axis])

    def matrix(self, q):
        q = np.asarray(q, dtype=float)
        return self._factor(q)[..., None, None] * np.eye(self.dim)

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1] + (self.dim, self.dim, self.dim))
        out[..., self.axis, :, :] = (self.amplitude * np.cos(q[..., self.axis]))[..., None, None] * np.eye(self.dim)
        return out


def canonical_form(dim):
    """Block form ``dq1^dq2 + dq3^dq4 + ...`` as a matrix."""
    w = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        w[k, k + 1] = 1.0
        w[k + 1, k] = -1.0
    return w


@dataclass(frozen=True)
class CompatibleMetric(MetricField):
    """Metric induced by an almost-complex structure compatible with the
    canonical form ``w0``: ``g = S(q).T S(q)`` with ``S`` symplectic.

    ``S(q) = expm(inv(w0) K(q))`` where
    ``K(q) = sum_k modes[k] * sin(q[axes[k]])`` and each mode is symmetric,
    so ``S.T w0 S = w0`` and ``J = inv(w0) g`` squares to ``-I``.
    """

    dim: int
    modes: tuple = ()
    axes: tuple = ()
    h_fd: float = 1e-6

    def __post_init__(self):
        modes = tuple(np.array(m, dtype=float) for m in self.modes)
        for m in modes:
            if m.shape != (self.dim, self.dim) or not np.allclose(m, m.T):
                raise ValueError("compatible-metric modes must be symmetric dim x dim")
        if len(modes) != len(self.axes):
            raise ValueError("need one axis per mode")
        object.__setattr__(self, "modes", modes)
        w0inv = np.linalg.inv(canonical_form(self.dim))
        gens = [w0inv @ m for m in modes]
        commuting = all(np.allclose(a @ b, b @ a, atol=1e-13) for a in gens for b in gens)
        eig = []
        for n in gens:
            lam, v = np.linalg.eig(n)
            if np.linalg.cond(v) > 1e8:
                eig = None
                break
            eig.append((lam, v, np.linalg.inv(v)))
        object.__setattr__(self, "_generators", gens)
        # commuting diagonalizable generators: closed-form exponential and
        # exact derivative dS/dq_j = sum cos(q_j) N_k S over modes on axis j
        object.__setattr__(self, "_fast", eig if commuting else None)

    def symplectic_factor(self, q):
        q = np.asarray(q, dtype=float)
        if self._fast is not None:
            s = np.broadcast_to(np.eye(self.dim), q.shape[:-1] + (self.dim, self.dim))
            for (lam, v, vinv), ax in zip(self._fast, self.axes):
                e = np.exp(np.sin(q[..., ax])[..., None] * lam)
                s = s @ ((v * e[..., None, :]) @ vinv).real
            return s
        k = np.zeros(q.shape[:-1] + (self.dim, self.dim))
        for n, ax in zip(self._generators, self.axes):
            k = k + np.sin(q[..., ax])[..., None, None] * n
        return expm(k)

    def matrix(self, q):
        s = self.symplectic_factor(q)
        g = np.swapaxes(s, -1, -2) @ s
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def derivative(self, q):
        if self._fast is None:
            return super().derivative(q)
        q = np.asarray(q, dtype=float)
        s = self.symplectic_factor(q)
        out = np.zeros(q.shape[:-1] + (self.dim, self.dim, self.dim))
        for n, ax in zip(self._generators, self.axes):
            ds = np.cos(q[..., ax])[..., None, None] * (n @ s)
            dg = np.swapaxes(ds, -1, -2) @ s
            out[..., ax, :, :] += dg + np.swapaxes(dg, -1, -2)
        return out

    def complex_structure(self, q):
        return np.linalg.inv(canonical_form(self.dim)) @ self.matrix(q)


# ---------------------------------------------------------------------------
# magnetic forms


class MagneticForm:
    """Closed 2-form ``omega(q)`` on the base, as antisymmetric matrices."""

    closed_tol = 1e-6

    def matrix(self, q):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantMagnetic(MagneticForm):
    W: np.ndarray

    def __post_init__(self):
        w = np.array(self.W, dtype=float)
        if not np.array_equal(w, -w.T):
            raise ValueError("magnetic matrix not antisymmetric")
        object.__setattr__(self, "W", w)

    def matrix(self, q):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(self.W, q.shape[:-1] + self.W.shape).copy()


@dataclass(frozen=True)
class BlockMagnetic(MagneticForm):
    """``omega = sum_k c_k(q) dq_{2k} ^ dq_{2k+1}`` (0-based axes).

    Each block coefficient is ``base + amplitude * sin(q[axis])``; an axis
    of None keeps the block constant.  Blocks modulated by an axis outside
    the block are not closed (used as a negative control).
    """

    bases: tuple
    amplitudes: tuple = ()
    axes: tuple = ()

    def __post_init__(self):
        n = len(self.bases)
        amps = tuple(self.amplitudes) or (0.0,) * n
        axes = tuple(self.axes) or (None,) * n
        if len(amps) != n or len(axes) != n:
            raise ValueError("bases, amplitudes and axes must have equal length")
        object.__setattr__(self, "bases", tuple(float(b) for b in self.bases))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in amps))
        object.__setattr__(self, "axes", axes)
        fixed = None
        if all(ax is None or not a for a, ax in zip(amps, axes)):
            fixed = self._assemble(np.zeros(self.dim), [np.float64(b) for b in self.bases])
            fixed.flags.writeable = False
        object.__setattr__(self, "_fixed", fixed)

    @property
    def dim(self):
        return 2 * len(self.bases)

    def coefficients(self, q):
        q = np.asarray(q, dtype=float)
        out = []
        for b, a, ax in zip(self.bases, self.amplitudes, self.axes):
            c = np.full(q.shape[:-1], b)
            if ax is not None and a:
                c = c + a * np.sin(q[..., ax])
            out.append(c)
        return out

    def _assemble(self, q, coefficients):
        w = np.zeros(q.shape[:-1] + (self.dim, self.dim))
        for k, c in enumerate(coefficients):
            w[..., 2 * k, 2 * k + 1] = c
            w[..., 2 * k + 1, 2 * k] = -c
        return w

    def matrix(self, q):
        q = np.asarray(q, dtype=float)
        if self._fixed is not None and q.ndim == 1:
            return self._fixed  # read-only; single-point integration hot path
        return self._assemble(q, self.coefficients(q))


def check_closed(magnetic: MagneticForm, grid, h_fd: float = 1e-3) -> float:
    """Max over ``grid`` of the cyclic sum ``d_i w_jk + d_j w_ki + d_k w_ij``.

    Central differences with step ``h_fd``.  On a 2-manifold there are no
    index triples and the residual is identically zero.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    d = grid.shape[-1]
    partial = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h_fd
        partial.append((magnetic.matrix(grid + e) - magnetic.matrix(grid - e)) / (2 * h_fd))
    worst = 0.0
    for i, j, k in itertools.combinations(range(d), 3):
        s = partial[i][..., j, k] + partial[j][..., k, i] + partial[k][..., i, j]
        worst = max(worst, float(np.abs(s).max()))
    return worst


# ---------------------------------------------------------------------------
# phase space


@dataclass(frozen=True)
class TwistedPhaseSpace:
    """``T*M`` with ``H = p g^{-1} p / 2`` and ``Omega = d(p dq) + pi^* omega``.

    In ``(q, p)`` block coordinates ``Omega = [[omega, -I], [I, 0]]``, and the
    Hamiltonian vector field ``X`` solves ``Omega @ X = grad H``.
    """

    base: BaseManifold
    metric: MetricField
    magnetic: MagneticForm
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.base.dim


def hamiltonian(space: TwistedPhaseSpace, q, p):
    """Kinetic energy ``p g(q)^{-1} p / 2``."""
    p = np.asarray(p, dtype=float)
    ginv = space.metric.inverse(q)
    return 0.5 * np.einsum("...i,...ij,...j->...", p, ginv, p)


def twisted_form_matrix(space: TwistedPhaseSpace, q) -> np.ndarray:
    """``[[omega(q), -I], [I, 0]]``."""
    w = space.magnetic.matrix(q)
    d = w.shape[-1]
    eye = np.broadcast_to(np.eye(d), w.shape)
    zero = np.zeros_like(w)
    top = np.concatenate([w, -eye], axis=-1)
    bottom = np.concatenate([eye, zero], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


@dataclass(frozen=True)
class SymplecticPair:
    """Fibre data at one base point.

    ``basis`` holds the complement vectors as columns in ``(q, p)``
    coordinates; ``omega_f`` and ``form`` are written in that frame.
    """

    omega_f: SymplecticMatrix
    form: QuadraticForm
    basis: np.ndarray
    point: np.ndarray
    frame: str = "vertical"


def fibre_data(space: TwistedPhaseSpace, q, frame: str = "vertical") -> SymplecticPair:
    """Restrict ``Omega`` and the normal Hessian of ``H`` to ``(TM)^Omega``.

    The complement of the zero-section tangent space at ``(q, 0)`` is
    computed numerically and then re-based:

    ``frame="vertical"``
        complement vectors are labelled by their momentum part, so
        ``omega_f = inv(omega)`` and ``form = g^{-1}/2``;
    ``frame="base"``
        labelled by their base part, so ``omega_f = -omega``.

    ``form`` is the quadratic part ``d2H(v)/2`` of the Taylor expansion, so
    ``form(y) == H(q, y)`` in the vertical frame.  Symplectic eigenvalues do
    not depend on the frame.
    """
    q = np.asarray(q, dtype=float)
    d = space.dim
    big = twisted_form_matrix(space, q)
    tangent = np.vstack([np.eye(d), np.zeros((d, d))])
    try:
        comp = symplectic_complement(big, tangent)
    except DegenerateFormError as exc:
        raise DegenerateFormError(f"twisted form degenerate at q = {q.tolist()}", exc.gram) from None
    if frame == "vertical":
        block = comp[d:]
    elif frame == "base":
        block = comp[:d]
    else:
        raise ValueError(f"unknown frame {frame!r}")
    if abs(np.linalg.det(block)) < 1e-12:
        raise DegenerateFormError(f"magnetic form degenerate at q = {q.tolist()}", space.magnetic.matrix(q))
    c = comp @ np.linalg.inv(block)
    hess = np.zeros((2 * d, 2 * d))
    hess[d:, d:] = space.metric.inverse(q)
    return SymplecticPair(
        SymplecticMatrix.from_matrix(c.T @ big @ c),
        QuadraticForm.from_matrix(0.5 * c.T @ hess @ c),
        c,
        q,
        frame,
    )


@dataclass
class SpectrumField:
    """Symplectic eigenvalues sampled over a base grid."""

    points: np.ndarray
    eigenvalues: np.ndarray
    partition: object

    def relative_spread(self) -> float:
        """Max over points of ``(max a - min a) / mean a``."""
        a = self.eigenvalues
        return float(((a.max(axis=1) - a.min(axis=1)) / a.mean(axis=1)).max())

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "partition": self.partition.to_dict(),
            "min": self.eigenvalues.min(axis=0).tolist(),
            "max": self.eigenvalues.max(axis=0).tolist(),
        }


def eigenvalue_field(space: TwistedPhaseSpace, grid, max_multiple: int = 16, rel_tol: float = 1e-8) -> SpectrumField:
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    eigs = []
    for q in grid:
        pair = fibre_data(space, q)
        eigs.append(williamson(pair.omega_f, pair.form).eigenvalues)
    eigs = np.array(eigs)
    part = classify_resonance(zip(grid, eigs), max_multiple=max_multiple, rel_tol=rel_tol)
    return SpectrumField(grid, eigs, part)
