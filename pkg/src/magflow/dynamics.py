"""Hamiltonian flow of the magnetic system, its rescaling and limit."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import TwistedPhaseSpace, fibre_data, hamiltonian, twisted_form_matrix
from .symplectic import standard_form, williamson


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).copy()
        p = np.asarray(self.p, dtype=float).copy()
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-d arrays of equal length")
        if not (np.isfinite(q).all() and np.isfinite(p).all()):
            raise ValueError("non-finite phase state")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def x(self):
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_x(cls, x, t=0.0):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1] // 2
        return cls(x[:d], x[d:], t)


def energy_gradient(space: TwistedPhaseSpace, q, p):
    """``(dH/dq, dH/dp)`` for ``H = p g^{-1} p / 2``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    v = (space.metric.inverse(q) @ p[..., None])[..., 0]
    if space.metric.constant:
        return np.zeros_like(v), v
    dg = space.metric.derivative(q)
    dhdq = -0.5 * np.einsum("...i,...kij,...j->...k", v, dg, v)
    return dhdq, v


def hamiltonian_field(space: TwistedPhaseSpace, q, p):
    """Solve ``Omega @ X = grad H`` with ``Omega = [[omega, -I], [I, 0]]``.

    The second block row gives ``qdot = dH/dp = g^{-1} p``; the first gives
    ``pdot = -dH/dq + omega qdot``.
    """
    q = np.asarray(q, dtype=float)
    dhdq, qdot = energy_gradient(space, q, p)
    pdot = (space.magnetic.matrix(q) @ qdot[..., None])[..., 0] - dhdq
    return qdot, pdot


def state_field(space: TwistedPhaseSpace, x):
    d = space.dim
    qdot, pdot = hamiltonian_field(space, x[..., :d], x[..., d:])
    return np.concatenate([qdot, pdot], axis=-1)


def rk4_flow(space: TwistedPhaseSpace, x0, T, nsteps: int, record: bool = False):
    """Fixed-step RK4 over ``[0, T]`` in ``nsteps`` steps.

    ``x0`` has shape ``(..., 2d)`` and ``T`` broadcasts against the batch
    shape, so every trajectory gets its own step ``T / nsteps``.  Base
    coordinates are left unwrapped.  With ``record`` the path of shape
    ``(nsteps + 1, ..., 2d)`` is returned instead of the endpoint.
    """
    x = np.array(x0, dtype=float)
    h = (np.asarray(T, dtype=float) / nsteps)[..., None]
    path = [x.copy()] if record else None
    for _ in range(nsteps):
        k1 = state_field(space, x)
        k2 = state_field(space, x + 0.5 * h * k1)
        k3 = state_field(space, x + 0.5 * h * k2)
        k4 = state_field(space, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record:
            path.append(x.copy())
    return np.stack(path) if record else x


@dataclass
class IntegratorConfig:
    method: str = "rk4"
    h: float = 1e-3
    drift_tol: float = 1e-6
    rtol: float = 1e-10
    atol: float = 1e-12
    record_every: int = 1


@dataclass
class Trajectory:
    """Time-sampled path with an energy ledger.

    ``q`` is stored wrapped into the chart; ``q_unwrapped`` keeps the
    continuous lift used for geometry.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    q_unwrapped: np.ndarray
    meta: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def drift(self) -> float:
        return float(np.abs(self.energy - self.energy[0]).max())

    @property
    def flagged(self) -> bool:
        return self.error is not None or self.drift > self.meta.get("drift_tol", np.inf)

    @property
    def states(self):
        return [PhaseState(q, p, t) for q, p, t in zip(self.q, self.p, self.t)]

    def final(self) -> PhaseState:
        return PhaseState(self.q[-1], self.p[-1], self.t[-1])


def integrate(space: TwistedPhaseSpace, state: PhaseState, T: float, config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate from ``state`` for time ``T``.

    Negative ``T`` runs backward; sample times then decrease.
    """
    cfg = config or IntegratorConfig()
    if T == 0 or cfg.h <= 0:
        raise ValueError("need nonzero T and positive step")
    d = space.dim
    x = state.x
    t0 = state.t
    start = time.perf_counter()
    error = None
    if cfg.method == "rk4":
        nsteps = max(1, int(np.ceil(abs(T) / cfg.h - 1e-9)))
        h = T / nsteps
        times = [t0]
        xs = [x.copy()]
        for i in range(nsteps):
            k1 = state_field(space, x)
            k2 = state_field(space, x + 0.5 * h * k1)
            k3 = state_field(space, x + 0.5 * h * k2)
            k4 = state_field(space, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(x).all():
                error = f"non-finite state at step {i + 1}"
                break
            if (i + 1) % cfg.record_every == 0 or i + 1 == nsteps:
                times.append(t0 + (i + 1) * h)
                xs.append(x.copy())
        xs = np.array(xs)
        times = np.array(times)
    elif cfg.method == "adaptive":
        sol = solve_ivp(
            lambda t, y: state_field(space, y),
            (t0, t0 + T),
            x,
            method="DOP853",
            rtol=cfg.rtol,
            atol=cfg.atol,
            max_step=abs(T) / 8,
        )
        xs = sol.y.T
        times = sol.t
        if not sol.success:
            error = sol.message
    else:
        raise ValueError(f"unknown integrator {cfg.method!r}")
    q_un = xs[:, :d]
    p = xs[:, d:]
    energy = hamiltonian(space, q_un, p)
    meta = {
        "method": cfg.method,
        "step": cfg.h if cfg.method == "rk4" else None,
        "drift_tol": cfg.drift_tol,
        "wall_clock": time.perf_counter() - start,
    }
    return Trajectory(times, space.base.wrap(q_un), p, energy, q_un, meta, error)


# ---------------------------------------------------------------------------
# rescaling and the limiting field


@dataclass(frozen=True)
class RescaleConfig:
    """Fibrewise dilation ``p = epsilon * y`` onto the level ``H = epsilon^2``.

    ``clock="physical"`` returns the pulled-back field with time left
    unchanged (the field that converges as ``epsilon -> 0``);
    ``clock="literal"`` multiplies it by ``epsilon**-2``.
    """

    epsilon: float
    epsilon_max: float = 0.5
    clock: str = "physical"

    def __post_init__(self):
        if not 0 < self.epsilon:
            raise ValueError("epsilon must be positive")
        if self.clock not in ("physical", "literal"):
            raise ValueError(f"unknown clock {self.clock!r}")

    @property
    def energy(self) -> float:
        return self.epsilon**2


def rescaled_field(space: TwistedPhaseSpace, cfg: RescaleConfig, q, y):
    """Push ``X_H`` through ``Phi^{-1}`` with ``Phi(q, y) = (q, epsilon y)``."""
    eps = cfg.epsilon
    y = np.asarray(y, dtype=float)
    qdot, pdot = hamiltonian_field(space, q, eps * y)
    if eps == 1.0:
        return qdot, pdot
    qdot, ydot = qdot, pdot / eps
    if cfg.clock == "literal":
        return qdot / eps**2, ydot / eps**2
    return qdot, ydot


def limiting_field(space: TwistedPhaseSpace, q, y):
    """Fibrewise linear field of the normal Hessian at ``q``.

    In Williamson coordinates ``z`` (``y = T z``) the flow is the rotation
    ``J z' = 2 diag(a, a) z``: each plane ``(z_i, z_{i+p})`` turns with
    angular speed ``2 a_i``.  Returned in the vertical frame.
    """
    pair = fibre_data(space, q)
    wres = williamson(pair.omega_f, pair.form)
    t = wres.basis
    y = np.asarray(y, dtype=float)
    z = np.linalg.solve(t, y.T).T
    a2 = 2.0 * np.concatenate([wres.eigenvalues, wres.eigenvalues])
    jinv = -standard_form(wres.p)
    zdot = (jinv @ (a2 * z).T).T
    return (t @ zdot.T).T


def limiting_period(space: TwistedPhaseSpace, q, index: int = 0) -> float:
    pair = fibre_data(space, q)
    a = williamson(pair.omega_f, pair.form).eigenvalues
    return float(np.pi / a[index])


def sample_region(space: TwistedPhaseSpace, n_samples: int, seed: int = 0):
    """Random base points with fibre vectors on the unit level of ``H``."""
    rng = np.random.default_rng(seed)
    d = space.dim
    per = np.asarray(space.base.periods or (1.0,) * d)
    q = rng.random((n_samples, d)) * per
    y = rng.normal(size=(n_samples, d))
    h = hamiltonian(space, q, y)
    return q, y / np.sqrt(h)[:, None]


def convergence_gap(space: TwistedPhaseSpace, cfg: RescaleConfig, region=None, n_samples: int = 256,
                    components: str = "full", seed: int = 0) -> float:
    """Sup-norm of ``X_1 - X_0`` over sampled ``(q, y)``.

    ``X_0`` has zero base component.  ``components="fibre"`` compares the
    fibre parts only.
    """
    if region is None:
        region = sample_region(space, n_samples, seed)
    qs, ys = region
    worst = 0.0
    for q, y in zip(qs, ys):
        qdot, ydot = rescaled_field(space, cfg, q, y)
        diff = ydot - limiting_field(space, q, y)
        if components == "full":
            diff = np.concatenate([qdot, diff])
        elif components != "fibre":
            raise ValueError(f"unknown components {components!r}")
        worst = max(worst, float(np.linalg.norm(diff)))
    return worst


def split_components(space: TwistedPhaseSpace, cfg: RescaleConfig, q, y):
    """Norms of the ``TM`` and ``(TM)^Omega`` parts of the rescaled field.

    The splitting uses the dilated form ``Phi^* Omega`` at ``(q, epsilon y)``.
    Returns ``(base_norm, fibre_norm)``.
    """
    eps = cfg.epsilon
    d = space.dim
    qdot, ydot = rescaled_field(space, RescaleConfig(eps, cfg.epsilon_max), q, y)
    w = space.magnetic.matrix(q)
    # complement of TM for [[w, -eps I], [eps I, 0]]: vectors (eps inv(w) s, s)
    u = eps * np.linalg.solve(w, ydot)
    return float(np.linalg.norm(qdot - u)), float(np.linalg.norm(np.concatenate([u, ydot])))


def flow_residual(space: TwistedPhaseSpace, q, p) -> float:
    """Relative residual of ``Omega X - grad H`` by an independent dense solve."""
    q = np.asarray(q, dtype=float)
    dhdq, dhdp = energy_gradient(space, q, p)
    grad = np.concatenate([dhdq, dhdp])
    big = twisted_form_matrix(space, q)
    x = np.concatenate(hamiltonian_field(space, q, p))
    scale = max(np.linalg.norm(grad), 1e-300)
    return float(np.linalg.norm(big @ x - grad) / scale)
