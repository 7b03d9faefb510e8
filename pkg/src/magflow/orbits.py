"""Periodic orbits on low energy levels: seeding, shooting, deduplication."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PhaseState, energy_gradient, rk4_flow, state_field
from .geometry import TwistedPhaseSpace, eigenvalue_field, fibre_data, hamiltonian, twisted_form_matrix
from .predictions import bound_report, census_bound
from .symplectic import class_period, stable_eigenvalue_sets, williamson

log = logging.getLogger(__name__)


@dataclass
class SeedSet:
    """Seeds on ``{H = epsilon^2}`` along one class's limiting sphere bundle."""

    class_index: int
    epsilon: float
    seeds: list
    periods: np.ndarray
    eigenspaces: list
    members: tuple = ()

    @property
    def energy(self) -> float:
        return self.epsilon**2

    def __len__(self):
        return len(self.seeds)


@dataclass
class SearchConfig:
    n_base: int = 8
    n_fibre: int = 8
    steps_per_period: int = 256
    tol: float = 1e-9
    max_iter: int = 40
    fd_step: float = 1e-6
    max_dq: float = 0.5
    rcond: float = 1e-6
    window: float = 0.5
    phase_anchor: str = "iterate"
    tol_geom_factor: float = 0.1
    curve_samples: int = 256
    ds_nodes: int = 256
    ds_variations: int = 8
    ds_threshold: float = 1e-6
    floquet_tol: float = 1e-4
    jobs: int = 1
    seed: int = 0
    class_index: int | None = None
    max_multiple: int = 16
    rel_tol: float = 1e-8

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class OrbitRecord:
    state: PhaseState
    period: float
    energy: float
    newton_residual: float
    iterations: int
    floquet: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ds_residual: float = np.nan
    seed_index: int = -1
    path: np.ndarray | None = field(default=None, repr=False)
    checks: dict = field(default_factory=dict, repr=False)

    @property
    def floquet_distance_to_one(self) -> float:
        if len(self.floquet) == 0:
            return np.inf
        return float(np.abs(self.floquet - 1.0).min())

    def to_dict(self) -> dict:
        return {
            "q": self.state.q.tolist(),
            "p": self.state.p.tolist(),
            "period": self.period,
            "energy": self.energy,
            "newton_residual": self.newton_residual,
            "iterations": self.iterations,
            "floquet_abs": np.abs(self.floquet).tolist(),
            "floquet_dist_to_one": self.floquet_distance_to_one,
            "ds_residual": self.ds_residual,
            "seed_index": self.seed_index,
        }


@dataclass
class Rejection:
    reason: str
    residual: float = np.inf
    iterations: int = 0
    seed_index: int = -1


# ---------------------------------------------------------------------------
# seeding


def _sphere_directions(dim, count, rng):
    if dim == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def seed_from_limit(space: TwistedPhaseSpace, class_index: int, epsilon: float, n_base: int = 8,
                    n_fibre: int = 8, partition=None, seed: int = 0) -> SeedSet:
    """Seeds on the class sphere bundle, dilated onto ``{H = epsilon^2}``.

    Base points form a grid offset by half a cell.  At each, fibre vectors
    are spread over the unit sphere of the normal form inside the class
    eigenspace (in Williamson coordinates, then mapped to momenta by the
    normalizing basis).  The predicted period is the class period of the
    limiting flow at that base point.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = space.dim
    per = np.asarray(space.base.periods or (1.0,) * d)
    grid = space.base.grid(n_base) + 0.5 * per / n_base
    if partition is None:
        partition = eigenvalue_field(space, grid).partition
    if not 0 <= class_index < partition.q:
        raise IndexError(f"class index {class_index} out of range (q = {partition.q})")
    members = partition.classes[class_index]
    p = partition.p
    rng = np.random.default_rng(seed)
    dirs = _sphere_directions(2 * len(members), n_fibre, rng)
    cols = list(members) + [k + p for k in members]
    seeds, periods, spaces = [], [], []
    for q in grid:
        pair = fibre_data(space, q)
        wres = williamson(pair.omega_f, pair.form)
        a = np.concatenate([wres.eigenvalues, wres.eigenvalues])
        sub = wres.basis[:, cols]
        for u in dirs:
            z = u / np.sqrt(a[cols])
            y = sub @ z
            # the vertical frame identifies fibre vectors with momenta
            seeds.append(PhaseState(q, epsilon * y))
            periods.append(class_period(wres.eigenvalues, members))
            spaces.append(sub)
    return SeedSet(class_index, epsilon, seeds, np.array(periods), spaces, tuple(members))


def period_window(space: TwistedPhaseSpace, partition, class_index: int, window: float = 0.5, grid=None):
    """``[(1 - window) min T, (1 + window) max T]`` over limiting class periods."""
    if grid is None:
        grid = space.base.grid(8)
    members = partition.classes[class_index]
    ts = []
    for q in grid:
        pair = fibre_data(space, q)
        ts.append(class_period(williamson(pair.omega_f, pair.form).eigenvalues, members))
    return (1 - window) * min(ts), (1 + window) * max(ts)


# ---------------------------------------------------------------------------
# shooting


def _closure(space, x0, x1):
    d = space.dim
    return np.concatenate([space.base.delta(x1[..., :d], x0[..., :d]), x1[..., d:] - x0[..., d:]], axis=-1)


def _jacobian_batch(space, x, T, nsteps, fd_step, central=False):
    """Flow endpoints and finite-difference Jacobians ``d phi_T / dx``.

    Returns ``(end, M)`` with ``M`` of shape ``(B, 2d, 2d)``.
    """
    B, n = x.shape
    steps = fd_step * np.maximum(np.abs(x), 1.0)
    d = n // 2
    pscale = np.maximum(np.abs(x[:, d:]).max(axis=1), 1e-3)
    steps[:, d:] = fd_step * pscale[:, None]
    eye = np.eye(n)
    pert = [x]
    pert += [x + steps[:, j:j + 1] * eye[j] for j in range(n)]
    if central:
        pert += [x - steps[:, j:j + 1] * eye[j] for j in range(n)]
    stack = np.stack(pert, axis=1)
    ends = rk4_flow(space, stack, np.repeat(T[:, None], stack.shape[1], axis=1), nsteps)
    end = ends[:, 0]
    if central:
        M = (ends[:, 1:n + 1] - ends[:, n + 1:]) / (2 * steps[:, :, None])
    else:
        M = (ends[:, 1:n + 1] - end[:, None, :]) / steps[:, :, None]
    return end, np.swapaxes(M, 1, 2)


def shoot(space: TwistedPhaseSpace, seeds, T_guess, energy, config: SearchConfig | None = None, T_window=None,
          history: list | None = None):
    """Newton on ``phi_T(x) - x = 0`` for a batch of seeds at once.

    Unknowns are ``(x, T)``.  Two extra rows pin the energy ``H(x) = E`` and
    the phase: the correction is orthogonal to ``X_H`` at the anchor, which
    is the current iterate (``phase_anchor="iterate"``) or the seed.  Steps
    are solved in least squares (singular values below ``rcond`` relative
    are dropped, which removes symmetry directions) and capped at
    ``max_dq`` in the base.
    Returns a list of :class:`OrbitRecord` or :class:`Rejection`.  If
    ``history`` is a list, the residual vector of every iteration is
    appended to it.
    """
    cfg = config or SearchConfig()
    d = space.dim
    n = 2 * d
    x = np.array([s.x if isinstance(s, PhaseState) else s for s in seeds], dtype=float)
    B = len(x)
    T = np.broadcast_to(np.asarray(T_guess, dtype=float), (B,)).copy()
    seed_x = x.copy()
    results = [None] * B
    tmin, tmax = T_window if T_window is not None else (0.0, np.inf)

    h0 = hamiltonian(space, x[:, :d], x[:, d:])
    for b in np.nonzero(np.abs(h0 - energy) > 1e-6 * energy)[0]:
        results[b] = Rejection(f"seed off the energy level (H = {h0[b]:.6g}, target {energy:.6g})", seed_index=int(b))

    active = np.array([r is None for r in results])
    resid = np.full(B, np.inf)
    escale = np.sqrt(energy)
    for it in range(cfg.max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa, Ta = x[idx], T[idx]
        end, M = _jacobian_batch(space, xa, Ta, cfg.steps_per_period, cfg.fd_step)
        F = _closure(space, xa, end)
        herr = hamiltonian(space, xa[:, :d], xa[:, d:]) - energy
        resid[idx] = np.linalg.norm(F, axis=1)
        if history is not None:
            history.append(resid.copy())
        done = (resid[idx] <= cfg.tol) & (np.abs(herr) <= 1e-12 + 1e-9 * energy)
        for k in np.nonzero(done)[0]:
            b = idx[k]
            results[b] = ("ok", it)
            active[b] = False
        for k in np.nonzero(~done)[0]:
            if it == cfg.max_iter:
                results[idx[k]] = Rejection("no convergence", float(resid[idx[k]]), it, int(idx[k]))
        keep = ~done
        if it == cfg.max_iter or not keep.any():
            active[idx] = False
            break
        idx, xa, Ta, end, M, F, herr = idx[keep], xa[keep], Ta[keep], end[keep], M[keep], F[keep], herr[keep]

        vend = state_field(space, end)
        anchor = xa if cfg.phase_anchor == "iterate" else seed_x[idx]
        vanc = state_field(space, anchor)
        dhdq, dhdp = energy_gradient(space, xa[:, :d], xa[:, d:])
        grad = np.concatenate([dhdq, dhdp], axis=1)
        nb = len(idx)
        jac = np.zeros((nb, n + 2, n + 1))
        jac[:, :n, :n] = M - np.eye(n)
        jac[:, :n, n] = vend
        jac[:, n, :n] = grad / escale
        vn = np.linalg.norm(vanc, axis=1, keepdims=True)
        jac[:, n + 1, :n] = vanc / np.maximum(vn, 1e-300)
        rhs = np.zeros((nb, n + 2))
        rhs[:, :n] = -F
        rhs[:, n] = -herr / escale
        if cfg.phase_anchor == "seed":
            rhs[:, n + 1] = -np.einsum("bi,bi->b", _closure(space, anchor, xa), jac[:, n + 1, :n])
        step = np.einsum("bij,bj->bi", np.linalg.pinv(jac, rcond=cfg.rcond), rhs)
        dq = np.abs(step[:, :d]).max(axis=1)
        shrink = np.minimum(1.0, cfg.max_dq / np.maximum(dq, 1e-300))
        shrink = np.minimum(shrink, 0.25 * Ta / np.maximum(np.abs(step[:, n]), 1e-300))
        step *= shrink[:, None]
        x[idx] = xa + step[:, :n]
        T[idx] = Ta + step[:, n]
        bad = ~np.isfinite(x[idx]).all(axis=1) | (T[idx] <= 0)
        for k in np.nonzero(bad)[0]:
            b = idx[k]
            results[b] = Rejection("diverged", float(resid[b]), it + 1, int(b))
            active[b] = False

    out = []
    ok_idx = [b for b, r in enumerate(results) if isinstance(r, tuple)]
    if ok_idx:
        xs = x[ok_idx]
        Ts = T[ok_idx]
        _, mono = _jacobian_batch(space, xs, Ts, cfg.steps_per_period, cfg.fd_step, central=True)
        paths = rk4_flow(space, xs, Ts, cfg.steps_per_period, record=True)
    for b, r in enumerate(results):
        if isinstance(r, tuple):
            k = ok_idx.index(b)
            if Ts[k] < tmin:
                out.append(Rejection(f"period collapse (T = {Ts[k]:.6g} < {tmin:.6g})", float(resid[b]), r[1], b))
                continue
            if Ts[k] > tmax:
                out.append(Rejection(f"period above window (T = {Ts[k]:.6g} > {tmax:.6g})", float(resid[b]), r[1], b))
                continue
            xq = xs[k].copy()
            xq[:d] = space.base.wrap(xq[:d])
            rec = OrbitRecord(
                state=PhaseState.from_x(xq),
                period=float(Ts[k]),
                energy=float(hamiltonian(space, xs[k, :d], xs[k, d:])),
                newton_residual=float(resid[b]),
                iterations=r[1],
                floquet=np.linalg.eigvals(mono[k]),
                seed_index=b,
                path=paths[:, k],
            )
            out.append(rec)
        else:
            out.append(r)
    return out


def find_orbit(space: TwistedPhaseSpace, seed: PhaseState, T_guess: float, tol: float = 1e-9, max_iter: int = 40,
               energy: float | None = None, config: SearchConfig | None = None, T_window=None):
    """Single-seed wrapper around :func:`shoot`."""
    cfg = config or SearchConfig()
    cfg = SearchConfig(**{**cfg.__dict__, "tol": tol, "max_iter": max_iter})
    if energy is None:
        energy = float(hamiltonian(space, seed.q, seed.p))
    res = shoot(space, [seed], [T_guess], energy, cfg, T_window)[0]
    if isinstance(res, OrbitRecord):
        res.ds_residual = ds_residual(space, res, cfg.ds_variations, cfg.ds_nodes, seed=cfg.seed)
    return res


# ---------------------------------------------------------------------------
# validation and deduplication


def orbit_path(space: TwistedPhaseSpace, orbit: OrbitRecord, nodes: int):
    """``nodes`` equally spaced samples of one period and the loop's winding.

    The base part is unwrapped; ``winding`` is the lattice vector separating
    the end of the period from its start (zero for contractible loops).
    """
    full = rk4_flow(space, orbit.state.x, orbit.period, nodes, record=True)
    return full[:-1], _winding(space, full[-1] - full[0])


def _winding(space, delta):
    d = space.dim
    wind = np.zeros_like(delta)
    if space.base.periods is not None:
        per = np.asarray(space.base.periods)
        wind[:d] = per * np.round(delta[:d] / per)
    return wind


def spectral_derivative(path, period, winding=None):
    """Time derivative of a closed loop sampled at ``len(path)`` equal steps.

    ``winding`` is the total displacement over one period of a loop that
    wraps around the torus; it is removed before the FFT and restored.
    """
    nodes = len(path)
    wind = np.zeros(path.shape[1]) if winding is None else np.asarray(winding, dtype=float)
    t = np.arange(nodes) / nodes
    periodic = path - np.outer(t, wind)
    freq = np.fft.fftfreq(nodes, d=1.0 / nodes)
    if nodes % 2 == 0:
        freq[nodes // 2] = 0.0
    spec = np.fft.fft(periodic, axis=0)
    deriv = np.fft.ifft(2j * np.pi * freq[:, None] * spec, axis=0).real
    return (deriv + wind) / period


def ds_residual(space: TwistedPhaseSpace, orbit: OrbitRecord, n_variations: int = 8, nodes: int = 256,
                seed: int = 0, path=None, winding=None) -> float:
    """Max over random level-tangent variations of ``|loop integral Omega(gamma', xi) dt|``.

    ``gamma'`` is taken from the sampled loop itself (spectral derivative),
    not from the vector field, so a loop that is not an orbit shows up.
    Each variation is a smooth random periodic field with unit RMS,
    projected onto the tangent space of the level of ``H``.
    """
    d = space.dim
    if path is None:
        if orbit.path is not None and len(orbit.path) - 1 == nodes:
            path, winding = orbit.path[:-1], _winding(space, orbit.path[-1] - orbit.path[0])
        else:
            path, winding = orbit_path(space, orbit, nodes)
    path = np.asarray(path, dtype=float)
    nodes = len(path)
    vel = spectral_derivative(path, orbit.period, winding)
    q, p = path[:, :d], path[:, d:]
    big = twisted_form_matrix(space, q)
    dhdq, dhdp = energy_gradient(space, q, p)
    grad = np.concatenate([dhdq, dhdp], axis=1)
    gn = np.einsum("ti,ti->t", grad, grad)
    rng = np.random.default_rng(seed)
    t = 2 * np.pi * np.arange(nodes) / nodes
    worst = 0.0
    for _ in range(n_variations):
        xi = np.zeros((nodes, 2 * d))
        for k in range(4):
            c, s = rng.normal(size=(2, 2 * d))
            xi += np.outer(np.cos(k * t), c) + np.outer(np.sin(k * t), s)
        xi /= np.sqrt((xi**2).sum(axis=1).mean())
        xi -= (np.einsum("ti,ti->t", xi, grad) / np.maximum(gn, 1e-300))[:, None] * grad
        pairing = np.einsum("ti,tij,tj->t", vel, big, xi)
        worst = max(worst, abs(pairing.sum() * orbit.period / nodes))
    return float(worst)


def reintegration_error(space: TwistedPhaseSpace, orbits, steps_per_period: int = 256):
    """Closure error of one fresh period from each representative.

    Accepts one record or a list (integrated as a batch).
    """
    single = isinstance(orbits, OrbitRecord)
    orbits = [orbits] if single else list(orbits)
    if not orbits:
        return []
    xs = np.array([o.state.x for o in orbits])
    ends = rk4_flow(space, xs, np.array([o.period for o in orbits]), steps_per_period)
    err = np.linalg.norm(_closure(space, xs, ends), axis=1)
    return float(err[0]) if single else err.tolist()


def _curve(space, orbit, samples):
    if orbit.path is not None and len(orbit.path) - 1 == samples:
        return orbit.path[:-1]
    return orbit_path(space, orbit, samples)[0]


def _dist_to_curve(space, x, curve):
    """Distance from each point in ``x`` (shape ``(k, 2d)``) to ``curve``."""
    d = space.dim
    x = np.atleast_2d(x)
    dq = space.base.delta(curve[None, :, :d], x[:, None, :d])
    dp = curve[None, :, d:] - x[:, None, d:]
    return np.sqrt((dq**2).sum(axis=2) + (dp**2).sum(axis=2)).min(axis=1)


def _diameter(curve):
    c = curve - curve.mean(axis=0)
    return float(2 * np.sqrt((c**2).sum(axis=1)).max())


def _commensurate(t1, t2, rel=1e-3):
    big, small = max(t1, t2), min(t1, t2)
    r = big / small
    return abs(r - round(r)) <= rel * r


def deduplicate(orbits, space: TwistedPhaseSpace, tol_geom: float | None = None, samples: int = 256,
                tol_factor: float = 0.1):
    """Merge records that trace the same closed orbit.

    Two records merge when one's representative lies within ``tol_geom`` of
    the other's sampled curve and their periods are commensurate (so double
    covers merge).  ``tol_geom`` defaults to ``tol_factor`` times the curve
    diameter.  Merging is transitive, which makes the result independent of
    input order; each group keeps its smallest-residual member.
    """
    orbits = list(orbits)
    nrec = len(orbits)
    if nrec == 0:
        return []
    curves = [_curve(space, o, samples) for o in orbits]
    tols = [tol_geom if tol_geom is not None else tol_factor * _diameter(c) for c in curves]
    parent = list(range(nrec))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    xs = np.array([o.state.x for o in orbits])
    periods = np.array([o.period for o in orbits])
    # near[i, j]: representative i lies on curve j
    near = np.zeros((nrec, nrec), dtype=bool)
    for j in range(nrec):
        near[:, j] = _dist_to_curve(space, xs, curves[j]) <= tols[j]
    for i in range(nrec):
        for j in np.nonzero(near[i] | near[:, i])[0]:
            if j != i and find(i) != find(j) and _commensurate(periods[i], periods[j]):
                ri, rj = find(i), find(j)
                parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(nrec):
        groups.setdefault(find(i), []).append(i)
    keep = []
    for members in groups.values():
        best = min(members, key=lambda i: (orbits[i].newton_residual, tuple(xs[i])))
        keep.append(orbits[best])
    keep.sort(key=lambda o: tuple(o.state.x))
    return keep


def validate_orbit(space: TwistedPhaseSpace, orbit: OrbitRecord, target_energy: float, cfg: SearchConfig,
                   reintegration: float | None = None) -> dict:
    """Re-integration closure, energy pinning, Floquet 1, and loop residual."""
    re = reintegration_error(space, orbit, cfg.steps_per_period) if reintegration is None else reintegration
    return {
        "reintegration": re,
        "reintegration_ok": re <= 10 * max(orbit.newton_residual, 1e-15),
        "energy_error": abs(orbit.energy - target_energy),
        "energy_ok": abs(orbit.energy - target_energy) <= 1e-8,
        "floquet_dist": orbit.floquet_distance_to_one,
        "floquet_ok": orbit.floquet_distance_to_one <= cfg.floquet_tol,
        "ds_residual": orbit.ds_residual,
        "ds_ok": orbit.ds_residual <= cfg.ds_threshold,
    }


# ---------------------------------------------------------------------------
# census


@dataclass
class OrbitCensus:
    rows: list
    bound: dict
    headline: dict
    orbits: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "bound": self.bound, "headline": self.headline}


def _shoot_chunk(args):
    space, xs, ts, energy, cfg, window = args
    return shoot(space, xs, ts, energy, cfg, window)


def _shoot_parallel(space, seedset, energy, cfg, window):
    xs = [s.x for s in seedset.seeds]
    ts = list(seedset.periods)
    if cfg.jobs <= 1 or len(xs) < 2 * cfg.jobs:
        return shoot(space, xs, ts, energy, cfg, window)
    bounds = np.linspace(0, len(xs), cfg.jobs + 1).astype(int)
    chunks = [(space, xs[a:b], ts[a:b], energy, cfg, window) for a, b in zip(bounds[:-1], bounds[1:])]
    out = []
    with ProcessPoolExecutor(cfg.jobs) as pool:
        for a, part in zip(bounds[:-1], pool.map(_shoot_chunk, chunks)):
            for r in part:
                r.seed_index += a
            out.extend(part)
    return out


def orbit_census(space: TwistedPhaseSpace, epsilon_list, config: SearchConfig | None = None,
                 convergence_threshold: float = 0.9) -> OrbitCensus:
    """Seed, shoot, validate and deduplicate on each level ``H = epsilon^2``.

    Every class of the resonance partition is seeded.  The headline row is
    the smallest epsilon whose convergence rate reaches
    ``convergence_threshold``; it passes iff its distinct count meets the
    bound.
    """
    cfg = config or SearchConfig()
    d = space.dim
    per = np.asarray(space.base.periods or (1.0,) * d)
    grid = space.base.grid(cfg.n_base) + 0.5 * per / cfg.n_base
    field_ = eigenvalue_field(space, grid, cfg.max_multiple, cfg.rel_tol)
    part = field_.partition
    stable = stable_eigenvalue_sets(part, zip(grid, field_.eigenvalues))
    report = bound_report(part, d, space.base.cuplength, space.base.crit, stable)
    bound = census_bound(report)
    classes = range(part.q) if cfg.class_index is None else [cfg.class_index]

    rows, orbits = [], {}
    for eps in epsilon_list:
        energy = eps**2
        accepted, rejected, n_seeds = [], [], 0
        checks_failed = 0
        for ci in classes:
            seeds = seed_from_limit(space, ci, eps, cfg.n_base, cfg.n_fibre, part, cfg.seed)
            window = period_window(space, part, ci, cfg.window, grid)
            n_seeds += len(seeds)
            results = _shoot_parallel(space, seeds, energy, cfg, window)
            found = [r for r in results if isinstance(r, OrbitRecord)]
            rejected += [r for r in results if not isinstance(r, OrbitRecord)]
            for r, re in zip(found, reintegration_error(space, found, cfg.steps_per_period)):
                r.ds_residual = ds_residual(space, r, cfg.ds_variations, cfg.ds_nodes, seed=cfg.seed)
                r.checks = validate_orbit(space, r, energy, cfg, re)
                if not all(r.checks[k] for k in ("reintegration_ok", "energy_ok", "floquet_ok", "ds_ok")):
                    checks_failed += 1
            accepted += found
        distinct = deduplicate(accepted, space, samples=cfg.curve_samples, tol_factor=cfg.tol_geom_factor)
        reasons = {}
        for r in rejected:
            key = r.reason.split(" (")[0]
            reasons[key] = reasons.get(key, 0) + 1
        rate = len(accepted) / max(n_seeds, 1)
        row = {
            "epsilon": eps,
            "energy": energy,
            "seeds": n_seeds,
            "converged": len(accepted),
            "convergence_rate": rate,
            "distinct": len(distinct),
            "bound": bound,
            "pass": len(distinct) >= bound,
            "validation_failures": checks_failed,
            "rejections": reasons,
            "max_newton_residual": max((o.newton_residual for o in accepted), default=None),
            "max_ds_residual": max((o.ds_residual for o in accepted), default=None),
        }
        log.info("census eps=%g: %d/%d converged, %d distinct (bound %d)", eps, len(accepted), n_seeds,
                 len(distinct), bound)
        rows.append(row)
        orbits[eps] = distinct
    ok_rows = [r for r in rows if r["convergence_rate"] >= convergence_threshold]
    if ok_rows:
        best = min(ok_rows, key=lambda r: r["epsilon"])
        headline = {"epsilon": best["epsilon"], "distinct": best["distinct"], "bound": bound,
                    "pass": best["pass"] and best["validation_failures"] == 0}
    else:
        headline = {"epsilon": None, "distinct": None, "bound": bound, "pass": False,
                    "reason": f"no epsilon reached {convergence_threshold:.0%} convergence"}
    return OrbitCensus(rows, {**report.to_dict(), "census_bound": bound}, headline, orbits)
