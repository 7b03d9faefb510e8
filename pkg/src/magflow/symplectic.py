"""Linear symplectic algebra on a single fibre.

Conventions used throughout the package:

* A linear symplectic form is stored as an antisymmetric matrix ``W`` with
  ``W(u, v) = u @ W @ v``.
* The standard form is ``J = [[0, -I], [I, 0]]``.
* A quadratic form is stored as a symmetric matrix ``A`` with value
  ``Q(y) = y @ A @ y``.  Its Williamson normal form is therefore
  ``sum_i a_i (y_i**2 + y_{i+p}**2)``, i.e. ``T.T @ A @ T = diag(a, a)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

import numpy as np
from scipy.linalg import null_space

__all__ = [
    "DegenerateFormError",
    "SymplecticMatrix",
    "QuadraticForm",
    "WilliamsonResult",
    "ResonancePartition",
    "standard_form",
    "symplectic_complement",
    "williamson",
    "williamson_oracle",
    "classify_resonance",
    "stable_eigenvalue_sets",
    "class_period",
    "oracle_suite",
    "random_spd",
    "random_symplectic",
]


class DegenerateFormError(ValueError):
    """A symplectic form is (numerically) singular where it must not be.

    The offending Gram matrix is kept on ``gram`` for reporting.
    """

    def __init__(self, message, gram=None):
        super().__init__(message)
        self.gram = None if gram is None else np.asarray(gram)


def standard_form(p: int) -> np.ndarray:
    """Return ``J = [[0, -I_p], [I_p, 0]]``."""
    eye = np.eye(p)
    zero = np.zeros((p, p))
    return np.block([[zero, -eye], [eye, zero]])


@dataclass(frozen=True)
class SymplecticMatrix:
    """An antisymmetric, nondegenerate ``2p x 2p`` matrix."""

    entries: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        w = np.array(self.entries, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2:
            raise ValueError(f"symplectic matrix must be square of even size, got {w.shape}")
        if not np.array_equal(w, -w.T):
            raise ValueError("symplectic matrix is not exactly antisymmetric")
        det = np.linalg.det(w)
        if abs(det) <= self.tol:
            raise DegenerateFormError(f"symplectic matrix is degenerate (|det| = {abs(det):.3e})", w)
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)

    @classmethod
    def from_matrix(cls, w, tol=1e-12):
        """Antisymmetrize ``w`` (removing round-off) and wrap it."""
        w = np.asarray(w, dtype=float)
        return cls(0.5 * (w - w.T), tol)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class QuadraticForm:
    """A symmetric positive-definite ``2p x 2p`` matrix ``A``, ``Q(y) = y A y``."""

    entries: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"quadratic form must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("quadratic form is not exactly symmetric")
        lo = np.linalg.eigvalsh(a).min()
        if lo <= self.tol:
            raise ValueError(f"quadratic form is not positive definite (min eigenvalue {lo:.3e})")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_matrix(cls, a, tol=1e-12):
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T), tol)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.einsum("...i,ij,...j->...", y, self.entries, y)


@dataclass(frozen=True)
class WilliamsonResult:
    """Symplectic eigenvalues ``a`` (ascending) and normalizing basis ``T``.

    ``T.T @ omega @ T == J`` and ``T.T @ A @ T == diag(a, a)``.  ``clusters``
    lists index groups of eigenvalues closer than the separation tolerance;
    inside such a group the basis is not unique.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    clusters: tuple = ()

    @property
    def p(self) -> int:
        return len(self.eigenvalues)

    def residuals(self, omega, form):
        """Return ``(|T'WT - J|_inf, |T'AT - diag(a,a)|_inf)``."""
        w = _entries(omega)
        a = _entries(form)
        t = self.basis
        d = np.diag(np.concatenate([self.eigenvalues, self.eigenvalues]))
        return (
            np.abs(t.T @ w @ t - standard_form(self.p)).max(),
            np.abs(t.T @ a @ t - d).max(),
        )


def _entries(m):
    return np.asarray(getattr(m, "entries", m), dtype=float)


def symplectic_complement(omega, subspace) -> np.ndarray:
    """Basis of the ``omega``-orthogonal complement of ``span(subspace)``.

    Parameters
    ----------
    omega : SymplecticMatrix or array
        Ambient symplectic form, ``2n x 2n``.
    subspace : array, shape (2n, k)
        Columns spanning the subspace; ``omega`` must be nondegenerate on it.

    Returns
    -------
    ndarray, shape (2n, 2n - k)
        Orthonormal columns spanning ``{v : omega(v, w) = 0 for all w}``.

    Raises
    ------
    DegenerateFormError
        If the Gram matrix ``S.T @ omega @ S`` is singular.
    """
    w = _entries(omega)
    s = np.asarray(subspace, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n2, k = s.shape
    if n2 != w.shape[0]:
        raise ValueError(f"subspace has {n2} rows, form has dimension {w.shape[0]}")
    if k == 0:
        return np.eye(n2)
    if np.linalg.matrix_rank(s) < k:
        raise ValueError("subspace columns are linearly dependent")
    gram = s.T @ w @ s
    # scale-free singularity test on the restricted form
    sv = np.linalg.svd(gram, compute_uv=False)
    ref = np.linalg.norm(w, 2) * np.linalg.norm(s, 2) ** 2
    if k % 2 or sv.min() <= 1e-12 * ref:
        raise DegenerateFormError("form is degenerate on the subspace", gram)
    if k == n2:
        return np.zeros((n2, 0))
    # v is orthogonal iff (S^T W) v = 0
    return null_space(s.T @ w)


def williamson(omega, form, cluster_tol: float = 1e-8) -> WilliamsonResult:
    """Simultaneous normal form of a symplectic form and a positive form.

    Works through ``L^{-1} W L^{-1}`` with ``L = A^{1/2}``: that matrix is
    antisymmetric, so ``i L^{-1} W L^{-1}`` is Hermitian and its eigenvectors
    for positive eigenvalues ``w_k`` give orthonormal invariant planes.  The
    symplectic eigenvalues are ``a_k = 1 / w_k``.
    """
    w = _entries(omega)
    a = _entries(form)
    if w.shape != a.shape:
        raise ValueError(f"dimension mismatch: form {a.shape} vs symplectic {w.shape}")
    n2 = w.shape[0]
    if n2 % 2:
        raise ValueError("odd dimension")
    p = n2 // 2
    evals, evecs = np.linalg.eigh(a)
    if evals.min() <= 0:
        raise ValueError("quadratic form is not positive definite")
    l_inv = (evecs / np.sqrt(evals)) @ evecs.T
    k = l_inv @ w @ l_inv
    k = 0.5 * (k - k.T)
    mu, v = np.linalg.eigh(1j * k)
    # eigh sorts ascending, so the p positive eigenvalues are at the end,
    # largest last; a = 1/mu therefore comes out ascending when reversed
    pos = mu[p:][::-1]
    vp = v[:, p:][:, ::-1]
    if pos.min() <= 0:
        raise DegenerateFormError("symplectic form is degenerate", w)
    x = np.sqrt(2.0) * vp.real
    y = np.sqrt(2.0) * vp.imag
    # (x_k, y_k) satisfies x_k K y_k = -mu_k, matching J's orientation
    scale = 1.0 / np.sqrt(pos)
    basis = l_inv @ np.hstack([x * scale, y * scale])
    eigs = 1.0 / pos
    return WilliamsonResult(eigs, basis, _clusters(eigs, cluster_tol))


def _clusters(eigs, tol):
    groups = []
    current = [0]
    for i in range(1, len(eigs)):
        if eigs[i] - eigs[i - 1] <= tol * eigs[i]:
            current.append(i)
        else:
            if len(current) > 1:
                groups.append(tuple(current))
            current = [i]
    if len(current) > 1:
        groups.append(tuple(current))
    return tuple(groups)


def williamson_oracle(omega, form) -> np.ndarray:
    """Sorted positive imaginary parts of ``eig(inv(W) @ A)``.

    Independent of :func:`williamson`; used to cross-check it.
    """
    w = _entries(omega)
    a = _entries(form)
    ev = np.linalg.eigvals(np.linalg.solve(w, a))
    im = np.sort(ev.imag)
    return im[len(im) // 2:]


# ---------------------------------------------------------------------------
# resonance classes


@dataclass
class ResonancePartition:
    """Integer-dependence classes of a sampled eigenvalue field.

    ``classes`` holds 0-based index groups into the ascending eigenvalue
    list.  ``relations`` maps a dependent pair ``(i, j)`` (``i > j``) to its
    multiple ``n`` with ``a_i = n a_j``.  When the dependence pattern changes
    across samples, ``grc_satisfied`` is False and ``witness`` describes the
    first inconsistent pair.
    """

    classes: list
    grc_satisfied: bool
    relations: dict = field(default_factory=dict)
    witness: dict | None = None
    max_multiple: int = 16
    rel_tol: float = 1e-8
    crossings: list = field(default_factory=list)

    @property
    def q(self) -> int:
        return len(self.classes)

    @property
    def p(self) -> int:
        return sum(len(c) for c in self.classes)

    @property
    def class_sizes(self) -> list:
        return [len(c) for c in self.classes]

    def class_of(self, index: int) -> int:
        for k, members in enumerate(self.classes):
            if index in members:
                return k
        raise IndexError(index)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "classes": [list(map(int, c)) for c in self.classes],
            "grc_satisfied": self.grc_satisfied,
            "relations": {f"{i},{j}": n for (i, j), n in sorted(self.relations.items())},
            "witness": self.witness,
            "max_multiple": self.max_multiple,
            "rel_tol": self.rel_tol,
            "crossings": self.crossings,
        }


def integer_multiple(big: float, small: float, max_multiple: int, rel_tol: float):
    """Return ``n <= max_multiple`` with ``big ~= n * small``, else None."""
    if small <= 0 or big < small * (1 - rel_tol):
        return None
    n = int(round(big / small))
    if 1 <= n <= max_multiple and abs(big - n * small) <= rel_tol * big:
        return n
    return None


def _pattern(eigs, max_multiple, rel_tol):
    pat = {}
    for i in range(len(eigs)):
        for j in range(i):
            n = integer_multiple(eigs[i], eigs[j], max_multiple, rel_tol)
            if n is not None:
                pat[(i, j)] = n
    return pat


def _components(p, pairs):
    parent = list(range(p))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(p):
        groups.setdefault(find(i), []).append(i)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def classify_resonance(samples, max_multiple: int = 16, rel_tol: float = 1e-8) -> ResonancePartition:
    """Group eigenvalues into integer-dependence classes and test constancy.

    Parameters
    ----------
    samples : iterable of (point, eigenvalues)
        Eigenvalue lists are sorted ascending before use.
    max_multiple : int
        Largest integer ``n`` tried in ``a_i = n a_j``.
    rel_tol : float
        Relative tolerance of the dependence test.

    Notes
    -----
    A pair is placed in a class only if it is dependent (with the same
    multiple) at every sample.  When the resonance conditions hold this is
    the pattern at any single sample; when they fail it keeps the partition
    independent of sample order.  Failure is reported, not raised.
    """
    if max_multiple < 1:
        raise ValueError("max_multiple must be >= 1")
    samples = [(pt, np.sort(np.asarray(ev, dtype=float))) for pt, ev in samples]
    if not samples:
        raise ValueError("no samples")
    p = len(samples[0][1])
    for pt, ev in samples:
        if len(ev) != p:
            raise ValueError(f"sample at {pt} has {len(ev)} eigenvalues, expected {p}")
        if ev.min() <= 0:
            raise ValueError(f"non-positive eigenvalue at {pt}")

    patterns = [_pattern(ev, max_multiple, rel_tol) for _, ev in samples]
    ref = patterns[0]
    common = {k: n for k, n in ref.items() if all(pat.get(k) == n for pat in patterns)}
    satisfied = all(pat == ref for pat in patterns)

    witness = None
    if not satisfied:
        keys = sorted(set().union(*patterns), key=lambda k: (k[0], k[1]))
        for key in keys:
            values = [pat.get(key) for pat in patterns]
            if len(set(values)) > 1:
                first = values[0]
                k_bad = next(k for k, v in enumerate(values) if v != first)
                i, j = key
                witness = {
                    "pair": [int(i), int(j)],
                    "points": [_jsonable(samples[0][0]), _jsonable(samples[k_bad][0])],
                    "values": [
                        [float(samples[0][1][j]), float(samples[0][1][i])],
                        [float(samples[k_bad][1][j]), float(samples[k_bad][1][i])],
                    ],
                    "multiples": [first, values[k_bad]],
                }
                break

    crossings = []
    for k, (pt, ev) in enumerate(samples):
        gaps = np.diff(ev)
        hit = np.nonzero(gaps <= rel_tol * ev[1:])[0]
        for i in hit:
            crossings.append({"sample": k, "pair": [int(i), int(i + 1)]})

    return ResonancePartition(
        classes=tuple(_components(p, common.keys())),
        grc_satisfied=satisfied,
        relations=common,
        witness=witness,
        max_multiple=max_multiple,
        rel_tol=rel_tol,
        crossings=crossings,
    )


def _jsonable(pt):
    arr = np.asarray(pt, dtype=float)
    return arr.tolist()


def stable_eigenvalue_sets(partition: ResonancePartition, samples) -> list:
    """Classes that are stable eigenvalue sets, as ``(class_index, order)``.

    A class is stable when its members are dependent at every sample and no
    eigenvalue outside the class equals an integer multiple of a member at
    any sample.
    """
    samples = [np.sort(np.asarray(ev, dtype=float)) for _, ev in samples]
    out = []
    for c, members in enumerate(partition.classes):
        others = [k for k in range(partition.p) if k not in members]
        ok = True
        for ev in samples:
            for j in members:
                for k in others:
                    if ev[k] >= ev[j] * (1 - partition.rel_tol) and integer_multiple(
                        ev[k], ev[j], partition.max_multiple, partition.rel_tol
                    ):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            out.append((c, len(members)))
    return out


def class_period(eigenvalues, members, max_multiple: int = 16) -> float:
    """Common period of the limiting flow on one class's eigenspace.

    Each member rotates with angular frequency ``2 a_k``, so the class flow
    closes after ``pi / g`` where ``g`` is the common divisor of the
    ``a_k``.
    """
    a = np.asarray([eigenvalues[k] for k in members], dtype=float)
    base = a.min()
    denom = 1
    for value in a:
        frac = Fraction(value / base).limit_denominator(max_multiple)
        denom = lcm(denom, frac.denominator)
    return float(np.pi * denom / base)


# ---------------------------------------------------------------------------
# random instances and the oracle suite


def random_spd(rng, n: int, spread: float = 10.0) -> np.ndarray:
    """Random symmetric positive-definite matrix with condition <= ``spread``."""
    qmat, _ = np.linalg.qr(rng.normal(size=(n, n)))
    ev = np.exp(rng.uniform(0.0, np.log(spread), size=n))
    a = (qmat * ev) @ qmat.T
    return 0.5 * (a + a.T)


def random_symplectic(rng, p: int, scale: float = 0.5) -> np.ndarray:
    """Random ``S`` with ``S.T J S = J``, as ``expm(J^{-1} K)`` for symmetric ``K``."""
    from scipy.linalg import expm

    k = rng.normal(scale=scale, size=(2 * p, 2 * p))
    k = 0.5 * (k + k.T)
    return expm(np.linalg.solve(standard_form(p), k))


def oracle_suite(dims=(2, 4, 6, 8), instances: int = 100, seed: int = 0, cluster_tol: float = 1e-8):
    """Run :func:`williamson` against :func:`williamson_oracle` with ``Omega = J``.

    Returns one dict per instance with the two normalized reconstruction
    residuals and the relative eigenvalue error.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in dims:
        if n % 2:
            raise ValueError(f"odd dimension {n}")
        j = standard_form(n // 2)
        for k in range(instances):
            a = random_spd(rng, n)
            res = williamson(j, a, cluster_tol)
            rw, ra = res.residuals(j, a)
            ref = williamson_oracle(j, a)
            rows.append({
                "dim": n,
                "instance": k,
                "eigenvalues": res.eigenvalues.tolist(),
                "omega_residual": float(rw / np.abs(j).max()),
                "form_residual": float(ra / np.abs(a).max()),
                "oracle_rel_error": float(np.max(np.abs(res.eigenvalues - ref) / ref)),
                "clusters": [list(c) for c in res.clusters],
            })
    return rows
