"""Lower bounds on the number of closed orbits near a symplectic minimum."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field


def _check_int(name, value, minimum=0):
    if int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def bound_main(q: int, cl: int, n: int, m: int) -> int:
    """``q * CL + (n - m)`` for a minimum ``M^{2m}`` inside ``N^{2n}``.

    A point minimum (``m = 0``) is encoded with ``cl = 0`` and gives ``n``.
    """
    q = _check_int("q", q, 1)
    cl = _check_int("CL", cl)
    n = _check_int("n", n, 1)
    m = _check_int("m", m)
    if not n > m:
        raise ValueError(f"need n > m, got n={n}, m={m}")
    return q * cl + (n - m)


def bound_magnetic(q: int, cl: int, m: int) -> int:
    """Magnetic case ``N = T*M`` with ``dim M = 2m``, so ``n = 2m``."""
    m = _check_int("m", m, 1)
    return bound_main(q, cl, 2 * m, m)


def bound_stable_set(cl: int, r: int) -> int:
    """Orbits guaranteed by one stable eigenvalue set of order ``r``."""
    return _check_int("CL", cl) + _check_int("r", r, 1)


def per_class_bound(class_sizes, cl: int) -> list:
    """``CL + (k_i - k_{i-1})`` for each class; sums to :func:`bound_main`."""
    cl = _check_int("CL", cl)
    return [cl + _check_int("class size", s, 1) for s in class_sizes]


@dataclass
class BoundReport:
    q: int
    p: int
    cuplength: int
    crit: int
    n: int
    m: int
    class_sizes: list
    bound_main: int
    bound_magnetic: int | None
    bound_surface: int | None
    per_class: list
    stable_sets: list = field(default_factory=list)
    speculative: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(partition, base_dim: int, cuplength: int, crit: int, stable=()) -> BoundReport:
    """Collect every bound for a magnetic system over a ``base_dim`` manifold.

    ``stable`` holds ``(class_index, order)`` pairs; ``speculative`` is
    ``(n - m)(CL + 1)``, reported but never asserted.
    """
    if base_dim % 2:
        raise ValueError("magnetic base must be even dimensional")
    m = base_dim // 2
    n = base_dim
    sizes = partition.class_sizes
    if sum(sizes) != n - m:
        raise ValueError(f"classes cover {sum(sizes)} eigenvalues, expected {n - m}")
    main = bound_main(partition.q, cuplength, n, m)
    return BoundReport(
        q=partition.q,
        p=n - m,
        cuplength=cuplength,
        crit=crit,
        n=n,
        m=m,
        class_sizes=list(sizes),
        bound_main=main,
        bound_magnetic=bound_magnetic(partition.q, cuplength, m),
        bound_surface=crit if base_dim == 2 else None,
        per_class=per_class_bound(sizes, cuplength),
        stable_sets=[
            {"class": int(c), "order": int(r), "bound": bound_stable_set(cuplength, r)} for c, r in stable
        ],
        speculative=(n - m) * (cuplength + 1),
    )


def census_bound(report: BoundReport) -> int:
    """The bound a census is judged against.

    Surfaces use Crit(M) (codimension two); otherwise the main bound.
    """
    if report.bound_surface is not None:
        return max(report.bound_surface, report.bound_main)
    return report.bound_main
