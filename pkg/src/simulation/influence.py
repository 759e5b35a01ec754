"""
Influence Functions

Interaction kernels psi(r) of the consensus model, their Lipschitz constants,
and certification of the subluminal speed condition sup psi(r)*r < c on a
bounded distance range.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from src.config import settings
from src.core.exceptions import DomainError, InfluenceRejectedError

logger = logging.getLogger(__name__)


class InfluenceKind(str, Enum):
    """Built-in kernel families."""
    RATIONAL = "rational"
    GAUSSIAN = "gaussian"
    AFFINE_CUTOFF = "affine-cutoff"
    TABULATED = "tabulated"


_PARAM_COUNTS = {
    InfluenceKind.RATIONAL: (1, 2),
    InfluenceKind.GAUSSIAN: (2, 2),
    InfluenceKind.AFFINE_CUTOFF: (2, 2),
}


@dataclass(frozen=True)
class InfluenceFunction:
    """
    Immutable influence kernel.

    Parameter layout per kind:
        rational:       (kappa, beta)     psi(r) = kappa / (1 + r^2)^beta
        gaussian:       (kappa, sigma)    psi(r) = kappa * exp(-r^2 / sigma^2)
        affine-cutoff:  (a, b)            psi(r) = max(0, a - b r)
        tabulated:      (r0, v0, r1, v1, ...) piecewise linear, r0 = 0,
                        constant beyond the last node
    """
    kind: InfluenceKind
    params: Tuple[float, ...]
    lipschitz_const: float
    speed_bound: Optional[float] = None

    # ==================== Constructors ====================

    @classmethod
    def rational(cls, kappa: float = 1.0, beta: float = 1.0) -> "InfluenceFunction":
        return cls.from_spec(InfluenceKind.RATIONAL, [kappa, beta])

    @classmethod
    def gaussian(cls, kappa: float, sigma: float) -> "InfluenceFunction":
        return cls.from_spec(InfluenceKind.GAUSSIAN, [kappa, sigma])

    @classmethod
    def affine_cutoff(cls, a: float, b: float) -> "InfluenceFunction":
        return cls.from_spec(InfluenceKind.AFFINE_CUTOFF, [a, b])

    @classmethod
    def tabulated(
        cls,
        nodes: Sequence[Tuple[float, float]],
        lipschitz: Optional[float] = None
    ) -> "InfluenceFunction":
        flat = [v for node in nodes for v in node]
        return cls.from_spec(InfluenceKind.TABULATED, flat, lipschitz=lipschitz)

    @classmethod
    def from_spec(
        cls,
        kind: "InfluenceKind | str",
        params: Sequence[float],
        lipschitz: Optional[float] = None,
        speed_bound: Optional[float] = None
    ) -> "InfluenceFunction":
        """
        Build and validate a kernel from its configuration form.

        Raises:
            InfluenceRejectedError: If the parameters do not describe a
                nonnegative Lipschitz kernel
        """
        kind = InfluenceKind(kind)
        values = tuple(float(p) for p in params)
        if not all(math.isfinite(p) for p in values):
            raise InfluenceRejectedError(f"Non-finite parameters for {kind.value} kernel")

        if kind is InfluenceKind.TABULATED:
            lipschitz_const = _tabulated_lipschitz(values, declared=lipschitz)
        else:
            lo, hi = _PARAM_COUNTS[kind]
            if not lo <= len(values) <= hi:
                raise InfluenceRejectedError(
                    f"{kind.value} kernel takes {lo}..{hi} parameters, got {len(values)}"
                )
            if kind is InfluenceKind.RATIONAL and len(values) == 1:
                values = values + (1.0,)
            lipschitz_const = _closed_form_lipschitz(kind, values)
            if lipschitz is not None and lipschitz < lipschitz_const * (1.0 - 1e-12):
                raise InfluenceRejectedError(
                    f"Declared Lipschitz constant {lipschitz} is below the kernel's {lipschitz_const}",
                    details={"kind": kind.value}
                )
            if lipschitz is not None:
                lipschitz_const = float(lipschitz)

        if speed_bound is not None and speed_bound < 0:
            raise InfluenceRejectedError("Declared speed bound must be nonnegative")

        return cls(kind=kind, params=values, lipschitz_const=lipschitz_const, speed_bound=speed_bound)

    # ==================== Evaluation ====================

    def values(self, r: np.ndarray) -> np.ndarray:
        """Vectorized psi(r) for r >= 0 (no domain checks)."""
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.kind is InfluenceKind.RATIONAL:
            kappa, beta = p
            return kappa / np.power(1.0 + r * r, beta)
        if self.kind is InfluenceKind.GAUSSIAN:
            kappa, sigma = p
            return kappa * np.exp(-(r * r) / (sigma * sigma))
        if self.kind is InfluenceKind.AFFINE_CUTOFF:
            a, b = p
            return np.maximum(0.0, a - b * r)
        nodes_r, nodes_v = self.nodes
        return np.interp(r, nodes_r, nodes_v)

    def __call__(self, r: float) -> float:
        return eval_psi(self, r)

    @property
    def nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node abscissae and values of a tabulated kernel."""
        if self.kind is not InfluenceKind.TABULATED:
            raise DomainError(f"{self.kind.value} kernel has no nodes")
        arr = np.asarray(self.params, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @property
    def psi_sup(self) -> float:
        """sup of psi over [0, inf)."""
        if self.kind is InfluenceKind.TABULATED:
            return float(self.nodes[1].max())
        if self.kind is InfluenceKind.AFFINE_CUTOFF:
            return max(0.0, self.params[0])
        return self.params[0]

    @property
    def is_nonincreasing(self) -> bool:
        return self.kind is not InfluenceKind.TABULATED

    def describe(self) -> str:
        return f"{self.kind.value}{list(self.params)}"


@dataclass(frozen=True)
class InfluenceCertification:
    """Accepted kernel together with the certified speed bound s < c."""
    psi: InfluenceFunction
    c: float
    r_max: float
    speed_bound: float
    argmax_r: float

    @property
    def s(self) -> float:
        return self.speed_bound


# ==================== Operations ====================


def eval_psi(f: InfluenceFunction, r: float) -> float:
    """
    Evaluate psi at a single distance.

    Raises:
        DomainError: If r is negative or not finite
    """
    r = float(r)
    if not math.isfinite(r) or r < 0:
        raise DomainError(f"psi is defined for finite r >= 0, got {r}", details={"r": r})
    return float(f.values(np.asarray(r)))


def psi_range(f: InfluenceFunction, lo: float, hi: float) -> Tuple[float, float]:
    """
    Exact (min, max) of psi on [lo, hi].

    Built-in analytic kinds are nonincreasing, so the extrema sit at the
    endpoints; a tabulated kernel attains them at nodes or endpoints.
    """
    if lo < 0 or hi < lo:
        raise DomainError(f"Invalid range [{lo}, {hi}]", details={"lo": lo, "hi": hi})
    if f.is_nonincreasing:
        values = f.values(np.array([hi, lo]))
        return float(values[0]), float(values[1])
    nodes_r, _ = f.nodes
    inside = nodes_r[(nodes_r > lo) & (nodes_r < hi)]
    candidates = f.values(np.concatenate(([lo, hi], inside)))
    return float(candidates.min()), float(candidates.max())


def effective_speed_bound(
    f: InfluenceFunction,
    r_max: float,
    tol: Optional[float] = None
) -> float:
    """
    Certified upper bound on sup_{0 <= r <= r_max} psi(r) r.

    The range is covered by fixed cells of pitch h0 anchored at r = 0.
    Each cell is refined by branch and bound until the bound of every
    sub-interval lies within tol of the cell's best sample. On [a, b] the
    bound is psi(a) * b for the nonincreasing analytic kinds and
    (max(psi(a), psi(b)) + L_psi (b - a) / 2) * b for tabulated kernels. The returned
    value is the maximum of these interval bounds: it never underestimates
    the supremum and, because cells are processed independently, it is
    monotone in r_max.
    """
    bound, _ = _speed_bound_search(f, r_max, tol)
    return bound


def validate_influence(
    f: InfluenceFunction,
    c: float,
    r_max: float
) -> InfluenceCertification:
    """
    Certify that the kernel keeps agents below the speed of information c.

    Raises:
        InfluenceRejectedError: On positivity, Lipschitz, or speed-limit failure
    """
    if not c > 0:
        raise DomainError(f"Speed of information must be positive, got {c}", details={"c": c})
    if not r_max > 0:
        raise DomainError(f"Validation range must be positive, got {r_max}", details={"r_max": r_max})

    bad_r = _first_nonpositive(f, r_max)
    if bad_r is not None:
        raise InfluenceRejectedError(
            f"psi must be strictly positive for r > 0; psi({bad_r:g}) = {eval_psi(f, bad_r):g}",
            r=bad_r,
            details={"check": "positivity"}
        )

    bad_r = _lipschitz_spot_check(f, r_max)
    if bad_r is not None:
        raise InfluenceRejectedError(
            f"psi exceeds its Lipschitz constant {f.lipschitz_const:g} near r = {bad_r:g}",
            r=bad_r,
            details={"check": "lipschitz"}
        )

    s_eff, argmax_r = _speed_bound_search(f, r_max, None)
    if s_eff >= c:
        raise InfluenceRejectedError(
            f"Kernel violates the subluminal speed condition sup psi(r)*r < c: "
            f"s = {s_eff:.6g} >= c = {c:g} (attained near r = {argmax_r:g})",
            r=argmax_r,
            details={"check": "speed_limit", "s": s_eff, "c": c}
        )

    s = s_eff
    if f.speed_bound is not None:
        if f.speed_bound < s_eff:
            raise InfluenceRejectedError(
                f"Declared speed bound {f.speed_bound:g} is below the certified supremum {s_eff:.6g}",
                r=argmax_r,
                details={"check": "declared_speed_bound"}
            )
        if f.speed_bound >= c:
            raise InfluenceRejectedError(
                f"Declared speed bound {f.speed_bound:g} is not below c = {c:g}",
                details={"check": "declared_speed_bound"}
            )
        s = f.speed_bound

    logger.info(
        f"Certified {f.describe()} on [0, {r_max:g}]: s = {s:.9g} < c = {c:g}"
    )
    return InfluenceCertification(psi=f, c=float(c), r_max=float(r_max), speed_bound=s, argmax_r=argmax_r)


# ==================== Internals ====================


def _closed_form_lipschitz(kind: InfluenceKind, params: Tuple[float, ...]) -> float:
    if kind is InfluenceKind.RATIONAL:
        kappa, beta = params
        if kappa < 0 or beta < 0:
            raise InfluenceRejectedError("rational kernel needs kappa >= 0 and beta >= 0")
        if kappa == 0 or beta == 0:
            return 0.0
        # |psi'| peaks at r^2 = 1 / (2 beta + 1)
        r_star = 1.0 / math.sqrt(2.0 * beta + 1.0)
        return 2.0 * beta * kappa * r_star / (1.0 + r_star * r_star) ** (beta + 1.0)
    if kind is InfluenceKind.GAUSSIAN:
        kappa, sigma = params
        if kappa < 0 or sigma <= 0:
            raise InfluenceRejectedError("gaussian kernel needs kappa >= 0 and sigma > 0")
        return kappa * math.sqrt(2.0) / sigma * math.exp(-0.5)
    a, b = params
    if a < 0 or b < 0:
        raise InfluenceRejectedError("affine-cutoff kernel needs a >= 0 and b >= 0")
    return b if a > 0 else 0.0


def _tabulated_lipschitz(params: Tuple[float, ...], declared: Optional[float]) -> float:
    if len(params) < 2 or len(params) % 2:
        raise InfluenceRejectedError("tabulated kernel needs (r, value) pairs")
    arr = np.asarray(params, dtype=float).reshape(-1, 2)
    r, v = arr[:, 0], arr[:, 1]
    if r[0] != 0.0:
        raise InfluenceRejectedError("tabulated kernel must start at r = 0", r=float(r[0]))
    if np.any(v < 0):
        raise InfluenceRejectedError("tabulated kernel values must be nonnegative", r=float(r[np.argmin(v)]))
    if len(r) == 1:
        return 0.0 if declared is None else float(declared)
    dr = np.diff(r)
    if np.any(dr <= 0):
        bad = int(np.argmax(dr <= 0))
        raise InfluenceRejectedError(
            "tabulated kernel nodes must be strictly increasing (a jump is not Lipschitz)",
            r=float(r[bad + 1])
        )
    slopes = np.abs(np.diff(v)) / dr
    lipschitz = float(slopes.max())
    if declared is not None:
        if lipschitz > declared * (1.0 + 1e-12):
            bad = int(np.argmax(slopes))
            raise InfluenceRejectedError(
                f"tabulated data has slope {lipschitz:g} above the declared Lipschitz constant {declared:g}",
                r=float(r[bad])
            )
        return float(declared)
    return lipschitz


def _first_nonpositive(f: InfluenceFunction, r_max: float) -> Optional[float]:
    if f.is_nonincreasing:
        return r_max if f.values(np.asarray(r_max)) <= 0 else None
    nodes_r, _ = f.nodes
    candidates = np.concatenate((nodes_r[(nodes_r > 0) & (nodes_r < r_max)], [r_max]))
    values = f.values(candidates)
    bad = np.flatnonzero(values <= 0)
    if bad.size:
        return float(candidates[bad[0]])
    # a zero at r = 0 followed by a positive node keeps psi > 0 on (0, r_max]
    return None


def _lipschitz_spot_check(f: InfluenceFunction, r_max: float) -> Optional[float]:
    r = np.linspace(0.0, r_max, settings.lipschitz_spot_checks)
    v = f.values(r)
    jumps = np.abs(np.diff(v))
    allowed = f.lipschitz_const * np.diff(r) * (1.0 + 1e-9) + 1e-15
    bad = np.flatnonzero(jumps > allowed)
    return float(r[bad[0]]) if bad.size else None


def _speed_bound_search(
    f: InfluenceFunction,
    r_max: float,
    tol: Optional[float]
) -> Tuple[float, float]:
    """Cell-local branch and bound for sup psi(r) r; returns (bound, argmax r)."""
    if not r_max > 0:
        raise DomainError(f"r_max must be positive, got {r_max}", details={"r_max": r_max})
    tol = settings.speed_bound_tol if tol is None else tol
    h0 = settings.speed_bound_base_pitch
    n_cells = max(1, math.ceil(r_max / h0 - 1e-9))

    def g(r: np.ndarray) -> np.ndarray:
        return f.values(r) * r

    if f.is_nonincreasing:
        def upper(a, b, ga, gb):
            # psi(r) <= psi(a) and r <= b on [a, b]
            return f.values(a) * b
    else:
        last_node = float(f.nodes[0][-1])

        def upper(a, b, ga, gb):
            psi_a, psi_b = f.values(a), f.values(b)
            local_l = np.where(a < last_node, f.lipschitz_const, 0.0)
            return (np.maximum(psi_a, psi_b) + local_l * (b - a) / 2.0) * b

    cells = np.arange(n_cells)
    a = cells * h0
    b = a + h0
    ga, gb = g(a), g(b)
    cell_best = np.maximum(ga, gb)

    best_i = int(np.argmax(cell_best))
    argmax_r = float(a[best_i] if ga[best_i] >= gb[best_i] else b[best_i])
    best_value = float(cell_best[best_i])

    bound = -math.inf
    owner = cells
    for _ in range(80):
        ub = upper(a, b, ga, gb)
        open_ = ub > cell_best[owner] + tol
        if np.any(~open_):
            bound = max(bound, float(ub[~open_].max()))
        if not np.any(open_):
            break
        a, b, ga, gb, owner = a[open_], b[open_], ga[open_], gb[open_], owner[open_]
        m = 0.5 * (a + b)
        gm = g(m)
        np.maximum.at(cell_best, owner, gm)
        top = int(np.argmax(gm))
        if gm[top] > best_value:
            best_value, argmax_r = float(gm[top]), float(m[top])
        a, b = np.concatenate((a, m)), np.concatenate((m, b))
        ga, gb = np.concatenate((ga, gm)), np.concatenate((gm, gb))
        owner = np.concatenate((owner, owner))
    else:
        # widths are at double resolution here; the interval bounds still hold
        bound = max(bound, float(upper(a, b, ga, gb).max()))

    return max(bound, best_value), argmax_r
