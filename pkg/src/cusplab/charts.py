"""Model coordinate charts for hyperbolic metrics with cusp ends.

Four chart families cover the ends of a geometrically finite hyperbolic
manifold: the blown-up intermediate-rank cusp, the maximal-rank cusp, the
conformally compact collar near the infinite-volume face, and the
pre-blow-up upper-half-space picture of a cusp.  Every chart carries exact
closed-form metric components, the volume density, the (truncated) total
boundary defining function sigma, and membership tests for the exhaustion
domains {sigma >= eps}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

INTERMEDIATE_CUSP = "intermediate_cusp"
MAXIMAL_CUSP = "maximal_cusp"
COLLAR = "collar"
UPPER_HALF_SPACE = "upper_half_space"

_KINDS = (INTERMEDIATE_CUSP, MAXIMAL_CUSP, COLLAR, UPPER_HALF_SPACE)


class ChartDomainError(ValueError):
    """Point lies outside the chart's valid coordinate ranges."""


class RescalingCaseError(ValueError):
    """Rescaling-case invariants violated (base point vs eps mismatch)."""


def smooth_step(t: float) -> float:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly monotone between."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a / (a + b)


def truncate_bdf(x: float, edge: float, fraction: float) -> float:
    """Smoothly blend a boundary defining function to 1 over the outer
    ``fraction`` of its tubular neighbourhood [0, edge]."""
    lo = (1.0 - fraction) * edge
    if x <= lo:
        return x
    if x >= edge:
        return 1.0
    s = smooth_step((x - lo) / (edge - lo))
    return (1.0 - s) * x + s


def smooth_bump(t: float) -> float:
    """C-infinity bump on (-1, 1), equal to 1 at t = 0, identically 0 outside."""
    if abs(t) >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - t * t))


def round_sphere_metric(angles: np.ndarray) -> np.ndarray:
    """Round metric on S^d in spherical coordinates (d = len(angles)).

    Coordinates are (xi_1, ..., xi_d) with xi_1..xi_{d-1} polar and xi_d
    azimuthal; the component matrix is diag(1, sin^2 xi_1, sin^2 xi_1
    sin^2 xi_2, ...).
    """
    d = len(angles)
    g = np.zeros((d, d))
    acc = 1.0
    for k in range(d):
        g[k, k] = acc
        acc *= math.sin(angles[k]) ** 2
    return g


def _round_sphere_det(angles: np.ndarray) -> float:
    det = 1.0
    acc = 1.0
    for k in range(len(angles)):
        det *= acc
        acc *= math.sin(angles[k]) ** 2
    return det


def euclidean_collar_family(rho: float, y: np.ndarray) -> np.ndarray:
    """Default boundary family: the identity for every rho."""
    return np.eye(len(y))


def round_collar_family(rho: float, y: np.ndarray) -> np.ndarray:
    """Family (1 - rho^2/4)^2 * round(S^{n-1}); the collar metric it induces
    is exactly hyperbolic (ball model in normal form around the boundary)."""
    return (1.0 - rho * rho / 4.0) ** 2 * round_sphere_metric(y)


H_U_FAMILIES = {
    "euclidean": euclidean_collar_family,
    "round_sphere": round_collar_family,
}


@dataclass(frozen=True)
class Chart:
    """A model coordinate patch with closed-form metric components.

    kind selects the family; n is the manifold dimension; f the cusp rank
    (cusp kinds and the pre-blow-up chart).  edge is the outer coordinate
    value of the defining-function direction (r, rho or u range (0, edge]).
    pole_margin excludes the coordinate-singular polar axes, and
    trunc_fraction fixes where sigma blends to 1 near the chart edge.
    """

    kind: str
    n: int
    f: Optional[int] = None
    edge: float = 1.0
    pole_margin: float = 1e-3
    trunc_fraction: float = 0.2
    h_u: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    h_u_name: str = "euclidean"
    g_flat: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("dimension must be >= 2")
        if self.kind == INTERMEDIATE_CUSP:
            if self.f is None or not (1 <= self.f <= self.n - 2):
                raise ValueError("intermediate cusp needs rank 1 <= f <= n-2")
        elif self.kind == MAXIMAL_CUSP:
            object.__setattr__(self, "f", self.n - 1)
        elif self.kind == UPPER_HALF_SPACE:
            if self.f is None or not (1 <= self.f <= self.n - 1):
                raise ValueError("upper-half-space chart needs rank 1 <= f <= n-1")
        if self.edge <= 0:
            raise ValueError("edge must be positive")
        if self.kind == COLLAR and self.h_u is None:
            object.__setattr__(self, "h_u", H_U_FAMILIES[self.h_u_name])
        if self.kind == COLLAR and self.h_u_name == "round_sphere" and self.edge >= 2:
            raise ValueError("round-sphere collar degenerates at rho = 2")

    # -- constructors ------------------------------------------------------

    @classmethod
    def intermediate_cusp(cls, n: int, f: int, **kw) -> "Chart":
        return cls(INTERMEDIATE_CUSP, n, f=f, **kw)

    @classmethod
    def maximal_cusp(cls, n: int, **kw) -> "Chart":
        return cls(MAXIMAL_CUSP, n, f=n - 1, **kw)

    @classmethod
    def collar(cls, n: int, h_u: str | Callable = "euclidean", **kw) -> "Chart":
        if callable(h_u):
            return cls(COLLAR, n, h_u=h_u, h_u_name="custom", **kw)
        return cls(COLLAR, n, h_u=H_U_FAMILIES[h_u], h_u_name=h_u, **kw)

    @classmethod
    def upper_half_space(cls, n: int, f: int, **kw) -> "Chart":
        return cls(UPPER_HALF_SPACE, n, f=f, **kw)

    # -- structure ---------------------------------------------------------

    @property
    def b(self) -> int:
        """Transverse sphere dimension n - 1 - f (cusp kinds only)."""
        if self.f is None:
            raise AttributeError("b is defined only for cusp-type charts")
        return self.n - 1 - self.f

    @property
    def coordinate_names(self) -> tuple[str, ...]:
        if self.kind == INTERMEDIATE_CUSP:
            sph = tuple(f"theta_{a}" for a in range(1, self.b))
            return ("r", "theta0") + sph + tuple(f"w{j}" for j in range(1, self.f + 1))
        if self.kind == MAXIMAL_CUSP:
            return ("r",) + tuple(f"w{j}" for j in range(1, self.n))
        if self.kind == COLLAR:
            return ("rho",) + tuple(f"y{j}" for j in range(1, self.n))
        return ("u",) + tuple(f"v{j}" for j in range(1, self.b + 1)) + tuple(
            f"z{j}" for j in range(1, self.f + 1)
        )

    def coordinate_ranges(self) -> list[tuple[float, float]]:
        """Open/closed bounds actually enforced by validate_point."""
        big = math.inf
        m = self.pole_margin
        if self.kind == INTERMEDIATE_CUSP:
            rng = [(0.0, self.edge), (m, math.pi / 2 - m)]
            rng += [(m, math.pi - m)] * max(self.b - 2, 0)
            if self.b >= 2:
                rng += [(-big, big)]  # azimuthal angle of the transverse sphere
            rng += [(-big, big)] * self.f
            return rng
        if self.kind == MAXIMAL_CUSP:
            return [(0.0, self.edge)] + [(-big, big)] * (self.n - 1)
        if self.kind == COLLAR:
            rng = [(0.0, self.edge)]
            if self.h_u_name == "round_sphere":
                rng += [(m, math.pi - m)] * (self.n - 2) + [(-big, big)]
            else:
                rng += [(-big, big)] * (self.n - 1)
            return rng
        return [(0.0, self.edge)] + [(-big, big)] * (self.n - 1)

    def validate_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise ChartDomainError(
                f"point has {p.shape} coordinates, chart expects ({self.n},)"
            )
        if not np.all(np.isfinite(p)):
            raise ChartDomainError("non-finite coordinate")
        for x, (lo, hi), name in zip(p, self.coordinate_ranges(), self.coordinate_names):
            if x <= lo and lo == 0.0:
                raise ChartDomainError(f"degenerate point: {name} = {x} <= 0")
            if not (lo <= x <= hi):
                raise ChartDomainError(
                    f"{name} = {x} outside allowed range [{lo}, {hi}]"
                )
        return p

    def contains(self, p) -> bool:
        try:
            self.validate_point(p)
            return True
        except ChartDomainError:
            return False

    # -- metric data -------------------------------------------------------

    def metric_at(self, p) -> np.ndarray:
        """Exact closed-form metric components at p (symmetric positive definite)."""
        p = self.validate_point(p)
        n, out = self.n, np.zeros((self.n, self.n))
        if self.kind == INTERMEDIATE_CUSP:
            r, th = p[0], p[1]
            c2 = math.cos(th) ** 2
            out[0, 0] = 1.0 / (r * r * c2)
            out[1, 1] = 1.0 / c2
            if self.b >= 2:
                ang = p[2 : 1 + self.b]
                out[2 : 1 + self.b, 2 : 1 + self.b] = (
                    math.sin(th) ** 2 / c2
                ) * round_sphere_metric(ang)
            w0 = 1 + self.b
            out[w0:, w0:] = (r * r / c2) * np.eye(self.f)
            return out
        if self.kind == MAXIMAL_CUSP:
            r = p[0]
            gN = self.g_flat if self.g_flat is not None else np.eye(n - 1)
            out[0, 0] = 1.0 / (r * r)
            out[1:, 1:] = r * r * gN
            return out
        if self.kind == COLLAR:
            rho = p[0]
            out[0, 0] = 1.0
            out[1:, 1:] = self.h_u(rho, p[1:])
            return out / (rho * rho)
        u, v = p[0], p[1 : 1 + self.b]
        s2 = u * u + float(v @ v)
        out[: 1 + self.b, : 1 + self.b] = np.eye(1 + self.b)
        out[1 + self.b :, 1 + self.b :] = s2 * s2 * np.eye(self.f)
        return out / (u * u)

    def volume_density_at(self, p) -> float:
        """sqrt(det h) from the closed-form determinant of each family."""
        p = self.validate_point(p)
        n = self.n
        if self.kind == INTERMEDIATE_CUSP:
            r, th = p[0], p[1]
            dens = (
                r ** (self.f - 1)
                * math.sin(th) ** (self.b - 1)
                / math.cos(th) ** n
            )
            if self.b >= 2:
                dens *= math.sqrt(_round_sphere_det(p[2 : 1 + self.b]))
            return dens
        if self.kind == MAXIMAL_CUSP:
            gN = self.g_flat if self.g_flat is not None else np.eye(n - 1)
            return p[0] ** (n - 2) * math.sqrt(np.linalg.det(gN))
        if self.kind == COLLAR:
            rho = p[0]
            return math.sqrt(np.linalg.det(self.h_u(rho, p[1:]))) / rho ** n
        u, v = p[0], p[1 : 1 + self.b]
        return (u * u + float(v @ v)) ** self.f / u ** n

    def sigma_at(self, p) -> float:
        """Total boundary defining function, smoothly truncated to 1 toward
        the chart edge and deep interior."""
        p = self.validate_point(p)
        if self.kind == INTERMEDIATE_CUSP:
            return truncate_bdf(p[0], self.edge, self.trunc_fraction) * math.cos(p[1])
        if self.kind == MAXIMAL_CUSP:
            return truncate_bdf(p[0], self.edge, self.trunc_fraction)
        if self.kind == COLLAR:
            return truncate_bdf(p[0], self.edge, self.trunc_fraction)
        u = p[0]  # u = r * rho descends to the total defining function here
        return truncate_bdf(u, self.edge, self.trunc_fraction)

    def in_exhaustion(self, p, eps: float) -> bool:
        """Membership in the superlevel exhaustion domain {sigma >= eps}."""
        if eps <= 0:
            raise ValueError("exhaustion parameter eps must be positive")
        return self.sigma_at(p) >= eps

    def sigma_mu_at(self, p, mu0: float, mu_end: float) -> float:
        """Multi-weight sigma^mu restricted to this chart: rho^mu0 * r^mu_end."""
        p = self.validate_point(p)
        if self.kind == INTERMEDIATE_CUSP:
            return math.cos(p[1]) ** mu0 * p[0] ** mu_end
        if self.kind == MAXIMAL_CUSP:
            return p[0] ** mu_end
        if self.kind == COLLAR:
            return p[0] ** mu0
        raise NotImplementedError("weighted norms use the blown-up charts")


# -- Schauder rescaling maps ------------------------------------------------

CUSP_NEAR_AXIS = "cusp_near_axis"
CUSP_OFF_AXIS = "cusp_off_axis"
COLLAR_CASE = "collar"


@dataclass(frozen=True)
class RescalingCase:
    """One family of boundary rescalings of the exhaustion domain.

    v0 holds the transverse part of the base boundary point (eps, v0, z0);
    the z0 block never enters the pulled-back metric.  The near-axis case
    requires |v0| <= C * eps, the off-axis case eps < |v0| < 1.
    """

    case: str
    n: int
    eps: float
    v0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    f: Optional[int] = None
    C: float = 1.0
    h_u: Callable[[float, np.ndarray], np.ndarray] = euclidean_collar_family

    def __post_init__(self):
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))
        if self.eps <= 0:
            raise RescalingCaseError("eps must be positive")
        r = float(np.linalg.norm(self.v0))
        if self.case == CUSP_NEAR_AXIS:
            self._need_rank()
            if r > self.C * self.eps:
                raise RescalingCaseError(
                    f"near-axis case needs |v0| <= C*eps, got |v0|={r}, C*eps={self.C * self.eps}"
                )
        elif self.case == CUSP_OFF_AXIS:
            self._need_rank()
            if not (self.eps < r < 1.0):
                raise RescalingCaseError(
                    f"off-axis case needs eps < |v0| < 1, got |v0|={r}, eps={self.eps}"
                )
        elif self.case != COLLAR_CASE:
            raise RescalingCaseError(f"unknown rescaling case {self.case!r}")

    def _need_rank(self):
        if self.f is None or not (1 <= self.f <= self.n - 1):
            raise RescalingCaseError("cusp rescaling needs a rank 1 <= f <= n-1")
        if len(self.v0) != self.n - 1 - self.f:
            raise RescalingCaseError(
                f"v0 must have n-1-f = {self.n - 1 - self.f} components"
            )


def in_half_ball(q) -> bool:
    q = np.asarray(q, dtype=float)
    return q[0] >= 0.0 and float(q @ q) < 1.0


def rescaled_metric_at(case: RescalingCase, q) -> np.ndarray:
    """Pullback of the hyperbolic metric under the boundary rescaling map,
    evaluated at q = (s, p, q) in the reference half-ball B+."""
    q = np.asarray(q, dtype=float)
    if q.shape != (case.n,):
        raise ChartDomainError(f"reference point needs {case.n} coordinates")
    if not in_half_ball(q):
        raise ChartDomainError("reference point outside the unit half-ball B+")
    s = q[0]
    e2s = math.exp(2.0 * s)
    out = np.zeros((case.n, case.n))
    out[0, 0] = 1.0
    if case.case == COLLAR_CASE:
        pvec = q[1:]
        out[1:, 1:] = math.exp(-2.0 * s) * case.h_u(
            case.eps * math.exp(s), case.v0 + case.eps * pvec
        )
        return out
    bdim = case.n - 1 - case.f
    pvec = q[1 : 1 + bdim]
    shifted = case.v0 / case.eps + pvec
    coeff = math.exp(-2.0 * s) * (e2s + float(shifted @ shifted)) ** 2
    if case.case == CUSP_OFF_AXIS:
        coeff /= (1.0 + float(case.v0 @ case.v0) / case.eps ** 2) ** 2
    out[1 : 1 + bdim, 1 : 1 + bdim] = math.exp(-2.0 * s) * np.eye(bdim)
    out[1 + bdim :, 1 + bdim :] = coeff * np.eye(case.f)
    return out


# -- text configuration ------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value configuration lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def chart_from_config(text: str) -> Chart:
    """Build a chart from a structured text configuration.

    Recognised keys: kind, n, f, edge (aliases r_max / rho_max / u_max),
    pole_margin, trunc_fraction, h_u.
    """
    cfg = parse_config_text(text)
    try:
        kind = cfg["kind"]
        n = int(cfg["n"])
    except KeyError as exc:
        raise ValueError(f"chart config missing key {exc}") from exc
    kw = {}
    for key in ("edge", "r_max", "rho_max", "u_max"):
        if key in cfg:
            kw["edge"] = float(cfg[key])
    if "pole_margin" in cfg:
        kw["pole_margin"] = float(cfg["pole_margin"])
    if "trunc_fraction" in cfg:
        kw["trunc_fraction"] = float(cfg["trunc_fraction"])
    if kind == INTERMEDIATE_CUSP:
        return Chart.intermediate_cusp(n, int(cfg["f"]), **kw)
    if kind == MAXIMAL_CUSP:
        return Chart.maximal_cusp(n, **kw)
    if kind == COLLAR:
        return Chart.collar(n, h_u=cfg.get("h_u", "euclidean"), **kw)
    if kind == UPPER_HALF_SPACE:
        return Chart.upper_half_space(n, int(cfg["f"]), **kw)
    raise ValueError(f"unknown chart kind {kind!r}")
