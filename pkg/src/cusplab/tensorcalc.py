"""Finite-difference tensor calculus on chart metrics.

Everything is evaluated pointwise from metric/tensor field callables by
second-order central differences.  Steps are scaled per coordinate by the
local metric diagonal, so stencils shrink toward degenerate chart
boundaries and accuracy is uniform in the geometric (unit-frame) sense.

Sign conventions, fixed once and used everywhere:
  * Laplacian is the nonnegative rough Laplacian, Delta = nabla* nabla,
    i.e. the coordinate divergence form with a leading minus sign;
  * divergence of a symmetric 2-tensor is delta t = -tr_12 (nabla t), and
    delta* (the symmetrized covariant derivative) is its formal adjoint;
  * the lowered curvature array is riem[i,j,k,l] = <R(e_i,e_j)e_k, e_l>,
    which on a hyperbolic metric equals -(g_jk g_il - g_ik g_jl).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .charts import Chart, ChartDomainError

DEFAULT_STEP = 1e-3


class StencilError(ChartDomainError):
    """Finite-difference stencil leaves the chart's coordinate ranges."""


@dataclass(frozen=True)
class MetricField:
    """A map from chart points to symmetric positive-definite matrices."""

    chart: Chart
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, p) -> np.ndarray:
        return self.eval(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class SymTensorField:
    """A map from chart points to symmetric 2-tensor components."""

    chart: Chart
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, p) -> np.ndarray:
        return self.eval(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class Tensor3Field:
    """A map from chart points to rank-3 component arrays."""

    chart: Chart
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, p) -> np.ndarray:
        return self.eval(np.asarray(p, dtype=float))


def chart_metric(chart: Chart, label: str = "h") -> MetricField:
    """The chart's own closed-form model metric as a field."""
    return MetricField(chart, chart.metric_at, label)


def constant_metric(chart: Chart, mat: np.ndarray, label: str = "") -> MetricField:
    mat = np.asarray(mat, dtype=float)
    return MetricField(chart, lambda p: mat.copy(), label)


def coordinate_steps(g: MetricField, p: np.ndarray, step: float) -> np.ndarray:
    """Per-coordinate steps step / sqrt(g_ii(p)); checks ~double-stencil room."""
    gp = g(p)
    diag = np.diag(gp)
    if np.any(diag <= 0):
        raise StencilError(
            f"metric field {g.label!r} has a nonpositive diagonal at {p}"
        )
    h = step / np.sqrt(diag)
    ranges = g.chart.coordinate_ranges()
    for i, (lo, hi) in enumerate(ranges):
        if p[i] - 2.2 * h[i] <= lo or p[i] + 2.2 * h[i] >= hi:
            raise StencilError(
                f"stencil around coordinate {i} (value {p[i]}, step {h[i]}) "
                f"leaves the range ({lo}, {hi}); reduce step or move inward"
            )
    return h


def _partials(fn, p: np.ndarray, h: np.ndarray):
    """Central differences of an array-valued function along every axis."""
    out = []
    for i in range(len(p)):
        pp, pm = p.copy(), p.copy()
        pp[i] += h[i]
        pm[i] -= h[i]
        out.append((np.asarray(fn(pp)) - np.asarray(fn(pm))) / (2.0 * h[i]))
    return np.stack(out)


# -- connection and curvature -------------------------------------------------


def christoffels_at(g: MetricField, p, step: float = DEFAULT_STEP) -> np.ndarray:
    """Christoffel symbols Gamma[k, i, j] = Gamma^k_ij of g at p."""
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)
    g0 = g(p)
    ginv = np.linalg.inv(g0)
    dg = _partials(g, p, h)  # dg[a, b, c] = d_a g_bc
    t = dg + dg.transpose(1, 0, 2) - np.einsum("lij->ijl", dg)
    return 0.5 * np.einsum("kl,ijl->kij", ginv, t)


def _dgamma(g: MetricField, p: np.ndarray, h: np.ndarray, step: float) -> np.ndarray:
    """dG[a, k, i, j] = d_a Gamma^k_ij by differencing whole Christoffel arrays."""
    out = []
    for a in range(len(p)):
        pp, pm = p.copy(), p.copy()
        pp[a] += h[a]
        pm[a] -= h[a]
        out.append(
            (christoffels_at(g, pp, step) - christoffels_at(g, pm, step))
            / (2.0 * h[a])
        )
    return np.stack(out)


def ricci_at(g: MetricField, p, step: float = DEFAULT_STEP) -> np.ndarray:
    """Ricci tensor of g at p via finite differences of the Christoffels."""
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)
    gam = christoffels_at(g, p, step)
    dgam = _dgamma(g, p, h, step)
    ric = (
        np.einsum("kkij->ij", dgam)
        - np.einsum("ikkj->ij", dgam)
        + np.einsum("kkl,lij->ij", gam, gam)
        - np.einsum("kil,lkj->ij", gam, gam)
    )
    return 0.5 * (ric + ric.T)


def riemann_at(g: MetricField, p, step: float = DEFAULT_STEP) -> np.ndarray:
    """Lowered curvature riem[i,j,k,l] = <R(e_i, e_j) e_k, e_l>.

    On a hyperbolic metric this equals -(g_jk g_il - g_ik g_jl).
    """
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)
    gam = christoffels_at(g, p, step)
    dgam = _dgamma(g, p, h, step)
    # R^l_kij = d_i Gamma^l_jk - d_j Gamma^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    up = (
        np.einsum("iljk->lkij", dgam)
        - np.einsum("jlik->lkij", dgam)
        + np.einsum("lim,mjk->lkij", gam, gam)
        - np.einsum("ljm,mik->lkij", gam, gam)
    )
    return np.einsum("lm,mkij->ijkl", g(p), up)


def difference_tensor_at(
    g: MetricField, h: MetricField, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Difference tensor A[k, i, j] between the connections of h and g,
    A = Gamma(h) - Gamma(g), from covariant derivatives of e = g - h."""
    p = np.asarray(p, dtype=float)
    hs = coordinate_steps(h, p, step)
    gam_h = christoffels_at(h, p, step)

    def e_field(q):
        return g(q) - h(q)

    de = _partials(e_field, p, hs)
    e0 = e_field(p)
    nab = (
        de
        - np.einsum("mki,mj->kij", gam_h, e0)
        - np.einsum("mkj,im->kij", gam_h, e0)
    )  # nab[k, i, j] = nabla^h_k e_ij
    ginv = np.linalg.inv(g(p))
    t = nab + nab.transpose(1, 0, 2) - np.einsum("mij->ijm", nab)
    return -0.5 * np.einsum("pm,ijm->pij", ginv, t)


def difference_tensor_field(
    g: MetricField, h: MetricField, step: float = DEFAULT_STEP
) -> Tensor3Field:
    """The connection-difference tensor as an evaluable field."""
    return Tensor3Field(
        g.chart, lambda p: difference_tensor_at(g, h, p, step), "A"
    )


# -- Laplacians ---------------------------------------------------------------


def laplacian_scalar_at(
    g: MetricField, u: Callable[[np.ndarray], float], p, step: float = DEFAULT_STEP
) -> float:
    """Nonnegative Laplace-Beltrami operator on functions in divergence form."""
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)

    def flux(q):
        gq = g(q)
        w = np.sqrt(np.linalg.det(gq))
        du = np.array(
            [
                (u(_shift(q, j, h[j])) - u(_shift(q, j, -h[j]))) / (2.0 * h[j])
                for j in range(len(q))
            ]
        )
        return w * (np.linalg.inv(gq) @ du)

    w0 = np.sqrt(np.linalg.det(g(p)))
    div = 0.0
    for i in range(len(p)):
        fp = flux(_shift(p, i, h[i]))[i]
        fm = flux(_shift(p, i, -h[i]))[i]
        div += (fp - fm) / (2.0 * h[i])
    return -div / w0


def _shift(p: np.ndarray, i: int, d: float) -> np.ndarray:
    q = p.copy()
    q[i] += d
    return q


def _nabla_sym(g: MetricField, t, q: np.ndarray, step: float) -> np.ndarray:
    """nab[k, i, j] = nabla_k t_ij at q."""
    h = coordinate_steps(g, q, step)
    gam = christoffels_at(g, q, step)
    dt = _partials(t, q, h)
    t0 = np.asarray(t(q))
    return (
        dt
        - np.einsum("mki,mj->kij", gam, t0)
        - np.einsum("mkj,im->kij", gam, t0)
    )


def rough_laplacian_tensor_at(
    g: MetricField, u: SymTensorField, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Componentwise nabla* nabla on symmetric 2-tensors."""
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)
    gam = christoffels_at(g, p, step)
    nab0 = _nabla_sym(g, u, p, step)
    dnab = np.stack(
        [
            (
                _nabla_sym(g, u, _shift(p, a, h[a]), step)
                - _nabla_sym(g, u, _shift(p, a, -h[a]), step)
            )
            / (2.0 * h[a])
            for a in range(len(p))
        ]
    )  # dnab[a, k, i, j] = d_a (nabla_k u_ij)
    nab2 = (
        dnab
        - np.einsum("mlk,mij->lkij", gam, nab0)
        - np.einsum("mli,kmj->lkij", gam, nab0)
        - np.einsum("mlj,kim->lkij", gam, nab0)
    )
    out = -np.einsum("lk,lkij->ij", np.linalg.inv(g(p)), nab2)
    return 0.5 * (out + out.T)


def lichnerowicz_at(
    h: MetricField, u: SymTensorField, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Lichnerowicz Laplacian nabla*nabla u + 2 Rc-action - 2 Rm-action,
    with the curvature terms from finite-difference Ricci/Riemann of h."""
    p = np.asarray(p, dtype=float)
    h0 = h(p)
    hinv = np.linalg.inv(h0)
    u0 = np.asarray(u(p))
    lap = rough_laplacian_tensor_at(h, u, p, step)
    ric = ricci_at(h, p, step)
    rc_u = 0.5 * (ric @ hinv @ u0 + u0 @ hinv @ ric)
    riem = riemann_at(h, p, step)
    u_up = hinv @ u0 @ hinv
    rm_u = np.einsum("kijl,kl->ij", riem, u_up)
    out = lap + 2.0 * rc_u - 2.0 * rm_u
    return 0.5 * (out + out.T)


def lichnerowicz_hyperbolic_at(
    h: MetricField, u: SymTensorField, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Closed form on a hyperbolic background: nabla*nabla u - 2n u + 2 (tr u) h."""
    p = np.asarray(p, dtype=float)
    n = h.chart.n
    h0 = h(p)
    u0 = np.asarray(u(p))
    tr = float(np.trace(np.linalg.inv(h0) @ u0))
    return rough_laplacian_tensor_at(h, u, p, step) - 2.0 * n * u0 + 2.0 * tr * h0


# -- Bianchi machinery and the gauge-adjusted operator ------------------------


def g_trace_reversal(g0: np.ndarray, t0: np.ndarray) -> np.ndarray:
    """G_g t = t - (tr_g t / 2) g, the algebraic trace reversal."""
    tr = float(np.trace(np.linalg.inv(g0) @ t0))
    return t0 - 0.5 * tr * g0


def divergence_at(
    g: MetricField, t, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """delta_g t = -tr_12 nabla t, a covector."""
    p = np.asarray(p, dtype=float)
    nab = _nabla_sym(g, t, p, step)
    return -np.einsum("ki,kij->j", np.linalg.inv(g(p)), nab)


def deltastar_at(
    g: MetricField, omega, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """delta*_g omega = symmetrized covariant derivative of a 1-form."""
    p = np.asarray(p, dtype=float)
    h = coordinate_steps(g, p, step)
    gam = christoffels_at(g, p, step)
    dom = _partials(omega, p, h)
    nab = dom - np.einsum("mij,m->ij", gam, np.asarray(omega(p)))
    return 0.5 * (nab + nab.T)


def bianchi_ops_at(g: MetricField, t, p, step: float = DEFAULT_STEP):
    """Divergence, trace reversal and the symmetrized-gradient closure of the
    Bianchi chain: returns (delta_g t, G_g t, delta*_g(delta_g(G_g t)))."""
    p = np.asarray(p, dtype=float)

    def g_rev(q):
        return g_trace_reversal(g(q), np.asarray(t(q)))

    div = divergence_at(g, t, p, step)
    grev = g_rev(p)
    dstar = deltastar_at(g, lambda q: divergence_at(g, g_rev, q, step), p, step)
    return div, grev, dstar


def _gauge_one_form(g: MetricField, t, step: float):
    """The DeTurck-type 1-form q -> g t^{-1} delta_g(G_g t) as a field."""

    def g_rev(q):
        return g_trace_reversal(g(q), np.asarray(t(q)))

    def omega(q):
        v = divergence_at(g, g_rev, q, step)
        return g(q) @ np.linalg.inv(np.asarray(t(q))) @ v

    return omega


def Q_gauge_at(g: MetricField, t, p, step: float = DEFAULT_STEP) -> np.ndarray:
    """Only the gauge term delta*_g(g t^{-1} delta_g(G_g t)) of Q."""
    p = np.asarray(p, dtype=float)
    return deltastar_at(g, _gauge_one_form(g, t, step), p, step)


def Q_at(g: MetricField, t: MetricField, p, step: float = DEFAULT_STEP) -> np.ndarray:
    """Gauge-adjusted Einstein operator
    Q(g, t) = Rc(g) + (n-1) g - delta*_g(g t^{-1}(delta_g(G_g t)))."""
    p = np.asarray(p, dtype=float)
    n = g.chart.n
    return ricci_at(g, p, step) + (n - 1.0) * g(p) - Q_gauge_at(g, t, p, step)


def trace_split(h0: np.ndarray, r0: np.ndarray, n: int):
    """r = u h + r_0 with u = tr_h(r)/n and r_0 trace-free."""
    u = float(np.trace(np.linalg.inv(h0) @ r0)) / n
    return u, r0 - u * h0


def L_at(
    h: MetricField,
    r: SymTensorField,
    p,
    step: float = DEFAULT_STEP,
    constants: tuple[float, float] | None = None,
) -> np.ndarray:
    """Linearized gauge-adjusted operator at a hyperbolic background:
    L r = ((Delta + K1)(u h) + (Delta + K2) r_0) / 2 on the trace split
    r = u h + r_0, with (K1, K2) = (2(n-1), -2) by default."""
    p = np.asarray(p, dtype=float)
    n = h.chart.n
    k1, k2 = constants if constants is not None else (2.0 * (n - 1), -2.0)

    def u_scalar(q):
        return float(np.trace(np.linalg.inv(h(q)) @ np.asarray(r(q)))) / n

    def uh(q):
        return u_scalar(q) * h(q)

    def r0(q):
        return np.asarray(r(q)) - u_scalar(q) * h(q)

    uh_f = SymTensorField(h.chart, uh, "uh")
    r0_f = SymTensorField(h.chart, r0, "r0")
    block1 = rough_laplacian_tensor_at(h, uh_f, p, step) + k1 * uh(p)
    block2 = rough_laplacian_tensor_at(h, r0_f, p, step) + k2 * r0(p)
    return 0.5 * (block1 + block2)


def deturck_field_at(
    g: MetricField, tau: MetricField, p, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Gauge-breaking covector omega = g tau^{-1} delta_g(G_g tau) at p."""
    p = np.asarray(p, dtype=float)
    return np.asarray(_gauge_one_form(g, tau, step)(p))


# -- norms --------------------------------------------------------------------


def tensor_norm(g0: np.ndarray, t0: np.ndarray) -> float:
    """Pointwise norm |t|_g of a symmetric 2-tensor."""
    ginv = np.linalg.inv(g0)
    return float(np.sqrt(abs(np.einsum("ik,jl,ij,kl->", ginv, ginv, t0, t0))))


def covector_norm(g0: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(abs(v @ np.linalg.inv(g0) @ v)))
