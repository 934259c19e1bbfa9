"""Discrete Dirichlet problems on truncated chart grids.

The reduced operator Delta + K is assembled in flux (divergence) form on
structured 2D grids over the (r, theta0), (rho, y) or (r,) coordinates; for
data independent of the remaining angles the reduction is exact because the
transverse Laplacian blocks annihilate such functions.  Multiplying through
by the volume density gives a symmetric matrix, so conjugate gradients
apply whenever the weighted form is positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .charts import Chart, INTERMEDIATE_CUSP, MAXIMAL_CUSP, COLLAR, smooth_bump
from .weights import (
    WeightVector,
    cusp_margin,
    h0_margin,
    maximal_margin,
)


class NonConvergence(RuntimeError):
    """Iterative solve exceeded its cap or left a large residual."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


class IndefiniteOperator(NonConvergence):
    """The symmetrized operator is not positive definite."""


class SupportViolation(ValueError):
    """A nominally compactly supported field touches the grid boundary."""


@dataclass(frozen=True)
class Grid2D:
    """Structured grid over the two active coordinates of a truncated chart.

    axes holds the node coordinates per active axis (the maximal-rank cusp
    uses a single axis).  Every node satisfies sigma >= eps by construction;
    all outer sides carry Dirichlet data.
    """

    chart: Chart
    axis_names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    eps: float

    def __post_init__(self):
        for ax in self.axes:
            if len(ax) < 8:
                raise ValueError("grids need at least 8 nodes per axis")
            d = np.diff(ax)
            if not np.allclose(d, d[0], rtol=1e-12, atol=0):
                raise ValueError("grid spacing must be uniform per axis")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        sig = self.sigma()
        if sig.min() < self.eps - 1e-12:
            raise ValueError("grid leaves the exhaustion domain sigma >= eps")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    def meshes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.shape, dtype=bool)
        for d in range(self.ndim):
            idx_lo = [slice(None)] * self.ndim
            idx_hi = [slice(None)] * self.ndim
            idx_lo[d] = 0
            idx_hi[d] = -1
            m[tuple(idx_lo)] = False
            m[tuple(idx_hi)] = False
        return m

    # -- chart-geometry samples on nodes ---------------------------------

    def _uv(self):
        if self.ndim == 1:
            return (self.axes[0],)
        return self.meshes()

    def sigma(self) -> np.ndarray:
        """Raw defining-function product on nodes (no edge truncation: the
        grid sits inside the tubular neighbourhood)."""
        if self.chart.kind == INTERMEDIATE_CUSP:
            r, th = self.meshes()
            return r * np.cos(th)
        if self.chart.kind == MAXIMAL_CUSP:
            return self.axes[0].copy()
        r = self.meshes()[0]
        return r.copy()

    def sigma_mu(self, w: WeightVector, end_index: int = 0) -> np.ndarray:
        """Multi-weight sigma^mu on nodes."""
        if self.chart.kind == INTERMEDIATE_CUSP:
            r, th = self.meshes()
            return np.cos(th) ** w.mu0 * r ** w.mus[end_index]
        if self.chart.kind == MAXIMAL_CUSP:
            return self.axes[0] ** w.mus[end_index]
        rho = self.meshes()[0]
        return rho ** w.mu0

    def volume_weight(self) -> np.ndarray:
        """Reduced volume density W on nodes (transverse factors dropped)."""
        return self._coefficients()[0]

    def _coefficients(self):
        """(W, [A_1, A_2, ...]) with W the reduced volume density and A_d the
        flux coefficient W * h^{dd} along each active axis."""
        kind = self.chart.kind
        n = self.chart.n
        if kind == INTERMEDIATE_CUSP:
            f, b = self.chart.f, self.chart.b
            r, th = self.meshes()
            W = r ** (f - 1) * np.sin(th) ** (b - 1) / np.cos(th) ** n
            c2 = np.cos(th) ** 2
            return W, [W * r * r * c2, W * c2]
        if kind == COLLAR:
            rho = self.meshes()[0]
            W = rho ** (-float(n))
            A = W * rho * rho
            return W, [A, A.copy()]
        if kind == MAXIMAL_CUSP:
            r = self.axes[0]
            W = r ** (n - 2.0)
            return W, [W * r * r]
        raise ValueError(f"no reduced operator for chart kind {kind!r}")

    def _coefficients_midpoint(self, axis: int) -> np.ndarray:
        """Flux coefficient A_axis evaluated at staggered midpoints."""
        mid_axes = list(self.axes)
        a = self.axes[axis]
        mid_axes[axis] = 0.5 * (a[1:] + a[:-1])
        sub = Grid2D.__new__(Grid2D)  # bypass validation for the staggered grid
        object.__setattr__(sub, "chart", self.chart)
        object.__setattr__(sub, "axis_names", self.axis_names)
        object.__setattr__(sub, "axes", tuple(np.asarray(ax) for ax in mid_axes))
        object.__setattr__(sub, "eps", self.eps)
        return sub._coefficients()[1][axis]


def cusp_grid(
    chart: Chart,
    eps: float,
    nodes: int = 48,
    r_max: Optional[float] = None,
    theta_min: float = 0.2,
) -> Grid2D:
    """Inscribed rectangle of the exhaustion domain on a cusp chart:
    r in [sqrt(eps), r_max], theta0 in [theta_min, arccos(sqrt(eps))], so the
    corner node realizes sigma = eps exactly."""
    if chart.kind != INTERMEDIATE_CUSP:
        raise ValueError("cusp_grid needs an intermediate-rank cusp chart")
    r_max = chart.edge if r_max is None else r_max
    r_lo = math.sqrt(eps)
    th_hi = math.acos(math.sqrt(eps))
    if not (r_lo < r_max and theta_min < th_hi):
        raise ValueError(f"eps = {eps} leaves no room in the chart")
    return Grid2D(
        chart,
        ("r", "theta0"),
        (np.linspace(r_lo, r_max, nodes), np.linspace(theta_min, th_hi, nodes)),
        eps,
    )


def collar_grid(
    chart: Chart,
    eps: float,
    nodes: int = 48,
    rho_max: Optional[float] = None,
    y_range: tuple[float, float] = (-1.0, 1.0),
) -> Grid2D:
    if chart.kind != COLLAR:
        raise ValueError("collar_grid needs a collar chart")
    rho_max = chart.edge if rho_max is None else rho_max
    return Grid2D(
        chart,
        ("rho", "y"),
        (np.linspace(eps, rho_max, nodes), np.linspace(*y_range, nodes)),
        eps,
    )


def compact_patch_grid(
    chart: Chart,
    nodes: int,
    rho_range: tuple[float, float],
    y_range: tuple[float, float],
) -> Grid2D:
    """Compact patch well inside a collar chart, for quadrature tests."""
    return Grid2D(
        chart,
        ("rho", "y"),
        (np.linspace(*rho_range, nodes), np.linspace(*y_range, nodes)),
        rho_range[0],
    )


def maximal_grid(chart: Chart, eps: float, nodes: int = 64,
                 r_max: Optional[float] = None) -> Grid2D:
    if chart.kind != MAXIMAL_CUSP:
        raise ValueError("maximal_grid needs a maximal-rank cusp chart")
    r_max = chart.edge if r_max is None else r_max
    return Grid2D(chart, ("r",), (np.linspace(eps, r_max, nodes),), eps)


@dataclass
class DiscreteField:
    """Scalar (or component-stacked) values on the nodes of a grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[: self.grid.ndim] != self.grid.shape:
            raise ValueError("field shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def is_tensor(self) -> bool:
        return self.values.ndim > self.grid.ndim


def sample_field(grid: Grid2D, fn: Callable) -> DiscreteField:
    pts = grid._uv()
    return DiscreteField(grid, fn(*pts))


@dataclass
class SparseOperator:
    """Discrete Delta + K with Dirichlet rows eliminated.

    matrix is the symmetric weighted form L = -D^T C D + K diag(W) acting on
    interior unknowns; cross couples interior rows to boundary nodes; the
    pointwise operator is diag(1/W) (L u_int + cross u_bdy).
    """

    grid: Grid2D
    K: float
    matrix: sp.csr_matrix
    cross: sp.csr_matrix
    weight: np.ndarray
    interior: np.ndarray  # flat indices of interior nodes
    boundary: np.ndarray

    @property
    def pattern_symmetric(self) -> bool:
        d = (self.matrix - self.matrix.T).tocoo()
        return len(d.data) == 0 or float(np.abs(d.data).max()) < 1e-10

    @property
    def n_unknowns(self) -> int:
        return len(self.interior)

    def apply_to_values(self, values: np.ndarray) -> np.ndarray:
        """(Delta + K) applied to node values, returned on interior nodes."""
        v = values.reshape(-1)
        out = self.matrix @ v[self.interior] + self.cross @ v[self.boundary]
        return out / self.weight

    def smallest_eigenvalue(self, tol: float = 1e-4) -> float:
        """Cheap estimate of the smallest eigenvalue of the symmetric form."""
        k = self.matrix.shape[0]
        if k <= 400:
            return float(np.linalg.eigvalsh(self.matrix.toarray())[0])
        vals = spla.eigsh(
            self.matrix, k=1, which="SA", tol=tol, maxiter=5000,
            return_eigenvectors=False,
        )
        return float(vals[0])


def assemble(grid: Grid2D, K: float) -> SparseOperator:
    """Second-order flux-form discretization of Delta + K on the grid.

    The matrix built here is the weighted symmetric form: row i holds
    W_i ((Delta + K) u)_i, with midpoint flux coefficients, so applying it to
    a constant returns exactly K * W * const.
    """
    shape = grid.shape
    ntot = int(np.prod(shape))
    W, _ = grid._coefficients()
    Wf = np.asarray(W, dtype=float).reshape(-1)
    interior = grid.interior_mask().reshape(-1)

    rows, cols, vals = [], [], []
    diag = K * Wf.copy()

    strides = np.array([int(np.prod(shape[d + 1 :])) for d in range(grid.ndim)])
    for axis in range(grid.ndim):
        dx = grid.spacing[axis]
        Amid = np.asarray(grid._coefficients_midpoint(axis), dtype=float)
        # walk every grid edge along this axis
        it = np.ndindex(*[s - (1 if d == axis else 0) for d, s in enumerate(shape)])
        for idx in it:
            jdx = list(idx)
            jdx[axis] += 1
            i = int(np.dot(idx, strides))
            j = int(np.dot(jdx, strides))
            a = float(Amid[idx]) / (dx * dx)
            diag[i] += a
            diag[j] += a
            rows += [i, j]
            cols += [j, i]
            vals += [-a, -a]

    L_all = sp.coo_matrix((vals, (rows, cols)), shape=(ntot, ntot)).tocsr()
    L_all += sp.diags(diag)

    int_idx = np.flatnonzero(interior)
    bdy_idx = np.flatnonzero(~interior)
    L_int = L_all[int_idx][:, int_idx].tocsr()
    cross = L_all[int_idx][:, bdy_idx].tocsr()
    return SparseOperator(
        grid=grid,
        K=K,
        matrix=L_int,
        cross=cross,
        weight=Wf[int_idx],
        interior=int_idx,
        boundary=bdy_idx,
    )


def solve_dirichlet(
    op: SparseOperator,
    f: DiscreteField | np.ndarray,
    rtol: float = 1e-8,
    method: str = "auto",
    check_coercivity: Optional[bool] = None,
) -> DiscreteField:
    """Solve (Delta + K) u = f with zero Dirichlet data on all grid sides.

    method 'auto' uses a sparse direct factorization for moderate sizes and
    diagonally preconditioned conjugate gradients beyond that.  For K < 0
    the smallest eigenvalue of the symmetric form is estimated first and an
    IndefiniteOperator error raised when it is not positive.
    """
    fv = f.values if isinstance(f, DiscreteField) else np.asarray(f, dtype=float)
    fv = fv.reshape(-1)
    rhs = op.weight * fv[op.interior]

    if check_coercivity is None:
        check_coercivity = op.K < 0
    if check_coercivity:
        lam = op.smallest_eigenvalue()
        if lam <= 0:
            raise IndefiniteOperator(
                f"symmetrized operator has smallest eigenvalue {lam:.3e} <= 0; "
                "the discrete problem is not coercive", residual=math.nan
            )

    ndof = op.n_unknowns
    if method == "auto":
        method = "direct" if ndof <= 60_000 else "cg"
    if method == "direct":
        u_int = spla.spsolve(op.matrix.tocsc(), rhs)
    elif method == "cg":
        pre = sp.diags(1.0 / op.matrix.diagonal())
        cap = int(50 * math.sqrt(ndof)) + 10
        u_int, info = spla.cg(op.matrix, rhs, rtol=min(rtol, 1e-10), atol=0.0,
                              maxiter=cap, M=pre)
        if info != 0:
            res = float(np.linalg.norm(op.matrix @ u_int - rhs))
            raise NonConvergence(
                f"conjugate gradients hit the iteration cap {cap} "
                f"(residual {res:.3e})", residual=res)
    else:
        raise ValueError(f"unknown method {method!r}")

    full = np.zeros(int(np.prod(op.grid.shape)))
    full[op.interior] = u_int

    resid = op.apply_to_values(full) - fv[op.interior]
    fscale = float(np.abs(fv[op.interior]).max()) or 1.0
    rinf = float(np.abs(resid).max())
    if rinf > max(rtol * fscale, 1e-30):
        raise NonConvergence(
            f"residual {rinf:.3e} exceeds rtol * |f| = {rtol * fscale:.3e}",
            residual=rinf,
        )
    return DiscreteField(op.grid, full.reshape(op.grid.shape))


def weighted_sup_norm(u: DiscreteField, w: WeightVector, end_index: int = 0) -> float:
    """Weighted sup norm max |u| / sigma^mu over the grid nodes; tensor-mode
    fields are reduced to the pointwise metric norm of their components."""
    smu = u.grid.sigma_mu(w, end_index)
    if u.is_tensor:
        vals = _pointwise_tensor_norm(u)
    else:
        vals = np.abs(u.values)
    return float((vals / smu).max())


def _pointwise_tensor_norm(u: DiscreteField) -> np.ndarray:
    grid = u.grid
    if grid.chart.kind != COLLAR:
        raise NotImplementedError("tensor-mode norms are used on collar patches")
    rho = grid.meshes()[0]
    return rho ** 2 * np.sqrt(np.einsum("xyij,xyij->xy", u.values, u.values))


# -- exhaustion sweep ---------------------------------------------------------


def default_bump_recipe(w: WeightVector, end_index: int = 0,
                        box=((0.55, 0.85), (0.45, 1.0))):
    """sigma^mu times a smooth bump supported in a fixed coordinate box."""
    (r0, r1), (t0, t1) = box

    def recipe(r, th):
        br = np.vectorize(smooth_bump)((2 * r - (r0 + r1)) / (r1 - r0))
        bt = np.vectorize(smooth_bump)((2 * th - (t0 + t1)) / (t1 - t0))
        return np.cos(th) ** w.mu0 * r ** w.mus[end_index] * br * bt

    return recipe


@dataclass
class SweepRow:
    eps: float
    norm_u: float
    norm_f: float
    ratio: float
    mms_error: float
    shape: tuple[int, ...]
    error: Optional[str] = None


def exhaustion_sweep(
    chart: Chart,
    K: float,
    w: WeightVector,
    f_recipe: Callable,
    eps_list: Sequence[float],
    nodes: int = 48,
    theta_min: float = 0.2,
    mms_recipe: Optional[Callable] = None,
    on_error: str = "raise",
) -> list[SweepRow]:
    """Dirichlet solves over a shrinking family of truncation parameters.

    For each eps the fixed source recipe is sampled on the inscribed grid of
    {sigma >= eps}, the problem solved, and the weighted-norm ratio
    |u|_mu / |f|_mu recorded; uniform boundedness of this ratio is the
    quantity of interest.  A manufactured solution (same recipe by default)
    is pushed through the assembled operator to measure the solver error.

    Solver failures propagate per eps: with on_error='record' the row keeps
    the error message and the sweep continues, so partial tables survive.
    """
    if any(b >= a for a, b in zip(eps_list, list(eps_list)[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if on_error not in ("raise", "record"):
        raise ValueError("on_error must be 'raise' or 'record'")
    mms_recipe = mms_recipe or f_recipe
    rows = []
    for eps in eps_list:
        grid = cusp_grid(chart, eps, nodes=nodes, theta_min=theta_min)
        op = assemble(grid, K)
        f = sample_field(grid, f_recipe)
        try:
            u = solve_dirichlet(op, f)
            nu = weighted_sup_norm(u, w)
            nf = weighted_sup_norm(f, w)

            u_star = sample_field(grid, mms_recipe)
            rhs = np.zeros(grid.shape)
            rhs[grid.interior_mask()] = op.apply_to_values(u_star.values)
            u_sol = solve_dirichlet(op, DiscreteField(grid, rhs))
            scale = float(np.abs(u_star.values).max()) or 1.0
            mms = float(np.abs(u_sol.values - u_star.values).max()) / scale
        except NonConvergence as exc:
            if on_error == "raise":
                raise
            rows.append(SweepRow(eps, math.nan, math.nan, math.nan, math.nan,
                                 grid.shape, error=str(exc)))
            continue
        rows.append(SweepRow(eps, nu, nf, nu / nf, mms, grid.shape))
    return rows


def plateau_factor(rows: Sequence[SweepRow]) -> float:
    ratios = [r.ratio for r in rows if r.error is None]
    if not ratios:
        return math.nan
    return max(ratios) / min(ratios)


# -- barrier ratio check --------------------------------------------------------


@dataclass
class MaxPrincipleReport:
    min_ratio: float
    closed_form_delta: float
    tolerance: float
    passed: bool
    nodes_checked: int


def maximum_principle_check(
    grid: Grid2D,
    K: float,
    w: WeightVector,
    end_index: int = 0,
    sigma_core: Optional[float] = None,
    tol_constant: float = 50.0,
) -> MaxPrincipleReport:
    """Evaluate the discrete (Delta + K) sigma^mu / sigma^mu over interior
    nodes (optionally outside a compact core sigma > sigma_core) and compare
    its minimum against the closed-form margin."""
    smu = grid.sigma_mu(w, end_index)
    op = assemble(grid, K)
    ratio = op.apply_to_values(smu) / smu.reshape(-1)[op.interior]
    if sigma_core is not None:
        keep = grid.sigma().reshape(-1)[op.interior] <= sigma_core
        ratio = ratio[keep]
    spc = max(grid.spacing)
    if grid.chart.kind == INTERMEDIATE_CUSP:
        delta = cusp_margin(K, w.mus[end_index], w.mu0, grid.chart.f, w.n).delta
    elif grid.chart.kind == MAXIMAL_CUSP:
        delta = maximal_margin(K, w.mus[end_index], w.n).delta
    else:
        delta = h0_margin(K, w.mu0, w.n).delta
    tol = tol_constant * spc * spc
    min_ratio = float(ratio.min())
    return MaxPrincipleReport(
        min_ratio=min_ratio,
        closed_form_delta=delta,
        tolerance=tol,
        passed=min_ratio >= delta - tol,
        nodes_checked=int(ratio.size),
    )


# -- quadrature identities on a compact hyperbolic patch -----------------------


def _collar_christoffels(n: int, rho: np.ndarray) -> np.ndarray:
    """Closed-form Christoffels of (d rho^2 + |dy|^2) / rho^2 on node arrays;
    returned as gam[..., k, i, j]."""
    shp = rho.shape
    gam = np.zeros(shp + (n, n, n))
    inv = 1.0 / rho
    gam[..., 0, 0, 0] = -inv
    for a in range(1, n):
        gam[..., 0, a, a] = inv
        gam[..., a, 0, a] = -inv
        gam[..., a, a, 0] = -inv
    return gam


def _grid_partials(grid: Grid2D, comp: np.ndarray) -> list[np.ndarray]:
    """Central differences of node arrays along the two active axes."""
    out = []
    for axis in range(grid.ndim):
        out.append(np.gradient(comp, grid.spacing[axis], axis=axis, edge_order=2))
    return out


def _covariant_derivative(grid: Grid2D, u: np.ndarray) -> np.ndarray:
    """nabla_k u_ij on the collar patch; derivative index first."""
    n = grid.chart.n
    rho = grid.meshes()[0]
    gam = _collar_christoffels(n, rho)
    d_active = _grid_partials(grid, u)
    shp = u.shape[:-2]
    nab = np.zeros(shp + (n, n, n))
    nab[..., 0, :, :] = d_active[0]
    nab[..., 1, :, :] = d_active[1]
    nab -= np.einsum("...mki,...mj->...kij", gam, u)
    nab -= np.einsum("...mkj,...im->...kij", gam, u)
    return nab


def _trapezoid_weights(grid: Grid2D) -> np.ndarray:
    ws = []
    for ax, d in zip(grid.axes, grid.spacing):
        w = np.full(len(ax), d)
        w[0] = w[-1] = d / 2.0
        ws.append(w)
    return np.multiply.outer(*ws) if grid.ndim == 2 else ws[0]


def check_support_margin(grid: Grid2D, values: np.ndarray, margin: int = 3):
    """Raise SupportViolation unless the field vanishes within `margin`
    nodes of every grid side."""
    v = np.abs(values)
    while v.ndim > grid.ndim:
        v = v.max(axis=-1)
    for axis in range(grid.ndim):
        sl_lo = [slice(None)] * grid.ndim
        sl_hi = [slice(None)] * grid.ndim
        sl_lo[axis] = slice(0, margin)
        sl_hi[axis] = slice(-margin, None)
        if v[tuple(sl_lo)].max() > 0 or v[tuple(sl_hi)].max() > 0:
            raise SupportViolation(
                f"field support reaches within {margin} nodes of the boundary"
            )


@dataclass
class KoisoResult:
    """Both sides of the integration-by-parts identity and the improved
    lower bound slack for the tensor Laplacian."""

    lhs: float                 # |nabla u|^2
    rhs: float                 # |T|^2/2 + |div u|^2 - |tr u|^2 + n |u|^2
    gap: float
    grad_sq: float
    t_sq: float
    div_sq: float
    tr_sq: float
    u_sq: float
    pairing: float             # (u, (nabla*nabla + K) u)
    slack: float               # pairing - (n + K) |u|^2


def koiso_quadrature(grid: Grid2D, u: DiscreteField, K: float = -2.0,
                     support_margin: int = 3) -> KoisoResult:
    """Trapezoid quadrature of the tensor integration-by-parts identity on a
    compact hyperbolic collar patch.

    u holds symmetric 2-tensor components on the nodes (shape grid.shape +
    (n, n)), compactly supported away from the patch boundary so that no
    boundary terms arise.
    """
    if grid.chart.kind != COLLAR:
        raise ValueError("the quadrature patch must be a collar chart")
    n = grid.chart.n
    vals = u.values
    if vals.shape != grid.shape + (n, n):
        raise ValueError("tensor field must have shape grid.shape + (n, n)")
    check_support_margin(grid, vals, support_margin)

    rho = grid.meshes()[0]
    dv = rho ** (-float(n)) * _trapezoid_weights(grid)
    up2 = rho ** 2  # inverse metric is rho^2 * identity here

    nab = _covariant_derivative(grid, vals)
    grad_sq = float(np.sum(dv * up2 ** 3 * np.einsum("xykij,xykij->xy", nab, nab)))

    T = nab - np.einsum("...kij->...ikj", nab)  # T_ijk = nabla_k u_ij - nabla_i u_jk, slots (k,i,j)
    t_sq = float(np.sum(dv * up2 ** 3 * np.einsum("xykij,xykij->xy", T, T)))

    div = np.einsum("xy,xykkj->xyj", up2, nab)
    div_sq = float(np.sum(dv * up2 * np.einsum("xyj,xyj->xy", div, div)))

    tr = up2 * np.einsum("xyii->xy", vals)
    tr_sq = float(np.sum(dv * tr ** 2))

    u_sq = float(np.sum(dv * up2 ** 2 * np.einsum("xyij,xyij->xy", vals, vals)))

    lhs = grad_sq
    rhs = 0.5 * t_sq + div_sq - tr_sq + n * u_sq

    # second route: pair u against the discrete rough Laplacian plus K
    gam = _collar_christoffels(n, rho)
    d2 = np.stack(_grid_partials(grid, nab), axis=-4)  # (x, y, l(active), k, i, j)
    nab2 = np.zeros(grid.shape + (n, n, n, n))
    nab2[..., 0, :, :, :] = d2[..., 0, :, :, :]
    nab2[..., 1, :, :, :] = d2[..., 1, :, :, :]
    nab2 -= np.einsum("...mlk,...mij->...lkij", gam, nab)
    nab2 -= np.einsum("...mli,...kmj->...lkij", gam, nab)
    nab2 -= np.einsum("...mlj,...kim->...lkij", gam, nab)
    rough = -np.einsum("xy,xyllij->xyij", up2, nab2)
    p2u = rough + K * vals
    pairing = float(np.sum(dv * up2 ** 2 * np.einsum("xyij,xyij->xy", vals, p2u)))

    return KoisoResult(
        lhs=lhs,
        rhs=rhs,
        gap=abs(lhs - rhs),
        grad_sq=grad_sq,
        t_sq=t_sq,
        div_sq=div_sq,
        tr_sq=tr_sq,
        u_sq=u_sq,
        pairing=pairing,
        slack=pairing - (n + K) * u_sq,
    )


def random_bump_tensor(
    grid: Grid2D,
    rng: np.random.Generator,
    trace_free: bool = True,
    margin_fraction: float = 0.2,
) -> DiscreteField:
    """Seeded smooth compactly supported symmetric tensor field on the patch.

    The bump geometry is fixed in physical coordinates (support strictly
    inside the patch by margin_fraction of each side), so the same seed
    samples the same function on every refinement of the patch.  With
    trace_free=True the constant coefficient matrices are Euclidean
    trace-free, which makes the field pointwise trace-free for the conformal
    patch metric.
    """
    n = grid.chart.n
    rho, y = grid.meshes()
    lo = [ax[0] + margin_fraction * (ax[-1] - ax[0]) for ax in grid.axes]
    hi = [ax[-1] - margin_fraction * (ax[-1] - ax[0]) for ax in grid.axes]

    def bump(center, width):
        tr = (2 * rho - 2 * center[0]) / width[0]
        ty = (2 * y - 2 * center[1]) / width[1]
        return np.vectorize(smooth_bump)(tr) * np.vectorize(smooth_bump)(ty)

    vals = np.zeros(grid.shape + (n, n))
    for _ in range(2):
        center = [rng.uniform(l + 0.3 * (h - l), h - 0.3 * (h - l))
                  for l, h in zip(lo, hi)]
        width = [min(center[0] - lo[0], hi[0] - center[0]) * 2,
                 min(center[1] - lo[1], hi[1] - center[1]) * 2]
        A = rng.standard_normal((n, n))
        A = 0.5 * (A + A.T)
        if trace_free:
            A -= np.trace(A) / n * np.eye(n)
        vals += bump(center, width)[..., None, None] * A
    return DiscreteField(grid, vals)


# -- rescaled-metric uniformity scan -------------------------------------------


@dataclass(frozen=True)
class ScanFamily:
    """One rescaling family scanned across eps at a fixed shape parameter:
    v0 = ratio * eps * direction, which the uniform-boundedness claim says
    makes the coefficient bands eps-independent."""

    name: str
    case: str
    n: int
    f: Optional[int] = None
    ratio: float = 0.0
    C: float = 1.0
    h_u: Callable = None  # type: ignore[assignment]


@dataclass
class ScanRow:
    family: str
    eps: float
    min_eig: float
    max_eig: float
    cond: float
    max_coeff_diff: float


def half_ball_lattice(points_per_axis: int = 9) -> np.ndarray:
    """Lattice over (s, t_p, t_q) inside the unit half-ball: s >= 0 along the
    radial direction, t_p along a fixed transverse direction, t_q along a
    fixed cusp direction."""
    s = np.linspace(0.0, 0.9, points_per_axis)
    t = np.linspace(-0.9, 0.9, points_per_axis)
    pts = []
    for a in s:
        for b in t:
            for c in t:
                if a * a + b * b + c * c < 0.995:
                    pts.append((a, b, c))
    return np.array(pts)


def schauder_coefficient_scan(
    families: Sequence[ScanFamily],
    eps_list: Sequence[float],
    points_per_axis: int = 9,
) -> list[ScanRow]:
    """Extremal eigenvalues and first-difference coefficient variation of the
    rescaled metrics over a fixed reference lattice, per family and eps."""
    from .charts import RescalingCase, rescaled_metric_at, euclidean_collar_family

    lattice = half_ball_lattice(points_per_axis)
    rows = []
    for fam in families:
        for eps in eps_list:
            if fam.case == "collar":
                v0 = np.full(fam.n - 1, fam.ratio * eps / math.sqrt(fam.n - 1))
                case = RescalingCase(
                    "collar", fam.n, eps, v0=v0,
                    h_u=fam.h_u or euclidean_collar_family,
                )
                bdim = fam.n - 1
            else:
                bdim = fam.n - 1 - fam.f
                v0 = np.zeros(bdim)
                if fam.ratio > 0:
                    v0[0] = fam.ratio * eps
                case = RescalingCase(fam.case, fam.n, eps, v0=v0, f=fam.f, C=fam.C)
            mats = []
            for s, tp, tq in lattice:
                q = np.zeros(fam.n)
                q[0] = s
                q[1] = tp
                if fam.case != "collar" and fam.f is not None and bdim < fam.n - 1:
                    q[1 + bdim] = tq
                else:
                    q[-1] = tq
                mats.append(rescaled_metric_at(case, q))
            mats = np.array(mats)
            eigs = np.linalg.eigvalsh(mats)
            coeff_diff = float(
                np.abs(np.diff(mats.reshape(len(mats), -1), axis=0)).max()
            )
            rows.append(
                ScanRow(
                    family=fam.name,
                    eps=eps,
                    min_eig=float(eigs.min()),
                    max_eig=float(eigs.max()),
                    cond=float(eigs.max() / eigs.min()),
                    max_coeff_diff=coeff_diff,
                )
            )
    return rows


def default_scan_families(n: int = 4, f: int = 1) -> list[ScanFamily]:
    return [
        ScanFamily("near_axis", "cusp_near_axis", n, f=f, ratio=0.5, C=1.0),
        ScanFamily("off_axis", "cusp_off_axis", n, f=f, ratio=5.0),
        ScanFamily("collar", "collar", n, ratio=0.0),
    ]


def condition_number_spread(rows: Sequence[ScanRow]) -> dict[str, float]:
    """Per-family max relative deviation of the condition number from the
    family median across eps."""
    by_family: dict[str, list[float]] = {}
    for r in rows:
        by_family.setdefault(r.family, []).append(r.cond)
    out = {}
    for fam, conds in by_family.items():
        med = float(np.median(conds))
        out[fam] = float(max(abs(c - med) / med for c in conds))
    return out
