"""Fractional Laplacians, fractional seminorms, perimeters and energies.

Four routes to (-Delta)^(s/2) are implemented: spectral multipliers
lambda^(s/2), heat-semigroup subordination multipliers, the
principal-value singular integral against the subordinated kernel (three
regularization families, extrapolated in the regularization scale), and
the Dirichlet-to-Neumann map of the harmonic extension (in
:mod:`fraclap.extension`). The quadratic-form counterparts give three
routes to the fractional seminorm, which double as each other's oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .errors import AccuracyError, DomainError
from .kernel import (FracParams, SubordinationQuadrature, bochner_multiplier,
                     geom_matrix, modal_tail_coeffs)
from .manifold import Field, SpectralManifold, eval_modes, pairwise_distances

__all__ = [
    "PvScheme", "EnergySpec",
    "fraclap_spectral", "fraclap_bochner", "fraclap_pv",
    "seminorm_spectral", "seminorm_double_integral",
    "perimeter_s", "classical_perimeter", "perimeter_limit_report",
    "energy", "energy_along_flow",
]

PV_FAMILIES = ("gaussian_factor", "ball_removal", "t_truncation")


@dataclass(frozen=True)
class PvScheme:
    """Regularization family and epsilon ladder for the p.v. integral.

    The ladder is a strictly decreasing sequence of length scales (>= 3
    entries); the time-truncation family maps a rung eps to the time
    cutoff eps^2 so all families share one ladder. Extrapolation fits
    ``extrapolation_order`` correction powers on top of the constant term;
    the leading defect power is 2 - s for every family.
    """

    family: str
    eps_ladder: np.ndarray
    extrapolation_order: int = 3

    def __post_init__(self):
        if self.family not in PV_FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        ladder = np.asarray(self.eps_ladder, dtype=np.float64)
        if ladder.size < 3 or np.any(np.diff(ladder) >= 0) \
                or np.any(ladder <= 0):
            raise DomainError(
                "eps ladder must be strictly decreasing, positive, >= 3 long")
        object.__setattr__(self, "eps_ladder", ladder)

    @classmethod
    def default(cls, M: SpectralManifold, family: str = "gaussian_factor",
                base_mult: float = 64.0, rungs: int = 5) -> "PvScheme":
        """Geometric factor-2 ladder from base_mult node spacings down,
        capped at a quarter injectivity radius (coarse discretizations
        would otherwise start beyond the geometry's own scale)."""
        h = mesh_spacing(M)
        top = min(base_mult * h, M.injectivity_radius / 4.0)
        ladder = top * 2.0 ** (-np.arange(rungs, dtype=np.float64))
        return cls(family=family, eps_ladder=ladder)


@dataclass(frozen=True)
class EnergySpec:
    """Potential term of the total energy [u]^2 + int F(u).

    potential: "zero", "double_well" ((1 - v^2)^2), a vectorized callable,
    or a (xs, ys) table used with linear interpolation.
    """

    potential: object
    params: FracParams

    def F(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.potential == "zero" or self.potential is None:
            return np.zeros_like(v)
        if self.potential == "double_well":
            return (1.0 - v * v) ** 2
        if callable(self.potential):
            return np.asarray(self.potential(v), dtype=np.float64)
        xs, ys = self.potential
        return np.interp(v, xs, ys)


def mesh_spacing(M: SpectralManifold) -> float:
    """Characteristic node spacing used for cutoffs and ladders."""
    if M.kind == "torus":
        return float(np.max(M.meta["lengths"] / M.meta["grid"]))
    if M.kind == "sphere":
        r = M.meta["radius"]
        return float(max(np.pi * r / M.meta["n_theta"],
                         2.0 * np.pi * r / M.meta["n_phi"]))
    faces = M.meta["faces"]
    verts = M.nodes
    edge = np.linalg.norm(verts[faces[:, [1, 2, 0]]] - verts[faces], axis=2)
    return float(edge.mean())


# ---------------------------------------------------------------------------
# fractional Laplacians

def fraclap_spectral(M: SpectralManifold, u: Field,
                     params: FracParams) -> Field:
    """Spectral route: lambda_k^(s/2) multipliers, exact in the basis."""
    a = u.coeffs()
    return Field(M, M.synthesize(M.eigenvalues ** (0.5 * params.s) * a))


def fraclap_bochner(M: SpectralManifold, u: Field, params: FracParams,
                    quad: SubordinationQuadrature | None = None,
                    rel_tol: float = 1e-8) -> Field:
    """Subordination route: per-mode time integrals of the heat semigroup.

    Agrees with the spectral route to quadrature tolerance; the per-mode
    multiplier is validated against lambda^(s/2) and an AccuracyError is
    raised if the declared tolerance is not met.
    """
    a = u.coeffs()
    mult = bochner_multiplier(M.eigenvalues, params.s)
    exact = M.eigenvalues ** (0.5 * params.s)
    scale = max(float(exact.max()), 1e-300)
    worst = float(np.max(np.abs(mult - exact))) / scale
    if worst > rel_tol:
        raise AccuracyError(
            f"subordination multipliers off by {worst:.2e} (> {rel_tol:g})",
            bound=worst)
    return Field(M, M.synthesize(mult * a))


class _KernelAction:
    """K = G (dense geometric band) + Phi diag(T) Phi^T (eigensum band).

    The eigensum band is applied factored, so matvecs and quadratic forms
    cost O(N^2 + N K) instead of the O(N^2 K) a materialized kernel
    matrix would take.
    """

    def __init__(self, M, params, quad, eps=0.0, t_lo=0.0):
        self.M = M
        self.G = geom_matrix(M, params, quad, eps, t_lo)
        self.T = modal_tail_coeffs(M, params, max(t_lo, quad.t_split), eps)

    def matvec(self, x):
        phi = self.M.eigenvectors
        return self.G @ x + phi @ (self.T * (phi.T @ x))

    def quadratic(self, x, y):
        phi = self.M.eigenvectors
        ax, ay = phi.T @ x, phi.T @ y
        return float(x @ (self.G @ y) + ax @ (self.T * ay))

    def entries(self, rows, cols):
        phi = self.M.eigenvectors
        modal = np.einsum("ik,ik->i", phi[rows] * self.T[None, :], phi[cols])
        return self.G[rows, cols] + modal

    def pv_sum(self, u_vals, w):
        """sum_q w_q (u(p) - u(q)) K(p, q) at every node p."""
        return u_vals * self.matvec(w) - self.matvec(w * u_vals)


def _ball_cutoff(M, eps):
    """Ulp-safe ball-removal cutoff and its continuum-effective radius.

    On a 1-d lattice, distances are exact multiples of the spacing, so a
    cutoff at a multiple flips shells by rounding noise; the cutoff is
    snapped half a spacing below the nearest shell. The kept shells then
    sum the integral with the midpoint rule, whose implied boundary is
    exactly that snapped cutoff, so it doubles as the radius the defect
    expansion is fit against.
    """
    if M.kind == "torus" and M.dim == 1:
        h = mesh_spacing(M)
        cut = (max(1, round(eps / h)) - 0.5) * h
        return cut, cut
    return eps, eps


def fraclap_pv(M: SpectralManifold, u: Field, params: FracParams,
               scheme: PvScheme,
               quad: SubordinationQuadrature | None = None,
               return_diagnostics: bool = False,
               stall_tol: float = 0.05):
    """Principal-value route: regularized integrals extrapolated to eps = 0.

    Each node's ladder of regularized values is fit with a constant plus
    ``extrapolation_order`` defect powers (leading power 2 - s for every
    family) and the constant term is returned. A ladder whose fit residual
    exceeds ``stall_tol`` of the result raises an AccuracyError carrying
    the raw ladder.
    """
    quad = quad or SubordinationQuadrature.for_manifold(M, params.s)
    w = M.weights
    u_vals = u.values
    ladder = scheme.eps_ladder
    fit_eps = ladder.copy()
    if scheme.family == "ball_removal":
        act = _KernelAction(M, params, quad)
        base = act.pv_sum(u_vals, w)
        D = pairwise_distances(M)
        rows_all, cols_all = np.nonzero((D < ladder[0]) & (D > 0.0))
        kvals = act.entries(rows_all, cols_all)
        dvals = D[rows_all, cols_all]
        vals = []
        for j, eps in enumerate(ladder):
            cut, eff = _ball_cutoff(M, eps)
            sel = dvals < cut
            near = np.zeros_like(u_vals)
            np.add.at(near, rows_all[sel],
                      w[cols_all[sel]]
                      * (u_vals[rows_all[sel]] - u_vals[cols_all[sel]])
                      * kvals[sel])
            vals.append(base - near)
            fit_eps[j] = eff
        vals = np.stack(vals)
    else:
        t_lo = scheme.family == "t_truncation"
        vals = np.stack([
            _KernelAction(M, params, quad,
                          eps=0.0 if t_lo else eps,
                          t_lo=eps * eps if t_lo else 0.0).pv_sum(u_vals, w)
            for eps in ladder])
    s = params.s
    powers = ((2.0 - s, 4.0 - s, 4.0) if scheme.family == "t_truncation"
              else (2.0 - s, 2.0, 4.0 - s))
    powers = powers[:scheme.extrapolation_order]
    A = np.column_stack([np.ones_like(fit_eps)]
                        + [fit_eps ** p for p in powers])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    limit = coef[0]
    resid = np.max(np.abs(A @ coef - vals))
    scale = max(float(np.max(np.abs(limit))), 1e-300)
    if resid > stall_tol * scale:
        raise AccuracyError(
            f"pv ladder not stabilizing: fit residual {resid:.3e} vs "
            f"result scale {scale:.3e}", bound=resid / scale,
            data={"eps_ladder": ladder, "ladder_values": vals})
    out = Field(M, limit)
    if return_diagnostics:
        return out, {"eps_ladder": ladder, "ladder_values": vals,
                     "fit_residual": resid, "rel_residual": resid / scale}
    return out


# ---------------------------------------------------------------------------
# seminorms

def seminorm_spectral(M: SpectralManifold, u: Field,
                      params: FracParams) -> float:
    """Reference quadratic form 2 sum_k lambda_k^(s/2) <u, phi_k>^2."""
    a = u.coeffs()
    return float(2.0 * np.sum(M.eigenvalues ** (0.5 * params.s) * a * a))


def _two_level(values):
    """(lo, hi) if the field takes exactly two values (or one), else None."""
    vals = np.unique(values)
    if vals.size == 1:
        return float(vals[0]), float(vals[0])
    if vals.size == 2:
        return float(vals[0]), float(vals[1])
    return None


def classical_perimeter(M: SpectralManifold, ind: np.ndarray) -> float:
    """Interface measure of a lattice indicator (torus charts only).

    Counts sign-change edges per axis weighted by the dual cell area;
    exact for axis-aligned interfaces, an L1 (staircase) measure otherwise.
    """
    if M.kind != "torus":
        raise DomainError("classical perimeter implemented on torus lattices")
    grid = tuple(M.meta["grid"])
    lengths = M.meta["lengths"]
    h = lengths / np.array(grid)
    cell = float(np.prod(h))
    arr = np.asarray(ind).reshape(grid) > 0.5
    total = 0.0
    for ax in range(len(grid)):
        flips = arr != np.roll(arr, 1, axis=ax)
        total += flips.sum() * cell / h[ax]
    return total


def _band_coefficient(n: int) -> float:
    """int_{S^(n-1)} |e . z| dsigma(z): 2, 4, 2 pi, ... for n = 1, 2, 3."""
    if n == 1:
        return 2.0
    omega = 2.0 * np.pi ** (0.5 * (n - 1)) / _gamma(0.5 * (n - 1)) \
        if n > 2 else 2.0
    return 2.0 * omega / (n - 1.0)


def seminorm_double_integral(M: SpectralManifold, u: Field,
                             params: FracParams,
                             quad: SubordinationQuadrature | None = None,
                             h_cut: float | None = None,
                             band_model: str = "auto") -> float:
    """Quadratic form as a pairwise double sum against the singular kernel.

    Pairs closer than ``h_cut`` (default two node spacings) are excluded
    and their mass restored from a local Euclidean model: for smooth
    fields the gradient model int (grad u . z)^2 alpha |z|^(-n-s), for
    two-valued fields the interface-crossing model (the gradient model is
    provably off by the factor 2(1-s)/(2-s) across a jump). Both reduce to
    closed forms in the radial variable.
    """
    quad = quad or SubordinationQuadrature.for_manifold(M, params.s)
    if h_cut is None:
        h_cut = 2.0 * mesh_spacing(M)
    act = _KernelAction(M, params, quad)
    D = pairwise_distances(M)
    w = M.weights
    uv = u.values
    s_far = 2.0 * (act.quadratic(w * uv * uv, w)
                   - act.quadratic(w * uv, w * uv))
    rows, cols = np.nonzero((D < h_cut) & (D > 0.0))
    if rows.size:
        kv = act.entries(rows, cols)
        s_far -= float(np.sum(w[rows] * w[cols]
                              * (uv[rows] - uv[cols]) ** 2 * kv))

    n, s = params.n, params.s
    levels = _two_level(uv) if band_model in ("auto", "interface") else None
    if band_model == "gradient":
        levels = None
    if levels is not None and levels[0] != levels[1]:
        jump2 = (levels[1] - levels[0]) ** 2
        per = classical_perimeter(M, (uv - levels[0])
                                  / (levels[1] - levels[0]))
        band = jump2 * per * params.alpha_ns * _band_coefficient(n) \
            * h_cut ** (1.0 - s) / (1.0 - s)
    elif levels is not None:
        band = 0.0  # constant field
    else:
        a = u.coeffs()
        grad_energy = float(np.sum(M.eigenvalues * a * a))
        omega = 2.0 * np.pi ** (0.5 * n) / _gamma(0.5 * n)
        band = params.alpha_ns * omega / (n * (2.0 - s)) \
            * h_cut ** (2.0 - s) * grad_energy
    return s_far + band


# ---------------------------------------------------------------------------
# perimeters

def perimeter_s(M: SpectralManifold, E: Field, params: FracParams,
                quad: SubordinationQuadrature | None = None,
                **kwargs) -> float:
    """Fractional perimeter [chi_E]^2 for s in (0, 1)."""
    if not 0.0 < params.s < 1.0:
        raise DomainError("perimeter requires s in (0, 1)")
    vals = np.unique(E.values)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise DomainError("perimeter needs a {0,1}-valued indicator field")
    return seminorm_double_integral(M, E, params, quad, **kwargs)


def perimeter_limit_report(M: SpectralManifold, shapes: dict,
                           s_ladder, n: int | None = None,
                           quad_factory=None) -> list[dict]:
    """(1 - s) Per_s / Per per shape per s, with the cross-shape spread.

    ``shapes`` maps a name to an indicator Field. Shapes with zero
    classical perimeter are excluded from the ratios. The spread at each
    s is max/min - 1 over shapes, the shape-independence statistic for
    the s -> 1 limit.
    """
    from .kernel import constants
    n = n if n is not None else M.dim
    rows = []
    for s in np.atleast_1d(s_ladder):
        par = constants(n, float(s))
        quad = quad_factory(float(s)) if quad_factory else None
        ratios = []
        for name, E in shapes.items():
            per_c = classical_perimeter(M, E.values)
            if per_c == 0.0:
                rows.append({"s": float(s), "shape": name,
                             "per_s": 0.0, "per_classical": 0.0,
                             "ratio": float("nan")})
                continue
            per_s = perimeter_s(M, E, par, quad)
            ratio = (1.0 - float(s)) * per_s / per_c
            ratios.append(ratio)
            rows.append({"s": float(s), "shape": name, "per_s": per_s,
                         "per_classical": per_c, "ratio": ratio})
        spread = max(ratios) / min(ratios) - 1.0 if len(ratios) > 1 else 0.0
        for row in rows:
            if row["s"] == float(s) and not math.isnan(row["ratio"]):
                row["spread_at_s"] = spread
    return rows


# ---------------------------------------------------------------------------
# energies

def energy(M: SpectralManifold, u: Field, spec: EnergySpec,
           quad: SubordinationQuadrature | None = None) -> float:
    """Total energy: spectral seminorm plus weighted nodal potential sum."""
    pot = float(np.dot(M.weights, spec.F(u.values)))
    if pot < -1e-12:
        raise DomainError("potential must be nonnegative on the field range")
    return seminorm_spectral(M, u, spec.params) + pot


def _flow_backward(M: SpectralManifold, X, t: float) -> np.ndarray:
    """Chart positions of the nodes flowed by -X for time t (RK4)."""
    y = M.nodes.copy()
    nsteps = max(8, int(math.ceil(abs(t) / 0.02)))
    dt = -t / nsteps
    for _ in range(nsteps):
        k1 = np.asarray(X(y))
        k2 = np.asarray(X(y + 0.5 * dt * k1))
        k3 = np.asarray(X(y + 0.5 * dt * k2))
        k4 = np.asarray(X(y + dt * k3))
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if M.kind == "torus":
        return y % M.meta["lengths"]
    if M.kind == "sphere":
        margin = 1e-3
        if np.any(y[:, 0] < margin) or np.any(y[:, 0] > np.pi - margin):
            raise DomainError("flow left the polar chart validity region")
        y[:, 1] %= 2.0 * np.pi
        return y
    raise DomainError("flows are supported on torus and sphere charts")


def energy_along_flow(M: SpectralManifold, u: Field, X, spec: EnergySpec,
                      t_ladder) -> dict:
    """Energy of u composed with the backward flow of X over +-t_ladder.

    X maps chart positions (N, c) to velocity components of the same
    shape. Returns rows (t, sobolev, potential, total), the centered
    first derivative at t = 0 from the smallest rung, and the largest
    second difference as a smoothness statistic.
    """
    ts = np.unique(np.abs(np.atleast_1d(np.asarray(t_ladder,
                                                   dtype=np.float64))))
    if np.any(ts <= 0):
        raise DomainError("t ladder must be nonzero")
    a0 = u.coeffs()
    rows = []
    for t in np.concatenate([-ts[::-1], [0.0], ts]):
        if t == 0.0:
            vals = M.synthesize(a0)
        else:
            pts = _flow_backward(M, X, float(t))
            vals = eval_modes(M, pts) @ a0
        f = Field(M, vals)
        sob = seminorm_spectral(M, f, spec.params)
        pot = float(np.dot(M.weights, spec.F(vals)))
        rows.append({"t": float(t), "sobolev": sob, "potential": pot,
                     "total": sob + pot})
    energies = {r["t"]: r["total"] for r in rows}
    h = float(ts[0])
    deriv = (energies[h] - energies[-h]) / (2.0 * h)
    tsort = sorted(energies)
    second = [energies[tsort[i + 1]] - 2 * energies[tsort[i]]
              + energies[tsort[i - 1]] for i in range(1, len(tsort) - 1)]
    return {"rows": rows, "derivative_at_zero": deriv,
            "max_second_difference": float(np.max(np.abs(second)))
            if second else 0.0}
