"""Verification harness: does the computed dynamics honor the estimates?

Each experiment realizes one analytical statement as a desk-scale
numerical check:

* ``stability_experiment``   difference of two runs vs. difference of
  their data, in the energy norms (squared bundle against squared dual
  norms of the control difference); the fitted constant should be flat
  across perturbation scales.
* ``monodomain_limit_check`` with M_e = lam M_i the reduced bidomain
  dynamics collapses to the monodomain dynamics; the two trajectories
  should agree to solver precision.
* ``regularity_monitor``     the L4-in-time H1 norm of phi should stay
  bounded under refinement.
* ``apriori_check``          energy bundle of a run against its data
  norms (forward) or cost-partial norms (adjoint); the ratio is the
  fitted constant of the estimate.
* ``convergence_study``      second order in space (pure-diffusion
  mode against an exact solution), first order in time
  (self-convergence on a smooth excitation problem).
* ``gradient_check``         finite differences of the reduced cost
  against the adjoint gradient, with a plateau rule for the step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import grid as gridmod
from .adjoint import AdjointResult
from .assembly import build_operators
from .control import (
    compute_gradient,
    control_inner,
    project_admissible,
    random_admissible_direction,
    simulate,
)
from .forward import (
    ForwardResult,
    ProblemConfig,
    compatibility_enforce,
    run_forward,
)
from .grid import (
    FieldSeries,
    Grid,
    ScalarField,
    TensorField,
    dual_norm,
    lp_norm,
    refined,
    time_weights,
)
from .ionic import IonicParams


# ---------------------------------------------------------------------------
# norm bundles


def _series_dual_l2_sq(series, riesz):
    """Squared L2-in-time dual norm of a data series (trapezoid in time)."""
    tw = time_weights(series.grid)
    vals = np.array(
        [dual_norm(series.frame(k), riesz) for k in range(series.n_frames)]
    )
    return float(tw @ vals**2)


def _w12_l2_sq(series):
    """Squared W^{1,2}(0,T;L2) norm via backward differences in time."""
    g = series.grid
    l2_sq = gridmod.bochner_norm(series, 2, "L2") ** 2
    w = g.weights
    rates = np.diff(series.data, axis=0) / g.dt
    rate_sq = float(g.dt * np.sum((rates * rates) @ w))
    return l2_sq + rate_sq


def difference_bundle(base, pert, kind):
    """Squared energy bundle of the difference of two trajectories."""
    g = base.phi_tr.grid
    dphi = FieldSeries(g, pert.phi_tr.data - base.phi_tr.data)
    dw = FieldSeries(g, pert.w.data - base.w.data)
    lhs = (
        gridmod.bochner_norm(dphi, np.inf, "L2") ** 2
        + gridmod.bochner_norm(dphi, 2, "H1") ** 2
        + gridmod.bochner_norm(dw, np.inf, "L2") ** 2
        + _w12_l2_sq(dw)
    )
    if kind == "bidomain":
        dphie = FieldSeries(g, pert.phi_e.data - base.phi_e.data)
        lhs += gridmod.bochner_norm(dphie, 2, "H1") ** 2
    return lhs


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    scales: list
    lhs: list
    rhs: list
    ratios: list
    fitted_constant: float
    spread: float
    stable: bool

    def rows(self):
        return list(zip(self.scales, self.lhs, self.rhs, self.ratios))


def stability_experiment(config, direction, scales, *, spread_bound=2.0):
    """Perturb the data by s * direction and compare energy vs. data norms.

    ``direction`` is a pair of FieldSeries (dI_i, dI_e).  Every scale
    must be positive and the direction nonzero; the zero-perturbation
    (uniqueness) probe is `identical_run_difference`, not a scale here.
    """
    dIi, dIe = direction
    if not (np.any(dIi.data) or np.any(dIe.data)):
        raise ValueError("perturbation direction is identically zero")
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales):
        raise ValueError("perturbation scales must be positive")

    base = run_forward(config, report=False)
    riesz = config.ops.riesz
    g = config.grid
    lhs_list, rhs_list, ratios = [], [], []
    for s in scales:
        cfg = replace(
            config,
            I_i=FieldSeries(g, config.I_i.data + s * dIi.data),
            I_e=FieldSeries(g, config.I_e.data + s * dIe.data),
        )
        pert = run_forward(cfg, report=False)
        lhs = difference_bundle(base, pert, config.kind)
        d_ii = FieldSeries(g, s * dIi.data)
        d_ie = FieldSeries(g, pert.I_e_used.data - base.I_e_used.data)
        rhs = _series_dual_l2_sq(d_ii, riesz) + _series_dual_l2_sq(d_ie, riesz)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        ratios.append(lhs / rhs if rhs > 0 else np.inf)

    arr = np.asarray(ratios)
    fitted = float(np.max(arr))
    spread = float(np.max(arr) / np.median(arr)) if np.all(np.isfinite(arr)) else np.inf
    return StabilityReport(
        scales=scales,
        lhs=lhs_list,
        rhs=rhs_list,
        ratios=ratios,
        fitted_constant=fitted,
        spread=spread,
        stable=bool(np.isfinite(spread) and spread <= spread_bound),
    )


def identical_run_difference(config):
    """Max pointwise difference between two runs of the same data (exactly 0)."""
    a = run_forward(config, report=False)
    b = run_forward(config, report=False)
    diff = max(
        float(np.max(np.abs(a.phi_tr.data - b.phi_tr.data))),
        float(np.max(np.abs(a.w.data - b.w.data))),
    )
    if config.kind == "bidomain":
        diff = max(diff, float(np.max(np.abs(a.phi_e.data - b.phi_e.data))))
    return diff


# ---------------------------------------------------------------------------
# monodomain limit


@dataclass
class LimitReport:
    discrepancy: float
    mono_norm: float
    lam: float


def monodomain_limit_check(config, *, cg_tol=1e-12, inner_tol=1e-13):
    """Run the bidomain twin with M_e = lam M_i and compare trajectories.

    Returns the relative C0-in-time L2 discrepancy of the transmembrane
    potentials.  Tolerances are tightened beyond the run defaults
    because the comparison isolates pure solver error.  The stimulus
    pair is compatibilized up front so both systems integrate the same
    data (the equivalence only makes sense for admissible stimuli).
    """
    if config.kind != "monodomain":
        raise ValueError("limit check starts from a monodomain configuration")
    if config.ops.mi is None:
        raise ValueError("operators carry no tensor to build the bidomain twin")
    lam = config.ops.lam
    g = config.grid
    me = config.ops.mi * lam
    ops_bi = build_operators(g, config.ops.mi, me, lam=lam)
    I_e = compatibility_enforce(g, config.I_i, config.I_e)
    cfg_mono = replace(config, cg_tol=cg_tol, I_e=I_e)
    cfg_bi = replace(
        config, ops=ops_bi, kind="bidomain", cg_tol=cg_tol, inner_tol=inner_tol, I_e=I_e
    )
    mono = run_forward(cfg_mono, report=False)
    bi = run_forward(cfg_bi, report=False)
    dphi = FieldSeries(g, bi.phi_tr.data - mono.phi_tr.data)
    mono_norm = gridmod.bochner_norm(mono.phi_tr, np.inf, "L2")
    disc = gridmod.bochner_norm(dphi, np.inf, "L2") / max(mono_norm, 1e-300)
    return LimitReport(discrepancy=float(disc), mono_norm=float(mono_norm), lam=lam)


# ---------------------------------------------------------------------------
# regularity monitor


@dataclass
class RegularityReport:
    values: list
    ratios: list
    bounded: bool


def regularity_monitor(base_grid, make_config, *, levels=2, bound=1.1):
    """Track the L4-in-time H1 norm of phi under grid/time refinement.

    ``make_config(grid)`` builds the problem at each level from
    analytic data.  The monitor passes if each refinement changes the
    norm by at most `bound` (growth ratio <= bound).
    """
    values = []
    g = base_grid
    for _ in range(levels):
        res = run_forward(make_config(g), report=False)
        values.append(gridmod.bochner_norm(res.phi_tr, 4, "H1"))
        g = refined(g)
    ratios = [values[i + 1] / values[i] for i in range(len(values) - 1)]
    return RegularityReport(
        values=values,
        ratios=ratios,
        bounded=bool(all(r <= bound for r in ratios)),
    )


# ---------------------------------------------------------------------------
# a-priori estimates


@dataclass
class AprioriReport:
    lhs: float
    rhs: float

    @property
    def ratio(self):
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else np.inf
        return self.lhs / self.rhs


def apriori_check(result, config):
    """Energy bundle over data bundle for a forward or adjoint result.

    Forward: C0L2(phi)^2 + L2H1(phi)^2 + L4(Q)^4 + dual-rate(phi)^{4/3}
    + C0L2(w)^2 + dual-rate(w)^2 [+ L2H1(phi_e)^2] against
    1 + ||phi0||^2 + ||w0||^2 + dual-L2-in-time^2 of I_i and I_e.

    Adjoint: C0L2(p1)^2 + L2H1(p1)^2 [+ L2H1(p2)^2] + C0L2(p3)^2
    against the squared L2(Q) norms of the cost partials.
    """
    if isinstance(result, AdjointResult):
        rep = result.report
        lhs = rep["C0_L2_p1"] ** 2 + rep["L2_H1_p1"] ** 2 + rep["C0_L2_p3"] ** 2
        if "L2_H1_p2" in rep:
            lhs += rep["L2_H1_p2"] ** 2
        rhs = (
            rep["L2_L2_r_phi"] ** 2
            + rep["L2_L2_r_eta"] ** 2
            + rep["L2_L2_r_w"] ** 2
        )
        return AprioriReport(lhs=float(lhs), rhs=float(rhs))

    rep = result.report
    lhs = (
        rep["C0_L2_phi"] ** 2
        + rep["L2_H1_phi"] ** 2
        + rep["L4_OmegaT_phi"] ** 4
        + rep["L43_dual_dphi_dt"] ** (4.0 / 3.0)
        + rep["C0_L2_w"] ** 2
        + rep["L2_dual_dw_dt"] ** 2
    )
    if "L2_H1_phie" in rep:
        lhs += rep["L2_H1_phie"] ** 2
    riesz = config.ops.riesz
    I_e = result.I_e_used if result.I_e_used is not None else config.I_e
    rhs = (
        1.0
        + lp_norm(config.phi0, 2) ** 2
        + lp_norm(config.w0, 2) ** 2
        + _series_dual_l2_sq(config.I_i, riesz)
        + _series_dual_l2_sq(I_e, riesz)
    )
    return AprioriReport(lhs=float(lhs), rhs=float(rhs))


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceReport:
    spatial_errors: list
    spatial_orders: list
    temporal_errors: list
    temporal_orders: list
    spatial_ok: bool
    temporal_ok: bool

    @property
    def conclusive(self):
        mono_s = all(
            e2 < e1 for e1, e2 in zip(self.spatial_errors, self.spatial_errors[1:])
        )
        mono_t = all(
            e2 < e1 for e1, e2 in zip(self.temporal_errors, self.temporal_errors[1:])
        )
        return mono_s and mono_t


def _spatial_study(base_nodes, levels, base_steps, T):
    """Pure-diffusion mode against phi(x,t) = e^{-t} cos(pi x)."""
    errors = []
    for lvl in range(levels):
        nodes = (base_nodes - 1) * 2**lvl + 1
        steps = base_steps * 4**lvl
        g = Grid(nodes, 1.0, T, steps)
        mi = TensorField.isotropic(g, 2.0 / np.pi**2)
        ops = build_operators(g, mi, lam=1.0)
        cfg = ProblemConfig(
            grid=g,
            ops=ops,
            ionic=IonicParams("rm"),
            kind="monodomain",
            phi0=ScalarField.from_function(g, lambda x: np.cos(np.pi * x)),
            w0=ScalarField.zeros(g),
            I_i=FieldSeries.zeros(g),
            I_e=FieldSeries.zeros(g),
            no_reaction=True,
        )
        res = run_forward(cfg, report=False)
        exact = np.exp(-T) * np.cos(np.pi * g.coords[:, 0])
        err = lp_norm(ScalarField(g, res.phi_tr.data[-1] - exact), 2)
        errors.append(err)
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(len(errors) - 1)]
    return errors, orders


def _temporal_study(nodes, base_steps, levels, T):
    """Self-convergence of a smooth excitation under time-step halving."""
    finals = []
    the_grid = None
    for lvl in range(levels):
        g = Grid(nodes, 1.0, T, base_steps * 2**lvl)
        the_grid = g
        mi = TensorField.isotropic(g, 1.0)
        ops = build_operators(g, mi, lam=1.0)
        bump = ScalarField.from_function(
            g, lambda x: np.exp(-(((x - 0.3) / 0.12) ** 2))
        )
        cfg = ProblemConfig(
            grid=g,
            ops=ops,
            ionic=IonicParams("rm"),
            kind="monodomain",
            phi0=bump,
            w0=ScalarField.zeros(g),
            I_i=FieldSeries.zeros(g),
            I_e=FieldSeries.constant(g, ScalarField.from_function(
                g, lambda x: -2.0 * np.exp(-(((x - 0.7) / 0.15) ** 2))
            )),
        )
        res = run_forward(cfg, report=False)
        finals.append(res.phi_tr.data[-1])
    errors = [
        lp_norm(ScalarField(the_grid, finals[i] - finals[i + 1]), 2)
        for i in range(len(finals) - 1)
    ]
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(len(errors) - 1)]
    return errors, orders


def convergence_study(
    *,
    spatial_base_nodes=17,
    spatial_levels=3,
    spatial_base_steps=8,
    spatial_T=0.1,
    temporal_nodes=33,
    temporal_base_steps=25,
    temporal_levels=4,
    temporal_T=1.0,
):
    """Observed orders: ~2 in space (exact solution), ~1 in time (self)."""
    s_err, s_ord = _spatial_study(
        spatial_base_nodes, spatial_levels, spatial_base_steps, spatial_T
    )
    t_err, t_ord = _temporal_study(
        temporal_nodes, temporal_base_steps, temporal_levels, temporal_T
    )
    return ConvergenceReport(
        spatial_errors=s_err,
        spatial_orders=s_ord,
        temporal_errors=t_err,
        temporal_orders=t_ord,
        spatial_ok=bool(all(1.7 <= o <= 2.3 for o in s_ord)),
        temporal_ok=bool(all(0.8 <= o <= 1.3 for o in t_ord)),
    )


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GradcheckReport:
    rel_errors: list
    deltas: list
    inner_products: list
    fd_values: list
    max_rel_error: float


def gradient_check(problem, *, n_directions=5, seed=0, deltas=None):
    """Compare <g, d> with centered finite differences of the reduced cost.

    For each seeded unit direction in the control subspace the FD step
    is chosen by a three-point plateau rule: among a geometric ladder
    of steps, take the one whose FD value moves least relative to its
    neighbors.  Reports the worst relative error over all directions.
    """
    if deltas is None:
        deltas = [1e-2 * 0.5**j for j in range(6)]
    rng = np.random.default_rng(seed)
    base = project_admissible(problem.config.I_e, problem)
    J0, traj = simulate(problem, base)
    grad, _ = compute_gradient(problem, base, traj)

    rel_errors, chosen, gds, fds = [], [], [], []
    for _ in range(n_directions):
        d = random_admissible_direction(problem, rng)
        gd = control_inner(grad, d)
        fd_ladder = []
        for delta in deltas:
            plus = FieldSeries(base.grid, base.data + delta * d.data)
            minus = FieldSeries(base.grid, base.data - delta * d.data)
            J_plus, _ = simulate(problem, plus)
            J_minus, _ = simulate(problem, minus)
            fd_ladder.append((J_plus - J_minus) / (2.0 * delta))
        scale = max(abs(gd), max(abs(f) for f in fd_ladder), 1e-300)
        best_j, best_disp = 0, np.inf
        for j in range(len(deltas)):
            neigh = [fd_ladder[i] for i in (j - 1, j + 1) if 0 <= i < len(deltas)]
            disp = max(abs(fd_ladder[j] - v) for v in neigh) / scale
            if disp < best_disp:
                best_j, best_disp = j, disp
        fd = fd_ladder[best_j]
        rel = abs(fd - gd) / max(abs(gd), 1e-300)
        rel_errors.append(float(rel))
        chosen.append(deltas[best_j])
        gds.append(float(gd))
        fds.append(float(fd))
    return GradcheckReport(
        rel_errors=rel_errors,
        deltas=chosen,
        inner_products=gds,
        fd_values=fds,
        max_rel_error=float(max(rel_errors)),
    )
