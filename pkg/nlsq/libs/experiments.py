"""Experiment runners, presets and the run orchestration behind the CLI.

A runner takes a validated RunConfig and the output directory and returns
the tables, acceptance checks and scalar summary of one experiment.
`run_experiment` writes them next to a manifest and folds the checks into an
exit code: 0 all checks pass, 1 a check failed or the run aborted on a
numerical error, 2 the configuration is invalid.
"""
import time
import warnings
from dataclasses import dataclass, field
from math import comb, factorial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from nlsq.internal import messages
from nlsq.internal.config import RunConfig
from nlsq.internal.exceptionmodel import exception_to_model
from nlsq.internal.utils import jsonable
from nlsq.libs.classical_gibbs import (
    Ensemble,
    Estimate,
    FreeFieldSampler,
    build_ensemble,
    constant_potential,
    cosine_potential,
    free_potential,
    gaussian_partition_ratio,
    local_potential,
    masses,
    ratio_estimate,
    sample_free_fields,
    single_mode_expectation,
    wick_moment_general,
)
from nlsq.libs.correlators import (
    CorrelationSpec,
    classical_correlation,
    density_matrix_sweep,
    hermitian_conjugate_spec,
    local_limit_sweep,
    quantum_correlation,
    quantum_setup,
    tail_bound_check,
    tail_slope,
    tau_sweep,
)
from nlsq.libs.domain_model import (
    MAX_FOCK_DIMENSION,
    ConfigError,
    Grid,
    NLSQError,
    NumericalWarning,
    Observable,
    PotentialSpec,
    Spectrum,
)
from nlsq.libs.dyson_expansion import (
    dyson_classical_check,
    dyson_coefficients,
    dyson_quantum_check,
    first_order_check,
    first_order_operator_error,
    remainder_scaling,
)
from nlsq.libs.export import operator_frame, package_versions, write_ensemble, write_manifest, write_table
from nlsq.libs.fock_quantum import (
    FockOperator,
    annihilation,
    bracket,
    build_basis,
    build_hamiltonians,
    creation,
    diagonal_operator,
    fock_dimension,
    free_evolve_kernel,
    grand_canonical_expectation,
    heisenberg_evolve,
    identity_operator,
    lift_operator,
    number_tail,
    partition_ratio,
    partition_ratio_limit,
    partition_ratio_trace,
    quantum_green_function,
    restrict_norm,
    sector_block,
    size_cutoff,
    star_product,
)
from nlsq.libs.models import CheckResult, PresetInfo, RunManifest
from nlsq.libs.nls_flow import (
    FlowParams,
    evolve,
    evolve_to_times,
    mollifier_convergence,
    mollifier_kernel,
    plane_wave,
    plane_wave_solution,
    random_sobolev_field,
    trajectory,
)
from nlsq.libs.observables import (
    identity_observable,
    mode_projector,
    one_body_hamiltonian,
    operator_norm,
    random_hermitian,
    random_kernel,
    smooth_bump,
    tensor_digits,
    theta_values,
    two_body_kernel,
    wick_trace,
)
from nlsq.libs.spectral_core import make_grid, spectral_tail, spectrum
from nlsq.libs.xsb_diagnostics import (
    RESONANT_WINDOW,
    SLOBODECKIJ_SPREAD_LIMIT,
    embedding_ratio,
    evolved_spacetime_field,
    free_spacetime_field,
    random_band_limited,
    slobodeckij_envelope,
    spacetime_l2_norm,
    strichartz_envelope,
    xsb_norm,
)

# Offsets of the auxiliary random streams derived from the run seed.
OBSERVABLE_STREAM = 7
ALGEBRA_STREAM = 13
XSB_STREAM = 11

# Particle cutoff of the exact order-one commutator check.
ORDER_ONE_N_MAX = 3


@dataclass
class RunResult:
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    def check(self, name: str, value: float, threshold: float, passed: Optional[bool] = None, detail: str = "") -> CheckResult:
        """Record value <= threshold unless an explicit verdict is given."""
        value = float(value)
        verdict = bool(value <= threshold) if passed is None else bool(passed)
        result = CheckResult(
            name=name,
            passed=verdict,
            value=value if np.isfinite(value) else None,
            threshold=float(threshold),
            detail=detail or f"{value:.6g} vs {threshold:.6g}",
        )
        self.checks.append(result)
        return result


Runner = Callable[[RunConfig, Path], RunResult]


# ============================================================================
# BUILDERS
# ============================================================================

def _threshold(cfg: RunConfig, default: float) -> float:
    return cfg.tolerance if cfg.tolerance is not None else default


def build_grid(cfg: RunConfig) -> Grid:
    return make_grid(cfg.grid_k, cfg.grid_p, cfg.kappa)


def build_potential(cfg: RunConfig, grid: Grid, epsilon: Optional[float] = None) -> PotentialSpec:
    kind = cfg.potential
    if kind == "free":
        return free_potential(grid)
    if kind == "constant":
        return constant_potential(grid, cfg.coupling)
    if kind == "cosine":
        return cosine_potential(grid, cfg.coupling)
    if kind == "local":
        return local_potential(grid, cfg.coupling)
    if epsilon is None:
        epsilon = cfg.epsilon if cfg.epsilon is not None else cfg.epsilon_schedule[-1]
    return mollifier_kernel(epsilon, cfg.mollifier_base, grid, cfg.coupling)


def build_observable(name: str, spec: Spectrum, rng: np.random.Generator) -> Observable:
    """Observable from its config name: number, identity:p, projector:k, hamiltonian, random:p."""
    kind, _, arg = name.strip().partition(":")
    M = spec.M
    K = (M - 1) // 2
    if kind == "number":
        return Observable(1, M, np.eye(M, dtype=complex), label="N")
    if kind == "identity":
        return identity_observable(int(arg or 1), M)
    if kind == "projector":
        k = int(arg or 0)
        if abs(k) > K:
            raise ConfigError(f"observable: mode {k} lies outside -{K}..{K}")
        return mode_projector(k + K, M)
    if kind == "hamiltonian":
        return one_body_hamiltonian(spec)
    if kind == "random":
        return random_hermitian(int(arg or 1), M, rng)
    raise ConfigError(f"observable: unknown observable {name!r}")


def build_correlation(cfg: RunConfig, spec: Spectrum, potential: PotentialSpec) -> CorrelationSpec:
    names = [n for n in cfg.observable.split(";") if n.strip()]
    if len(names) == 1:
        names = names * len(cfg.times)
    if len(names) != len(cfg.times):
        raise ConfigError(f"observable: {len(names)} observables for {len(cfg.times)} times")
    rng = np.random.default_rng([cfg.seed, OBSERVABLE_STREAM])
    factors = tuple((build_observable(name, spec, rng), float(t)) for name, t in zip(names, cfg.times))
    weight = smooth_bump(cfg.weight_cutoff) if cfg.weight_cutoff else None
    return CorrelationSpec(factors=factors, potential=potential, weight=weight)


def build_params(cfg: RunConfig, record_interval: int = 0) -> FlowParams:
    return FlowParams(dt=cfg.dt, record_interval=record_interval)


def gibbs_ensemble(cfg: RunConfig, grid: Grid, spec: Spectrum, potential: PotentialSpec, nu: float = 0.0) -> Tuple[FreeFieldSampler, Ensemble]:
    sampler = FreeFieldSampler(grid, spec, cfg.seed, nu)
    return sampler, build_ensemble(sampler, cfg.ensemble_size, potential)


def effective_sample_size(weights: np.ndarray) -> float:
    return float(np.sum(weights) ** 2 / np.sum(weights**2))


def free_closed_form(corr: CorrelationSpec, spec: Spectrum) -> Optional[complex]:
    """Exact free Gibbs value for a single unweighted factor, else None."""
    if not corr.potential.is_free or corr.m != 1 or corr.weight is not None:
        return None
    xi = corr.factors[0][0]
    return wick_trace(xi, 1.0 / spec.lambdas)


def single_mode_closed_form(corr: CorrelationSpec, spec: Spectrum) -> Optional[complex]:
    """On one mode the flow only rotates the phase, so every factor is a power of |c|^2."""
    if spec.M != 1:
        return None
    scalars = [(complex(xi.kernel[0, 0]), xi.p) for xi, _ in corr.factors]

    def g(r: np.ndarray) -> np.ndarray:
        value = np.ones_like(np.asarray(r, dtype=float), dtype=complex)
        for s, p in scalars:
            value = value * s * np.asarray(r, dtype=float) ** p
        if corr.weight is not None:
            value = value * corr.weight(np.asarray(r, dtype=float))
        return value

    return single_mode_expectation(g, spec, corr.potential)


def free_gap(xi: Observable, spec: Spectrum, tau: float) -> float:
    """|classical - quantum| free value of the lift of xi."""
    classical = wick_trace(xi, 1.0 / spec.lambdas)
    quantum = wick_trace(xi, quantum_green_function(spec, 0.0, tau))
    return float(abs(classical - quantum))


def doubling_ratios(schedule: List[float], values: np.ndarray) -> List[Tuple[float, float]]:
    """(tau, value(2 tau) / value(tau)) for consecutive schedule entries that double."""
    out = []
    for i in range(len(schedule) - 1):
        if np.isclose(schedule[i + 1], 2.0 * schedule[i]) and values[i] > 0:
            out.append((schedule[i], float(values[i + 1] / values[i])))
    return out


# ============================================================================
# RUNNERS
# ============================================================================

def run_sample(cfg: RunConfig, out: Path) -> RunResult:
    """Draw a free-field ensemble with Gibbs weights and store it."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    potential = build_potential(cfg, grid)
    sampler, ensemble = gibbs_ensemble(cfg, grid, spec, potential, nu=cfg.nu)
    data_path, meta_path = write_ensemble(ensemble, sampler, out)
    result.artifacts += [data_path.name, meta_path.name]

    rows = []
    for i, k in enumerate(grid.modes):
        est = ratio_estimate(np.abs(ensemble.samples[:, i]) ** 2, ensemble.weights)
        rows.append({
            "k": int(k),
            "lambda": float(spec.lambdas[i]),
            "mean_abs2": est.value.real,
            "stderr": est.stderr,
            "free_value": 1.0 / (spec.lambdas[i] + cfg.nu),
        })
    table = pd.DataFrame(rows)
    result.tables["modes"] = table
    mass_est = ratio_estimate(masses(ensemble.samples), ensemble.weights)
    result.summary.update(
        mean_mass=mass_est.value.real,
        mean_mass_stderr=mass_est.stderr,
        effective_sample_size=effective_sample_size(ensemble.weights),
    )
    if potential.is_free:
        z = np.max(np.abs(table["mean_abs2"] - table["free_value"]) / table["stderr"])
        result.check("free_two_point_zscore", z, _threshold(cfg, 4.0))
    return result


def run_evolve(cfg: RunConfig, out: Path) -> RunResult:
    """Trajectory of random Sobolev data with mass and energy bookkeeping."""
    result = RunResult()
    grid = build_grid(cfg)
    potential = build_potential(cfg, grid)
    phi0 = random_sobolev_field(grid, cfg.sobolev_s, cfg.seed, cfg.mass_target)
    interval = max(1, int(round(abs(cfg.t_final) / cfg.dt / 100)))
    report = trajectory(phi0, cfg.t_final, potential, build_params(cfg, interval))
    result.tables["trajectory"] = report.to_frame(include_coeffs=True)
    result.summary.update(mass_drift=report.mass_drift, energy_drift=report.energy_drift)
    result.check("mass_drift", report.mass_drift, _threshold(cfg, 1e-10))
    return result


def _classical_reference(cfg: RunConfig, corr: CorrelationSpec, spec: Spectrum, grid: Grid, need_ensemble: bool):
    """(reference, method, Monte Carlo estimate or None, ensemble or None)."""
    closed = free_closed_form(corr, spec)
    if closed is not None and not need_ensemble:
        return Estimate(closed, 0.0), "closed-form", None, None
    _, ensemble = gibbs_ensemble(cfg, grid, spec, corr.potential)
    mc = classical_correlation(corr, ensemble, build_params(cfg))
    if closed is not None:
        return Estimate(closed, 0.0), "closed-form", mc, ensemble
    quadrature = single_mode_closed_form(corr, spec)
    if quadrature is not None:
        return Estimate(quadrature, 0.0), "quadrature", mc, ensemble
    return mc, "monte-carlo", mc, ensemble


def run_correlate_classical(cfg: RunConfig, out: Path) -> RunResult:
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    corr = build_correlation(cfg, spec, build_potential(cfg, grid))
    reference, method, mc, ensemble = _classical_reference(cfg, corr, spec, grid, need_ensemble=True)
    row = {
        "value": mc.value,
        "stderr": mc.stderr,
        "ensemble_size": ensemble.size,
        "effective_sample_size": effective_sample_size(ensemble.weights),
    }
    if method != "monte-carlo":
        row["reference"] = reference.value
        if mc.stderr > 0:
            result.check(f"monte_carlo_vs_{method}_zscore", abs(mc.value - reference.value) / mc.stderr, _threshold(cfg, 3.0))
    result.tables["classical_correlation"] = pd.DataFrame([row])
    result.summary.update(value=mc.value, stderr=mc.stderr, reference_method=method)
    return result


def run_correlate_quantum(cfg: RunConfig, out: Path) -> RunResult:
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    corr = build_correlation(cfg, spec, build_potential(cfg, grid))
    conjugated = hermitian_conjugate_spec(corr)
    rows, asymmetry = [], 0.0
    for i, tau in enumerate(cfg.tau_schedule):
        setup = quantum_setup(spec, corr.potential, tau, cfg.n_max, cfg.tail_tol)
        value = quantum_correlation(corr, setup.basis, setup.hamiltonians, tau)
        mirror = quantum_correlation(conjugated, setup.basis, setup.hamiltonians, tau)
        asymmetry = max(asymmetry, abs(mirror - np.conj(value)) / max(1.0, abs(value)))
        rows.append({
            "tau": tau,
            "value": value,
            "n_max": setup.N_max,
            "dimension": setup.basis.dimension,
            "number_tail": number_tail(spec, 0.0, tau, setup.N_max),
        })
        if cfg.dump_operators:
            result.tables[f"h_full_{i}"] = operator_frame(setup.hamiltonians.H_full)
    result.tables["quantum_correlation"] = pd.DataFrame(rows)
    result.check("conjugate_symmetry", asymmetry, _threshold(cfg, 1e-10))
    return result


def run_tau_sweep(cfg: RunConfig, out: Path) -> RunResult:
    """Quantum correlations along the tau schedule against the classical value."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    corr = build_correlation(cfg, spec, build_potential(cfg, grid))
    reference, method, mc, ensemble = _classical_reference(cfg, corr, spec, grid, need_ensemble=not corr.potential.is_free)
    report = tau_sweep(corr, cfg.tau_schedule, reference, spec, cfg.n_max, cfg.tail_tol)
    table = report.to_frame()
    xi = corr.factors[0][0]
    table["free_gap"] = [free_gap(xi, spec, tau) for tau in cfg.tau_schedule]
    if mc is not None:
        table["monte_carlo_re"] = mc.value.real
        table["monte_carlo_im"] = mc.value.imag
        table["monte_carlo_stderr"] = mc.stderr
    result.tables["tau_sweep"] = table
    result.summary.update(reference_method=method, reference=reference.value, spectral_tail=spectral_tail(grid))

    gaps = table["gap"].to_numpy()
    if method == "closed-form":
        mismatch = float(np.max(np.abs(gaps - table["free_gap"].to_numpy())))
        result.check("gap_matches_closed_form", mismatch, _threshold(cfg, 1e-12))
        ratios = doubling_ratios(cfg.tau_schedule, gaps)
        worst = max((abs(r - 0.5) for _, r in ratios), default=np.inf)
        result.check("gap_halves_per_doubling", worst, 0.05, detail=f"ratios {[round(r, 4) for _, r in ratios]}")
    else:
        tail = gaps[1:]
        increases = float(np.max(np.diff(tail), initial=0.0))
        result.check("gaps_non_increasing", increases, 0.0, detail=f"gaps {list(np.round(gaps, 8))}")
        stderr = mc.stderr if mc is not None else 0.0
        bound = 3.0 * (stderr + table["free_gap"].iloc[-1])
        result.check("final_gap_bound", gaps[-1], bound)
        if method == "quadrature" and mc is not None and mc.stderr > 0:
            result.check("monte_carlo_vs_quadrature_zscore", abs(mc.value - reference.value) / mc.stderr, 3.0)
    if ensemble is not None:
        result.tables["density_matrix"] = density_matrix_sweep(cfg.tau_schedule, ensemble, spec, corr.potential, corr.weight, cfg.n_max)
    return result


def run_local_limit(cfg: RunConfig, out: Path) -> RunResult:
    """Mollified quantum correlations with eps_tau -> 0 against the local classical one."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    corr = build_correlation(cfg, spec, local_potential(grid, cfg.coupling))
    _, ensemble = gibbs_ensemble(cfg, grid, spec, corr.potential)
    report = local_limit_sweep(
        corr,
        cfg.tau_schedule,
        ensemble,
        build_params(cfg),
        spec,
        base=cfg.mollifier_base,
        exponent=cfg.local_exponent,
        N_max=cfg.n_max,
        tail_tol=cfg.tail_tol,
    )
    table = report.to_frame()
    result.tables["local_limit"] = table
    gaps = table["gap"].to_numpy()
    slack = 3.0 * float(table["classical_stderr"].iloc[0])
    result.check("final_gap_not_above_first", gaps[-1], gaps[0] + slack)
    return result


def run_mollifier_sweep(cfg: RunConfig, out: Path) -> RunResult:
    """sup_t ||u^eps - u||_{L^2} along the epsilon schedule."""
    result = RunResult()
    grid = build_grid(cfg)
    phi0 = random_sobolev_field(grid, cfg.sobolev_s, cfg.seed, cfg.mass_target)
    report = mollifier_convergence(phi0, cfg.epsilon_schedule, cfg.t_final, build_params(cfg), grid, cfg.mollifier_base, cfg.coupling)
    table = report.table
    result.tables["mollifier_sweep"] = table
    result.summary["fitted_slope"] = report.slope
    errors = table["sup_error"].to_numpy()
    if len(errors) >= 2:
        growth = float(np.max(errors[1:] / errors[:-1]))
        result.check("sup_error_decreasing", growth, 1.0)
        constants = table["rate_constant"].to_numpy()
        drift = float(constants[-1] / np.max(constants[:-1]))
        result.check("rate_constant_bounded", drift, _threshold(cfg, 1.2))
    return result


def run_dyson_check(cfg: RunConfig, out: Path) -> RunResult:
    """Truncated iterated-commutator series against direct evolution on both sides."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    potential = build_potential(cfg, grid)
    W = two_body_kernel(potential)
    rng = np.random.default_rng([cfg.seed, OBSERVABLE_STREAM])
    xi = build_observable(cfg.observable.split(";")[0], spec, rng)
    series = dyson_coefficients(
        xi, cfg.t_final, cfg.order, cfg.quadrature_order, W=W, spectrum=spec, cutoff=cfg.number_cutoff
    )
    result.summary.update(convergence_radius=series.radius, ratio_bound=series.ratio_bound, w_norm=series.w_norm)

    frames, remainders = [], []
    for tau in cfg.tau_schedule:
        n_restrict = int(np.floor(cfg.number_cutoff * tau))
        N_max = cfg.n_max if cfg.n_max is not None else max(n_restrict, xi.p + cfg.order)
        basis = build_basis(spec.M, N_max)
        hamiltonians = build_hamiltonians(spec, potential, tau, basis)
        report = dyson_quantum_check(series, tau, hamiltonians, basis)
        frame = report.table.copy()
        frame.insert(0, "tau", tau)
        frame["fitted_ratio"] = report.ratio
        frames.append(frame)
        remainders.append(float(report.table["remainder"].iloc[-1]))
        result.check(f"term_ratio_tau_{tau:g}", report.ratio, 1.2 * report.ratio_bound)
    result.tables["dyson_quantum"] = pd.concat(frames, ignore_index=True)
    scaling = remainder_scaling(cfg.tau_schedule, remainders)
    result.tables["dyson_remainder_scaling"] = scaling
    for tau, growth in zip(scaling["tau"], scaling["halving_growth"]):
        if np.isfinite(growth):
            result.check(f"remainder_doubles_below_tau_{tau:g}", abs(growth - 2.0), 0.6, detail=f"growth {growth:.4g} when tau halves")
    identity_error = first_order_operator_error(xi, W, cfg.tau_schedule[0], build_basis(spec.M, ORDER_ONE_N_MAX))
    result.check("quantum_first_order_identity", identity_error, 1e-12)

    sampler = FreeFieldSampler(grid, spec, cfg.seed)
    samples = sample_free_fields(sampler, min(cfg.ensemble_size, 256))
    classical = dyson_classical_check(series, samples, potential, build_params(cfg))
    result.tables["dyson_classical"] = pd.DataFrame({
        "order": np.arange(series.L + 1),
        "max_error": classical.errors_by_order,
    })
    result.summary["classical_samples_used"] = classical.samples_used
    relative = first_order_check(xi, W, spec, samples, potential)
    result.check("first_order_generator", relative, _threshold(cfg, 1e-5))
    return result


def run_partition_ratio(cfg: RunConfig, out: Path) -> RunResult:
    """Free partition-function ratio: product formula, Fock trace and tau -> infinity limit."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    nu = cfg.nu
    limit = partition_ratio_limit(spec, nu)
    rows, trace_error = [], 0.0
    for tau in cfg.tau_schedule:
        product = partition_ratio(spec, nu, tau)
        N_max = size_cutoff(spec, 0.0, tau, cfg.tail_tol)
        row = {"tau": tau, "product": product, "limit": limit, "gap": abs(product - limit), "n_max": N_max, "trace": np.nan}
        if fock_dimension(spec.M, N_max) <= MAX_FOCK_DIMENSION // 2:
            row["trace"] = partition_ratio_trace(spec, nu, tau, build_basis(spec.M, N_max))
            trace_error = max(trace_error, abs(row["trace"] - product))
        rows.append(row)
    table = pd.DataFrame(rows)
    result.tables["partition_ratio"] = table
    result.check("product_vs_trace", trace_error, _threshold(cfg, 1e-9), passed=bool(table["trace"].notna().any() and trace_error <= _threshold(cfg, 1e-9)))
    ratios = doubling_ratios(cfg.tau_schedule, table["gap"].to_numpy())
    if ratios:
        last = ratios[-1][1]
        result.check("gap_halves_at_largest_tau", abs(last - 0.5), 0.05, detail=f"ratio {last:.6g}")

    sampler = FreeFieldSampler(grid, spec, cfg.seed)
    samples = sample_free_fields(sampler, cfg.ensemble_size)
    values = np.exp(-nu * masses(samples))
    mc = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else np.inf
    exact = gaussian_partition_ratio(spec, nu)
    result.summary.update(monte_carlo=mc, monte_carlo_stderr=stderr, gaussian_ratio=exact)
    result.check("monte_carlo_partition_zscore", abs(mc - exact) / stderr, 3.0)
    return result


def run_tail_bound(cfg: RunConfig, out: Path) -> RunResult:
    """Correlations restricted to large mass decay as the cutoff doubles."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    corr = build_correlation(cfg, spec, build_potential(cfg, grid))
    _, ensemble = gibbs_ensemble(cfg, grid, spec, corr.potential)
    tau = cfg.tau_schedule[0]
    N_max = cfg.n_max if cfg.n_max is not None else size_cutoff(spec, 0.0, tau, cfg.tail_tol)
    table = tail_bound_check(corr, cfg.cutoff_schedule, ensemble, build_params(cfg), tau, spec, N_max)
    result.tables["tail_bound"] = table
    cutoffs = list(table["cutoff"])
    resolved = table["classical"] > 3.0 * table["classical_stderr"]
    for side, mask in (("classical", resolved.to_numpy()), ("quantum", (table["quantum"] > 1e-13).to_numpy())):
        values = np.where(mask, table[side].to_numpy(), 0.0)
        ratios = [r for c, r in doubling_ratios(cutoffs, values) if mask[cutoffs.index(c) + 1]]
        worst = max(ratios, default=np.inf)
        result.check(f"{side}_tail_decay", worst, _threshold(cfg, 0.6), detail=f"ratios {[round(r, 4) for r in ratios]}")

    if cfg.p_schedule:
        by_p = tail_bound_check(corr, cfg.cutoff_schedule, ensemble, build_params(cfg), tau, spec, N_max, cfg.p_schedule)
        result.tables["tail_bound_by_p"] = by_p
        for p, rows in by_p.groupby("p", sort=True):
            resolved = (rows["classical"] > 3.0 * rows["classical_stderr"]).to_numpy()
            for side, mask in (("classical", resolved), ("quantum", (rows["quantum"] > 1e-13).to_numpy())):
                slope = tail_slope(rows["cutoff"].to_numpy()[mask], rows[side].to_numpy()[mask])
                if np.isfinite(slope):
                    result.summary[f"{side}_tail_slope_p{p}"] = slope
                    # value <= C / cutoff
                    result.check(f"{side}_tail_slope_p{p}", slope, -1.0)
    return result


def run_xsb(cfg: RunConfig, out: Path) -> RunResult:
    """X^{sigma,b}, Strichartz and Slobodeckij diagnostics on free and nonlinear fields."""
    result = RunResult()
    grid = build_grid(cfg)
    potential = build_potential(cfg, grid)
    rng = np.random.default_rng([cfg.seed, XSB_STREAM])
    Q = cfg.q_samples
    rows, plancherel = [], 0.0
    for i in range(cfg.n_fields):
        data = random_band_limited(grid, rng)
        free = free_spacetime_field(data, grid, Q)
        l2 = spacetime_l2_norm(free)
        plain = xsb_norm(free, 0.0, 0.0)
        plancherel = max(plancherel, abs(plain - l2) / l2)
        nonlinear = evolved_spacetime_field(data, potential, build_params(cfg), Q, RESONANT_WINDOW)
        rows.append({
            "field_id": i,
            "l2": l2,
            "xsb_free": xsb_norm(free, cfg.sigma, cfg.xsb_b),
            "embedding_free": embedding_ratio(free, cfg.sigma, cfg.xsb_b),
            "xsb_nonlinear": xsb_norm(nonlinear, cfg.sigma, cfg.xsb_b),
            "embedding_nonlinear": embedding_ratio(nonlinear, cfg.sigma, cfg.xsb_b),
        })
    result.tables["xsb_norms"] = pd.DataFrame(rows)
    result.check("plancherel", plancherel, _threshold(cfg, 1e-10))

    envelope = slobodeckij_envelope(grid, cfg.sigma)
    result.tables["slobodeckij_envelope"] = envelope
    spread = float(envelope["ratio"].max() / envelope["ratio"].min()) if len(envelope) else 1.0
    if len(envelope):
        result.summary["slobodeckij_continuum_spread"] = float(envelope["continuum"].max() / envelope["continuum"].min())
    result.check("slobodeckij_envelope_spread", spread, SLOBODECKIJ_SPREAD_LIMIT)

    strichartz = strichartz_envelope(grid, cfg.n_fields, Q, cfg.seed)
    strichartz["relative_change"] = np.abs(strichartz["ratio_2q"] / strichartz["ratio_q"] - 1.0)
    result.tables["strichartz_envelope"] = strichartz
    result.check("strichartz_grid_stability", strichartz["relative_change"].max(), 0.1)
    return result


def run_invariance(cfg: RunConfig, out: Path) -> RunResult:
    """m = 1 correlations do not depend on time on either side."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    potential = build_potential(cfg, grid)
    rng = np.random.default_rng([cfg.seed, OBSERVABLE_STREAM])
    xi = build_observable(cfg.observable.split(";")[0], spec, rng)
    times = sorted(set(cfg.times))

    tau = cfg.tau_schedule[0]
    setup = quantum_setup(spec, potential, tau, cfg.n_max, cfg.tail_tol)
    quantum = [quantum_correlation(CorrelationSpec(((xi, t),), potential), setup.basis, setup.hamiltonians, tau) for t in times]

    _, ensemble = gibbs_ensemble(cfg, grid, spec, potential)
    states = evolve_to_times(ensemble.samples, times, potential, build_params(cfg))
    classical = [ratio_estimate(theta_values(xi, states[float(t)]), ensemble.weights) for t in times]

    result.tables["invariance"] = pd.DataFrame({
        "time": times,
        "quantum": quantum,
        "classical": [c.value for c in classical],
        "classical_stderr": [c.stderr for c in classical],
    })
    scale = max(1.0, abs(quantum[0]))
    drift = max(abs(q - quantum[0]) for q in quantum) / scale
    result.check("quantum_time_independent", drift, _threshold(cfg, 1e-12))
    worst = 0.0
    for i in range(len(classical)):
        for j in range(i + 1, len(classical)):
            spread = np.hypot(classical[i].stderr, classical[j].stderr)
            if spread > 0:
                worst = max(worst, abs(classical[i].value - classical[j].value) / spread)
    result.check("classical_time_independent_zscore", worst, 3.0)
    return result


def run_flow_quality(cfg: RunConfig, out: Path) -> RunResult:
    """Plane-wave accuracy, mass conservation, second-order energy error and reversibility."""
    result = RunResult()
    grid = build_grid(cfg)
    potential = build_potential(cfg, grid)
    t = cfg.t_final
    result.summary["spectral_tail"] = spectral_tail(grid)
    dts = sorted(cfg.dt_schedule, reverse=True)
    finest = FlowParams(dt=dts[-1])

    k = min(1, grid.K)
    numeric = evolve(plane_wave(grid, k, 1.0), t, potential, finest).coeffs
    exact = plane_wave_solution(grid, k, 1.0, t, potential).coeffs
    result.check("plane_wave_error", np.max(np.abs(numeric - exact)), _threshold(cfg, 1e-8))

    phi0 = random_sobolev_field(grid, cfg.sobolev_s, cfg.seed, cfg.mass_target)
    rows = []
    for dt in dts:
        report = trajectory(phi0, t, potential, FlowParams(dt=dt, record_interval=1))
        rows.append({"dt": dt, "mass_drift": report.mass_drift, "energy_drift": report.energy_drift})
    table = pd.DataFrame(rows)
    result.tables["flow_quality"] = table
    result.check("mass_drift", table["mass_drift"].max(), 1e-10)
    ratios = [a / b for a, b in zip(table["energy_drift"], table["energy_drift"][1:]) if b > 0]
    if ratios:
        in_range = all(3.5 <= r <= 4.5 for r in ratios)
        result.check("energy_drift_order", ratios[-1], 4.5, passed=in_range, detail=f"ratios {[round(r, 3) for r in ratios]}")

    forward = evolve(phi0, t, potential, finest)
    back = evolve(forward, -t, potential, finest)
    result.check("reversibility", np.max(np.abs(back.coeffs - phi0.coeffs)), 1e-8)
    return result


def normal_ordered_lift(xi: Observable, tau: float, b_star: List[FockOperator], b: List[FockOperator], cache: Dict) -> FockOperator:
    """tau^-p sum xi_{k,l} b*_{k1}..b*_{kp} b_{l1}..b_{lp} built from ladder operators."""
    digits = tensor_digits(xi.M, xi.p)
    total = None
    for row, left in enumerate(digits):
        for col, right in enumerate(digits):
            entry = xi.kernel[row, col]
            if entry == 0:
                continue
            key = (tuple(left), tuple(right))
            if key not in cache:
                op = b_star[left[0]]
                for k in left[1:]:
                    op = op @ b_star[k]
                for l in right:
                    op = op @ b[l]
                cache[key] = op
            term = cache[key] * (entry / tau**xi.p)
            total = term if total is None else total + term
    return total


def run_operator_algebra(cfg: RunConfig, out: Path) -> RunResult:
    """Exact identities of the truncated Fock realization on small random kernels."""
    result = RunResult()
    M = 2
    N_max = cfg.n_max if cfg.n_max is not None else 3
    tau = cfg.tau_schedule[0] if cfg.tau_schedule else 2.0
    basis = build_basis(M, N_max)
    rng = np.random.default_rng([cfg.seed, ALGEBRA_STREAM])
    lambdas = np.array([cfg.kappa, cfg.kappa + 4.0 * np.pi**2])
    spec = Spectrum(modes=np.arange(M), lambdas=lambdas)
    eye = np.eye(M)

    def entry_error(A: FockOperator, B: FockOperator) -> float:
        diff = (A - B).to_dense()
        return float(np.max(np.abs(diff))) / max(1.0, float(np.max(np.abs(A.to_dense()))))

    ccr = 0.0
    identity = identity_operator(basis)
    for j in range(M):
        for k in range(M):
            lhs = annihilation(eye[j], basis) @ creation(eye[k], basis) - creation(eye[k], basis) @ annihilation(eye[j], basis)
            target = identity * float(j == k)
            ccr = max(ccr, float(np.max(np.abs((lhs - target).restrict(N_max - 1).to_dense()))))
    result.check("ccr_below_cutoff", ccr, 1e-12)

    b_star = [creation(eye[k], basis) for k in range(M)]
    b = [annihilation(eye[k], basis) for k in range(M)]
    ladder = {}
    product_err = commutator_err = norm_ratio = normal_err = block_err = free_err = 0.0
    H_free = diagonal_operator(lambda n, states: states @ lambdas / tau, basis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        interaction = lift_operator(random_hermitian(2, M, rng), tau, basis) * 0.5
        H_full = H_free + interaction
        for _ in range(cfg.n_random):
            p, q = (int(x) for x in rng.integers(1, 3, size=2))
            xi, eta = random_kernel(p, M, rng), random_kernel(q, M, rng)
            A, B = lift_operator(xi, tau, basis), lift_operator(eta, tau, basis)
            prod = A @ B
            expansion = None
            commutator = None
            for r in range(min(p, q) + 1):
                c = comb(p, r) * comb(q, r) * factorial(r) / tau**r
                term = lift_operator(star_product(xi, eta, r), tau, basis) * c
                expansion = term if expansion is None else expansion + term
                if r >= 1:
                    bterm = lift_operator(bracket(xi, eta, r), tau, basis) * c
                    commutator = bterm if commutator is None else commutator + bterm
            product_err = max(product_err, entry_error(prod, expansion))
            if commutator is not None:
                commutator_err = max(commutator_err, entry_error(A.commutator(B), commutator))

            h = random_hermitian(p, M, rng)
            lifted = lift_operator(h, tau, basis)
            h_norm = operator_norm(h)
            for n in range(p, N_max + 1):
                bound = (n / tau) ** p * h_norm
                norm_ratio = max(norm_ratio, np.linalg.norm(lifted.block(n, n), ord=2) / bound)
                block_err = max(block_err, float(np.max(np.abs(lifted.block(n, n) - sector_block(h, n, tau)))))

            s = float(rng.uniform(-1.0, 1.0))
            free_err = max(free_err, entry_error(lift_operator(free_evolve_kernel(h, s, spec), tau, basis), heisenberg_evolve(lifted, s, tau, H_free)))

            normal_err = max(normal_err, entry_error(lifted, normal_ordered_lift(h, tau, b_star, b, ladder)))

    isometry = 0.0
    for _ in range(5):
        A = lift_operator(random_hermitian(1, M, rng), tau, basis)
        evolved = heisenberg_evolve(A, float(rng.uniform(-2.0, 2.0)), tau, H_full)
        isometry = max(isometry, abs(restrict_norm(evolved) - restrict_norm(A)))

    rows = [
        ("lift_product_expansion", product_err, 1e-12),
        ("lift_commutator_expansion", commutator_err, 1e-12),
        ("lift_norm_bound", norm_ratio, 1.0 + 1e-8),
        ("lift_vs_normal_ordered", normal_err, 1e-12),
        ("lift_vs_symmetric_sector", block_err, 1e-12),
        ("free_evolution_of_kernels", free_err, 1e-12),
        ("heisenberg_isometry", isometry, 1e-10),
    ]
    for name, value, threshold in rows:
        result.check(name, value, threshold)
    result.tables["operator_algebra"] = pd.DataFrame(
        [{"check": "ccr_below_cutoff", "value": ccr, "threshold": 1e-12}]
        + [{"check": name, "value": value, "threshold": threshold} for name, value, threshold in rows]
    )
    if cfg.dump_operators:
        result.tables["h_full"] = operator_frame(H_full)
    return result


# (conjugated modes, unconjugated modes) of the sampled free moments
WICK_MONOMIALS: Tuple[Tuple[Tuple[int, ...], Tuple[int, ...]], ...] = (
    ((0,), (0,)),
    ((1,), (1,)),
    ((-1,), (-1,)),
    ((0,), (1,)),
    ((0, 0), (0, 0)),
    ((0, 1), (0, 1)),
    ((1, -1), (0, 0)),
    ((0, 0), (0,)),
    ((0, 0, 0), (0, 0, 0)),
    ((-1, 0, 1), (-1, 0, 1)),
)


def run_wick_oracles(cfg: RunConfig, out: Path) -> RunResult:
    """Free moments on both sides against their pairing formulas."""
    result = RunResult()
    grid = build_grid(cfg)
    spec = spectrum(grid)
    K = grid.K
    nu = cfg.nu
    sampler = FreeFieldSampler(grid, spec, cfg.seed, nu)
    samples = sample_free_fields(sampler, cfg.ensemble_size)
    rows, worst_z = [], 0.0
    for conj_modes, plain_modes in WICK_MONOMIALS:
        if any(abs(k) > K for k in conj_modes + plain_modes):
            continue
        values = np.ones(len(samples), dtype=complex)
        for k in conj_modes:
            values = values * samples[:, k + K].conj()
        for k in plain_modes:
            values = values * samples[:, k + K]
        mean = values.mean()
        stderr = float(np.sqrt(values.real.var(ddof=1) + values.imag.var(ddof=1)) / np.sqrt(len(values)))
        exact = wick_moment_general(conj_modes, plain_modes, spec, nu)
        z = abs(mean - exact) / stderr if stderr > 0 else 0.0
        worst_z = max(worst_z, z)
        rows.append({
            "conjugated": " ".join(map(str, conj_modes)),
            "unconjugated": " ".join(map(str, plain_modes)),
            "degree": len(conj_modes) + len(plain_modes),
            "sampled": mean,
            "stderr": stderr,
            "exact": exact,
            "zscore": z,
        })
    result.tables["classical_moments"] = pd.DataFrame(rows)
    result.check("classical_moments_zscore", worst_z, _threshold(cfg, 4.0))

    rng = np.random.default_rng([cfg.seed, OBSERVABLE_STREAM])
    observables = [mode_projector(i, spec.M) for i in range(spec.M)] + [identity_observable(2, spec.M), random_hermitian(2, spec.M, rng)]
    qrows, worst = [], 0.0
    free = free_potential(grid)
    for tau in cfg.tau_schedule:
        N_max = cfg.n_max if cfg.n_max is not None else size_cutoff(spec, nu, tau, cfg.tail_tol)
        basis = build_basis(spec.M, N_max)
        hamiltonians = build_hamiltonians(spec, free, tau, basis)
        G = quantum_green_function(spec, nu, tau)
        tail = number_tail(spec, nu, tau, N_max)
        for xi in observables:
            value = grand_canonical_expectation(lift_operator(xi, tau, basis), hamiltonians.H_full, tau, nu=nu)
            exact = wick_trace(xi, G)
            error = abs(value - exact) / max(1.0, abs(exact))
            worst = max(worst, error)
            qrows.append({"tau": tau, "observable": xi.label, "p": xi.p, "fock": value, "wick": exact, "error": error, "n_max": N_max, "number_tail": tail})
    result.tables["quantum_moments"] = pd.DataFrame(qrows)
    result.check("quantum_wick", worst, _threshold(cfg, 1e-10))
    return result


RUNNERS: Dict[str, Runner] = {
    "sample": run_sample,
    "evolve": run_evolve,
    "correlate-classical": run_correlate_classical,
    "correlate-quantum": run_correlate_quantum,
    "tau-sweep": run_tau_sweep,
    "local-limit": run_local_limit,
    "mollifier-sweep": run_mollifier_sweep,
    "dyson-check": run_dyson_check,
    "partition-ratio": run_partition_ratio,
    "tail-bound": run_tail_bound,
    "xsb": run_xsb,
    "invariance": run_invariance,
    "flow-quality": run_flow_quality,
    "operator-algebra": run_operator_algebra,
    "wick-oracles": run_wick_oracles,
}


# ============================================================================
# PRESETS
# ============================================================================

def _powers(base: int, first: int, last: int) -> str:
    step = 1 if last >= first else -1
    return ",".join(f"{base}^{e}" for e in range(first, last + step, step))


PRESETS: Dict[str, Tuple[str, str, Dict[str, Any]]] = {
    "free-convergence": (
        "tau-sweep",
        "Free single mode: quantum number density against 1/lambda, gap halves per tau doubling",
        dict(grid_k=0, grid_p=4, kappa=1.0, potential="free", observable="number", times="0",
             tau_schedule="4,8,16,32,64,128,256", tail_tol=1e-16),
    ),
    "interacting-tau-sweep": (
        "tau-sweep",
        "Two-time correlation of a single interacting mode converging to the classical value",
        dict(grid_k=0, grid_p=4, kappa=1.0, potential="constant", coupling=1.0, observable="number",
             times="0,0.5", tau_schedule="8,16,32,64", ensemble_size=200_000, dt=1e-3),
    ),
    "invariance": (
        "invariance",
        "Time independence of one-factor correlations in both Gibbs states",
        dict(grid_k=1, grid_p=8, kappa=10.0, potential="cosine", coupling=1.0, observable="random:1",
             times="0,0.5,1", tau_schedule="4", ensemble_size=20_000, dt=2e-3, tail_tol=1e-10),
    ),
    "dyson-order": (
        "dyson-check",
        "Iterated-commutator series: geometric term decay and first-order generator",
        dict(grid_k=1, grid_p=8, kappa=10.0, potential="cosine", coupling=1.0, observable="random:1",
             t_final=0.01, order=3, quadrature_order=6, number_cutoff=1.0, tau_schedule="4,8",
             ensemble_size=256),
    ),
    "mollifier-rate": (
        "mollifier-sweep",
        "Mollified flows approach the local flow as epsilon shrinks",
        dict(grid_k=16, grid_p=1024, kappa=1.0, potential="local", coupling=1.0, mollifier_base="triangle",
             epsilon_schedule=_powers(2, -2, -7),
             t_final=1.0, dt=1e-3, sobolev_s=0.375, mass_target=1.0),
    ),
    "partition-ratio": (
        "partition-ratio",
        "Free partition ratio: product formula, Fock trace, Gaussian limit",
        dict(grid_k=1, grid_p=8, kappa=10.0, nu=1.0, tau_schedule=",".join(str(2**e) for e in range(13)),
             tail_tol=1e-12, ensemble_size=100_000),
    ),
    "tail-bound": (
        "tail-bound",
        "Large-mass tails of correlations decay as the cutoff doubles",
        dict(grid_k=0, grid_p=4, kappa=1.0, potential="constant", coupling=0.5, observable="number",
             times="0,0.5", cutoff_schedule="0.5,1,2,4", p_schedule="1,2", tau_schedule="8", ensemble_size=100_000),
    ),
    "xsb-envelope": (
        "xsb",
        "Plancherel, Slobodeckij and Strichartz envelopes of space-time norms",
        dict(grid_k=6, grid_p=64, kappa=1.0, potential="local", coupling=1.0, sigma=0.375, xsb_b=0.55,
             q_samples=128, n_fields=8, dt=1e-3),
    ),
    "flow-quality": (
        "flow-quality",
        "Integrator accuracy: plane wave, mass, energy order, reversibility",
        dict(grid_k=2, grid_p=16, kappa=1.0, potential="local", coupling=1.0, dt_schedule="0.002,0.001",
             t_final=1.0, sobolev_s=1.0, mass_target=1.0),
    ),
    "local-limit": (
        "local-limit",
        "Mollified quantum correlations against the local classical correlation",
        dict(grid_k=1, grid_p=16, kappa=10.0, potential="local", coupling=1.0, mollifier_base="triangle",
             observable="projector:0;projector:1", times="0,0.25", tau_schedule="2,4,8",
             ensemble_size=20_000, dt=2e-3, tail_tol=1e-10, local_exponent=0.25),
    ),
    "operator-algebra": (
        "operator-algebra",
        "CCR, product and commutator expansions, lift bounds and normal ordering",
        dict(n_max=3, tau_schedule="2", n_random=50),
    ),
    "wick-oracles": (
        "wick-oracles",
        "Free classical and quantum moments against pairing formulas",
        dict(grid_k=1, grid_p=8, kappa=10.0, nu=0.5, tau_schedule="2,4,8", ensemble_size=100_000, tail_tol=1e-14),
    ),
}


def list_presets() -> List[PresetInfo]:
    return [PresetInfo(name=name, experiment=experiment, description=description) for name, (experiment, description, _) in PRESETS.items()]


def preset_defaults(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; known: {', '.join(PRESETS)}")
    experiment, _, values = PRESETS[name]
    return {"experiment": experiment, "preset": name, **values}


# ============================================================================
# ORCHESTRATION
# ============================================================================

def run_experiment(cfg: RunConfig, output_dir: Optional[str | Path] = None) -> Tuple[RunManifest, int]:
    """Run, write tables and manifest, and return the manifest with the exit code.

    ConfigError propagates (exit code 2 at the CLI); other domain errors are
    recorded in the manifest and give exit code 1; anything else is recorded
    and re-raised.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    runner = RUNNERS.get(cfg.experiment)
    if runner is None:
        raise ConfigError(f"experiment: unknown experiment {cfg.experiment!r}")
    config_hash = cfg.signature()
    messages.emit("info", f"running {cfg.experiment}", topic=messages.Topics.run_started, preset=cfg.preset, config_hash=config_hash[:12])
    started = time.perf_counter()
    result, exception = RunResult(), None
    try:
        result = runner(cfg, out)
    except ConfigError:
        raise
    except NLSQError as e:
        exception = exception_to_model(e, stage=cfg.experiment)
        messages.error(f"{type(e).__name__}: {e}")
    except Exception as e:
        exception = exception_to_model(e, stage=cfg.experiment)
        _write(cfg, out, config_hash, result, exception, exit_code=1)
        raise

    failed = [c for c in result.checks if not c.passed]
    exit_code = 1 if exception is not None or (cfg.checks and failed) else 0
    manifest = _write(cfg, out, config_hash, result, exception, exit_code)
    for c in result.checks:
        messages.emit("info" if c.passed else "warning", f"check {c.name}: {'pass' if c.passed else 'FAIL'}", topic=messages.Topics.check, detail=c.detail)
    messages.finished(cfg.experiment, time.perf_counter() - started, exit_code, len(result.checks) - len(failed), len(failed), exception)
    return manifest, exit_code


def _write(cfg: RunConfig, out: Path, config_hash: str, result: RunResult, exception, exit_code: int) -> RunManifest:
    tables = [write_table(frame, out, name) for name, frame in result.tables.items()]
    manifest = RunManifest(
        experiment=cfg.experiment,
        preset=cfg.preset,
        config=cfg.model_dump(mode="json"),
        config_hash=config_hash,
        versions=package_versions(),
        checks=result.checks,
        tables=tables,
        artifacts=result.artifacts,
        summary=jsonable(result.summary),
        exit_code=exit_code,
        exception=exception.model_dump() if exception is not None else None,
    )
    write_manifest(manifest, out)
    return manifest
