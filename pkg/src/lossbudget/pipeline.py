"""End-to-end analysis: sweeps or traces in, solved loss factors and a budget out."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from lossbudget.budget import budget_to_frame, build_budget, render_budget_text
from lossbudget.exceptions import ConfigurationError, LabelMismatchError
from lossbudget.models import InverseQVector, PipelineResult
from lossbudget.participation import extrapolate_convergence, rescale_loss_factor
from lossbudget.resonance import fit_s21_resonance
from lossbudget.serializers import (AnalysisConfigSerializer, ConvergenceResultSerializer,
                                    LossBudgetSerializer, LossFactorSerializer,
                                    ParticipationTableSerializer, ResonanceFitSerializer,
                                    SolveReportSerializer, SyntheticScenarioSerializer,
                                    TlsFitSerializer, load)
from lossbudget.solver import inverse_q_from_tls, remainder_attribution, solve_loss_factors
from lossbudget.synthetic import generate_s21
from lossbudget.tls import fit_tls, tls_sweep_from_fits
from lossbudget.utils import (atomic_output_dir, dbm_to_watts, read_convergence_csv,
                              read_s21_csv, read_sweep_csv, write_frame, write_json)

logger = logging.getLogger(__name__)


def load_config(path):
    return load(AnalysisConfigSerializer, path)


def load_participations(path, convergence=(), tail_points=None):
    """
    Read a participation table, apply convergence overrides and collapse its groups.

    Each convergence entry replaces the raw table value of one mode and
    mechanism with the extrapolated p_inf of its series.

    Returns:
        tuple: (ParticipationTable, {(mode, mechanism): ConvergenceResult})
    """
    table = load(ParticipationTableSerializer, path)
    results = {}
    for entry in convergence:
        series = read_convergence_csv(entry['path'], dimension=entry.get('dimension', 3))
        result = extrapolate_convergence(series, entry.get('tail_points') or tail_points)
        key = (entry['mode'], entry['mechanism'])
        logger.info('%s/%s: table value %.4g replaced by %s', *key,
                    table.value(*key), result.p_infinity)
        table = table.with_value(*key, result.p_infinity.value)
        results[key] = result
    if table.groups:
        table = table.aggregate()
    return table, results


def load_library(path, corrections=None, mechanisms=None):
    """
    Read a loss-factor library.

    Args:
        corrections (dict, optional): ``{label: c}``; matching entries are
            divided by (1 + c) through :func:`rescale_loss_factor`
        mechanisms (list, optional): keep only entries with these labels
    """
    if path is None:
        return []
    library = load(LossFactorSerializer, path, many=True)
    corrections = corrections or {}
    library = [rescale_loss_factor(g, corrections[g.label]) if g.label in corrections else g
               for g in library]
    if mechanisms is not None:
        dropped = [g.label for g in library if g.label not in mechanisms]
        if dropped:
            logger.debug('library entries without a participation column: %s', dropped)
        library = [g for g in library if g.label in mechanisms]
    return library


def fit_traces(traces, workers=None):
    """Fit S21 traces concurrently; results keep the order of ``traces``."""
    traces = list(traces)
    if len(traces) < 2:
        return [fit_s21_resonance(t) for t in traces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fit_s21_resonance, traces))


def _trace_power(entry):
    if entry.get('input_power_w') is not None:
        return entry['input_power_w']
    if entry.get('power_dbm') is not None:
        return dbm_to_watts(entry['power_dbm'])
    return None


def measure_modes(config, seed=None):
    """
    Resonance and TLS fits for every mode the config measures.

    Sweep CSVs are fitted directly; trace files and synthetic scenarios go
    through the resonance fit first. A mode named by several sources takes
    the first of sweeps, traces, scenario.

    Returns:
        tuple: ({mode: [ResonanceFit]}, {mode: TlsFit}, SyntheticScenario or None)
    """
    resonance_fits, tls_fits = {}, {}
    for mode, path in config.sweeps.items():
        tls_fits[mode] = fit_tls(read_sweep_csv(path), mode=mode)

    for mode, entries in config.traces.items():
        if mode in tls_fits:
            continue
        traces = [read_s21_csv(e['path'], input_power=_trace_power(e), label=f'{mode}#{i}')
                  for i, e in enumerate(entries)]
        fits = fit_traces(traces)
        resonance_fits[mode] = fits
        tls_fits[mode] = fit_tls(tls_sweep_from_fits(fits), mode=mode)

    scenario = None
    if config.scenario is not None:
        scenario = load(SyntheticScenarioSerializer, config.scenario)
        if seed is not None:
            scenario = replace(scenario, seed=seed)
        for truth in scenario.modes:
            if truth.label in tls_fits:
                continue
            traces = [generate_s21(scenario, truth.label, float(n)) for n in scenario.nbar_grid]
            fits = fit_traces(traces)
            resonance_fits[truth.label] = fits
            tls_fits[truth.label] = fit_tls(tls_sweep_from_fits(fits), mode=truth.label)
    return resonance_fits, tls_fits, scenario


def inverse_q(modes, tls_fits, q_int, nbar):
    """
    Inverse Q of ``modes`` at ``nbar``.

    Modes with a TLS fit are evaluated from it; the others need a direct
    ``q_int`` entry ``[value]`` or ``[value, sigma]``.
    """
    values, sigmas = [], []
    for mode in modes:
        if mode in tls_fits:
            k = inverse_q_from_tls({mode: tls_fits[mode]}, nbar)
            values.append(k.values[0])
            sigmas.append(k.sigmas[0])
        elif mode in q_int:
            q, sigma = (list(q_int[mode]) + [0.0])[:2]
            values.append(1.0 / q)
            sigmas.append(sigma / q ** 2)
        else:
            raise ConfigurationError(f'no measurement for mode {mode!r}')
    return InverseQVector(tuple(modes), values, sigmas, nbar=nbar)


def solve_and_attribute(table, k, library, solve_for=(), remainder=None, mc_samples=0, seed=0):
    """
    Solve for ``solve_for`` and optionally attribute one mode's remainder.

    Library entries not being solved for are subtracted as known. The
    remainder step sees the library overridden by the solved values.

    Returns:
        tuple: (SolveResult or None, remainder estimate or None, {label: estimate})
    """
    gammas = {g.label: g for g in library}
    solve = None
    if solve_for:
        modes = [m for m in k.mode_labels if not remainder or m != remainder['mode']]
        known = [g for g in library if g.label not in solve_for]
        solve = solve_loss_factors(table, k.select(modes), mechanisms=list(solve_for),
                                   known=known, mc_samples=mc_samples, seed=seed)
        gammas.update({e.label: e for e in solve})

    estimate = None
    if remainder:
        mode, target = remainder['mode'], remainder['target']
        if mode not in k.mode_labels:
            raise LabelMismatchError(f'remainder mode {mode!r} has no measurement')
        row = table.row(mode)
        known = [g for label, g in gammas.items()
                 if label != target and row.get(label, (0.0, None))[0] > 0]
        estimate = remainder_attribution(k.select([mode]), table, known, target)
        gammas[target] = estimate
    return solve, estimate, gammas


def budget_for_mode(table, gammas, mode, omega, covariance=None):
    """Budget of ``mode`` from the participating entries of ``gammas``."""
    row = table.row(mode)
    used = [gammas[label] for label, (p, _) in row.items() if p > 0 and label in gammas]
    return build_budget(row, used, omega, mode=mode, covariance=covariance)


def _omega(config, resonance_fits, scenario):
    if config.omega is not None:
        return config.omega
    fits = resonance_fits.get(config.target_mode)
    if fits:
        return 2 * math.pi * sum(f.f0 for f in fits) / len(fits)
    if scenario is not None:
        for truth in scenario.modes:
            if truth.label == config.target_mode:
                return 2 * math.pi * truth.f0
    raise ConfigurationError(
        f'no frequency for target mode {config.target_mode!r}; set omega or frequency_hz')


def solve_report(k, solve, remainder, nbar):
    """JSON report of the measured inverse Q, the solve and the remainder attribution."""
    return {
        'nbar': nbar,
        'inverse_q': {} if k is None else {
            mode: {'value': float(v), 'sigma': float(s)}
            for mode, v, s in zip(k.mode_labels, k.values, k.sigmas)},
        'solve': None if solve is None else SolveReportSerializer(solve).data,
        'remainder': None if remainder is None else LossFactorSerializer(remainder).data,
    }


def write_artifacts(result, out):
    """Write every artifact of ``result`` into ``out``, all or nothing."""
    nbar = result.config.nbar
    with atomic_output_dir(out) as tmp:
        write_json(tmp / 'resonance_fits.json', {
            mode: ResonanceFitSerializer(fits, many=True).data
            for mode, fits in result.resonance_fits.items()})
        write_json(tmp / 'tls_fits.json', {
            mode: TlsFitSerializer(fit, context={'nbar': nbar}).data
            for mode, fit in result.tls_fits.items()})
        write_json(tmp / 'solve_report.json',
                   solve_report(result.inverse_q, result.solve, result.remainder, nbar))
        write_json(tmp / 'loss_factors.json',
                   LossFactorSerializer(result.loss_factors, many=True).data)
        write_json(tmp / 'budget.json', LossBudgetSerializer(result.budget).data)
        (tmp / 'budget.txt').write_text(render_budget_text(result.budget))
        write_frame(tmp / 'budget.csv', budget_to_frame(result.budget))
        write_json(tmp / 'config.json', AnalysisConfigSerializer(result.config).data)
        if result.convergence:
            write_json(tmp / 'convergence.json', [
                dict(ConvergenceResultSerializer(c).data, mode=mode, mechanism=mechanism)
                for (mode, mechanism), c in result.convergence.items()])
    logger.info('artifacts written to %s', out)
    return Path(out)


def run_pipeline(config, out=None, seed=None, nbar=None, mc_samples=None):
    """
    Run the whole analysis described by ``config``.

    ``seed``, ``nbar`` and ``mc_samples`` override the config values; a
    given ``seed`` also reseeds the synthetic scenario. With ``out`` every
    artifact is written there atomically.

    Returns:
        PipelineResult
    """
    overrides = {k: v for k, v in (('seed', seed), ('nbar', nbar), ('mc_samples', mc_samples))
                 if v is not None}
    if overrides:
        config = replace(config, **overrides)

    table, convergence = load_participations(config.participations, config.convergence,
                                             config.tail_points)
    library = load_library(config.loss_factors, config.surface_correction,
                           table.mechanism_labels)
    resonance_fits, tls_fits, scenario = measure_modes(config, seed=seed)

    measured = list(tls_fits) + [m for m in config.q_int if m not in tls_fits]
    modes = list(config.modes) or [m for m in table.mode_labels if m in measured]
    if config.remainder and config.remainder['mode'] not in modes:
        modes.append(config.remainder['mode'])
    k = inverse_q(modes, tls_fits, config.q_int, config.nbar) if modes else None
    if (config.solve_for or config.remainder) and k is None:
        raise ConfigurationError('solving needs at least one measured mode')

    solve, remainder, gammas = solve_and_attribute(
        table, k, library, config.solve_for, config.remainder,
        mc_samples=config.mc_samples, seed=config.seed)
    covariance = None if solve is None else (solve.labels, solve.covariance)
    budget = budget_for_mode(table, gammas, config.target_mode,
                             _omega(config, resonance_fits, scenario), covariance)

    result = PipelineResult(
        config=config, participations=table, inverse_q=k, budget=budget,
        loss_factors=tuple(gammas.values()), resonance_fits=resonance_fits,
        tls_fits=tls_fits, solve=solve, remainder=remainder, convergence=convergence)
    if out is not None:
        result.out = write_artifacts(result, out)
    return result
