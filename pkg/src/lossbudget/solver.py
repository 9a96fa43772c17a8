"""Participation-matrix inversion for loss factors."""
import logging
import math
from dataclasses import replace

import numpy as np

from lossbudget.exceptions import (EmptyInputError, LabelMismatchError, RankDeficientError,
                                   ShapeMismatchError, UnboundedIntervalError, UnitMismatchError,
                                   ZeroParticipationError)
from lossbudget.models import InverseQVector, LossFactorEstimate, PowerCurve, SolveResult
from lossbudget.tls import eval_tls, tls_gradient

logger = logging.getLogger(__name__)


def check_units(p, estimates):
    """Every estimate must name a mechanism of ``p`` and carry the matching loss-factor unit."""
    for est in estimates:
        if est.label not in p.mechanism_labels:
            raise LabelMismatchError(f'loss factor {est.label!r} has no participation column')
        expected = p.gamma_unit(est.label)
        if est.unit != expected:
            raise UnitMismatchError(
                f'loss factor {est.label!r} is in {est.unit}, participation needs {expected}')


def _mode_rows(p, k):
    return [p.mode_index(m) for m in k.mode_labels]


def subtract_known(k, p, known):
    """
    Remove the contributions of known loss factors from inverse-Q values.

    Bounded estimates are subtracted as the middle of [0, bound] with half the
    bound as sigma. A known loss factor enters every mode it participates in,
    so the result carries the full covariance of the reduced values. Modes
    left with a non-positive remainder are listed in ``negative_modes``.
    """
    known = list(known)
    check_units(p, known)
    rows = _mode_rows(p, k)
    values = k.values.copy()
    covariance = k.covariance_matrix().copy()
    for est in known:
        gamma, sigma = est.central()
        column = p.column(est.label)[rows]
        values -= column * gamma
        covariance += np.outer(column, column) * sigma ** 2
    negative = tuple(m for m, v in zip(k.mode_labels, values) if v <= 0)
    if negative:
        logger.warning('known contributions exceed the measured loss of %s', ', '.join(negative))
    return InverseQVector(k.mode_labels, values, np.sqrt(np.diag(covariance)), nbar=k.nbar,
                          negative_modes=negative, covariance=covariance)


def bound_or_value(gamma):
    """
    Keep a solved loss factor, or turn it into an upper bound.

    A value below its own sigma, or not positive, becomes the bound
    max(value, 0) + sigma; the central value is kept for reference.
    """
    if gamma.value is None or gamma.bounded:
        return gamma
    if gamma.value <= 0 or (gamma.sigma > 0 and gamma.value < gamma.sigma):
        bound = max(gamma.value, 0.0) + gamma.sigma
        logger.info('%s is only bounded: < %.3g', gamma.label, bound)
        return replace(gamma, upper_bound=bound)
    return gamma


def _unknown_mechanisms(p, modes, known, mechanisms):
    known_labels = {e.label for e in known}
    if mechanisms is None:
        mechanisms = [m for m in p.mechanism_labels if m not in known_labels]
    mechanisms = list(mechanisms)
    overlap = known_labels.intersection(mechanisms)
    if overlap:
        raise LabelMismatchError(f'{sorted(overlap)} are both known and solved for')
    sub = p.select(modes=modes)
    ignored = [m for m in sub.mechanism_labels
               if m not in known_labels and m not in mechanisms and np.any(sub.column(m) > 0)]
    if ignored:
        raise LabelMismatchError(
            f'mechanisms {ignored} participate but are neither known nor solved for')
    return mechanisms


def _estimator(matrix, covariance):
    """Linear map from reduced inverse Q to loss factors."""
    m, n = matrix.shape
    if m == n:
        return np.linalg.inv(matrix)
    try:
        np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(matrix)
    weight = np.linalg.inv(covariance)
    return np.linalg.solve(matrix.T @ weight @ matrix, matrix.T @ weight)


def _linear_solve(matrix, kappa, covariance):
    """
    Generalized least squares with first-order propagation of ``covariance``.

    Square systems are solved exactly. With a singular covariance the fit is
    unweighted, and with no uncertainty at all the covariance is scaled by the
    residual variance.
    """
    m, n = matrix.shape
    operator = _estimator(matrix, covariance)
    gamma = np.linalg.solve(matrix, kappa) if m == n else operator @ kappa
    if m > n and not np.any(covariance):
        residual = matrix @ gamma - kappa
        return gamma, operator @ operator.T * float(residual @ residual) / (m - n)
    return gamma, operator @ covariance @ operator.T


def solve_loss_factors(p, k, mechanisms=None, known=(), mc_samples=0, seed=0, bound=True):
    """
    Solve P Gamma = K for the unknown loss factors.

    Args:
        p (ParticipationTable): participations, rows matched to ``k`` by mode label
        k (InverseQVector): measured inverse Q per mode
        mechanisms (list, optional): mechanisms to solve for; defaults to every
            mechanism not in ``known``
        known (list): LossFactorEstimates subtracted before the solve
        mc_samples (int): when positive, uncertainties come from resampling K and
            the known loss factors from Gaussians instead of linear propagation
        seed (int): seed of the Monte Carlo generator
        bound (bool): route weak or negative results through :func:`bound_or_value`

    Returns:
        SolveResult: estimates, covariance and condition number
    """
    known = list(known)
    mechanisms = _unknown_mechanisms(p, k.mode_labels, known, mechanisms)
    if not mechanisms:
        raise ShapeMismatchError('nothing to solve for')
    matrix = p.select(mechanisms=mechanisms, modes=k.mode_labels).values
    m, n = matrix.shape
    if m < n:
        raise ShapeMismatchError(f'{m} modes cannot determine {n} loss factors')
    rank = np.linalg.matrix_rank(matrix)
    if rank < n:
        raise RankDeficientError(f'participation matrix has rank {rank}, {n} needed')
    condition = float(np.linalg.cond(matrix))
    logger.debug('solving %d modes for %s, condition number %.3g', m, mechanisms, condition)

    reduced = subtract_known(k, p, known)
    gamma, covariance = _linear_solve(matrix, reduced.values, reduced.covariance)
    method = 'linear'

    if mc_samples > 0:
        rng = np.random.default_rng(seed)
        rows = _mode_rows(p, k)
        if k.covariance is None:
            kappa = k.values + k.sigmas * rng.standard_normal((mc_samples, m))
        else:
            kappa = rng.multivariate_normal(k.values, k.covariance, size=mc_samples)
        for est in known:
            value, sigma = est.central()
            draws = value + sigma * rng.standard_normal(mc_samples)
            kappa -= np.outer(draws, p.column(est.label)[rows])
        if m == n:
            samples = np.linalg.solve(matrix, kappa.T).T
        else:
            samples = kappa @ _estimator(matrix, reduced.covariance).T
        covariance = np.atleast_2d(np.cov(samples, rowvar=False))
        method = 'monte-carlo'

    sigmas = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    estimates = []
    for label, value, sigma in zip(mechanisms, gamma, sigmas):
        est = LossFactorEstimate(label=label, value=float(value), sigma=float(sigma),
                                 unit=p.gamma_unit(label), provenance='solved')
        estimates.append(bound_or_value(est) if bound else est)
        logger.info('%s = %.4g ± %.2g %s', label, value, sigma, est.unit)
    return SolveResult(estimates=tuple(estimates), covariance=covariance,
                       condition_number=condition, method=method, nbar=k.nbar,
                       mode_labels=k.mode_labels)


def remainder_attribution(k_single, p, known, target_label):
    """
    Attribute whatever loss the known mechanisms leave unexplained to one mechanism.

    Returns:
        LossFactorEstimate: the remainder divided by the target participation, or
        an upper bound when nothing significant is left
    """
    if len(k_single.mode_labels) != 1:
        raise ShapeMismatchError('remainder attribution works on a single mode')
    mode = k_single.mode_labels[0]
    known = list(known)
    row = p.row(mode)
    known_labels = {e.label for e in known}
    if target_label in known_labels:
        raise LabelMismatchError(f'{target_label!r} is both known and the target')
    missing = [m for m, (value, _) in row.items()
               if value > 0 and m != target_label and m not in known_labels]
    if missing:
        raise LabelMismatchError(f'no loss factor known for {missing} in mode {mode!r}')
    p_target = p.value(mode, target_label)
    if p_target <= 0:
        raise ZeroParticipationError(f'{target_label!r} does not participate in mode {mode!r}')

    reduced = subtract_known(k_single, p, known)
    remainder, sigma = float(reduced.values[0]), float(reduced.sigmas[0])
    est = LossFactorEstimate(label=target_label, value=remainder / p_target,
                             sigma=sigma / p_target, unit=p.gamma_unit(target_label),
                             provenance='remainder')
    est = bound_or_value(est)
    logger.info('%s remainder in %s: %s', target_label, mode,
                f'< {est.upper_bound:.3g}' if est.bounded else f'{est.value:.4g} ± {est.sigma:.2g}')
    return est


def _interval(est):
    if est.upper_bound is not None or est.lower_bound is not None:
        low = -math.inf if est.lower_bound is None else est.lower_bound
        high = math.inf if est.upper_bound is None else est.upper_bound
        return low, high
    return est.value - est.sigma, est.value + est.sigma


def combine_transferred(values, label=None, provenance=None):
    """
    Combine several literature values of one loss factor.

    With any bound present the result is the mid-range of the interval all
    entries agree on, with the half-range as sigma. Otherwise it is the
    inverse-variance weighted mean.
    """
    values = list(values)
    if len(values) < 2:
        raise EmptyInputError(f'combining needs at least 2 entries, got {len(values)}')
    units = {v.unit for v in values}
    if len(units) != 1:
        raise UnitMismatchError(f'cannot combine loss factors in {sorted(units)}')
    label = label or values[0].label
    sources = [v.provenance.split(':', 1)[-1] for v in values]
    provenance = provenance or 'transferred:' + '+'.join(sources)

    if any(v.upper_bound is not None or v.lower_bound is not None for v in values):
        intervals = [_interval(v) for v in values]
        low = max(i[0] for i in intervals)
        high = min(i[1] for i in intervals)
        if low > high:
            logger.warning('%s: transferred intervals do not overlap; using their envelope', label)
            low = min(i[0] for i in intervals)
            high = max(i[1] for i in intervals)
        if math.isinf(high):
            raise UnboundedIntervalError(f'{label}: no upper limit among the transferred values')
        low = max(low, 0.0)
        value, sigma = 0.5 * (low + high), 0.5 * (high - low)
    else:
        central = np.array([v.value for v in values])
        sigmas = np.array([v.sigma for v in values])
        if np.all(sigmas > 0):
            weights = 1.0 / sigmas ** 2
            value = float(np.sum(weights * central) / np.sum(weights))
            sigma = float(1.0 / math.sqrt(np.sum(weights)))
        else:
            value = float(np.mean(central))
            sigma = float(np.std(central, ddof=1) / math.sqrt(central.size))
    logger.info('%s combined to %.4g ± %.2g', label, value, sigma)
    return LossFactorEstimate(label=label, value=value, sigma=sigma, unit=values[0].unit,
                              provenance=provenance)


def inverse_q_from_tls(tls_fits, nbar):
    """Inverse Q of every mode at ``nbar`` from its TLS fit, sigma from the fit covariance."""
    labels = tuple(tls_fits)
    values, sigmas = [], []
    for label in labels:
        fit = tls_fits[label]
        grad = tls_gradient(fit, nbar)
        values.append(eval_tls(fit, nbar))
        sigmas.append(math.sqrt(max(grad @ fit.covariance @ grad, 0.0)))
    return InverseQVector(labels, values, sigmas, nbar=nbar)


def loss_factor_power_curve(tls_fits, p, nbar_grid, mechanisms=None, known=()):
    """
    Solved loss factors as a function of photon number.

    Every mode's TLS fit is evaluated on the grid and the participation matrix
    is inverted at each point. Grid points outside any mode's fitted range are
    marked in ``extrapolated``.
    """
    nbar_grid = np.asarray(nbar_grid, dtype=float)
    values, sigmas, conditions, extrapolated = [], [], [], []
    labels = None
    for nbar in nbar_grid:
        k = inverse_q_from_tls(tls_fits, float(nbar))
        result = solve_loss_factors(p, k, mechanisms=mechanisms, known=known, bound=False)
        labels = result.labels
        values.append([e.value for e in result])
        sigmas.append([e.sigma for e in result])
        conditions.append(result.condition_number)
        outside = any(not fit.nbar_range[0] <= nbar <= fit.nbar_range[1]
                      for fit in tls_fits.values())
        extrapolated.append(outside)
    extrapolated = np.array(extrapolated, dtype=bool)
    if extrapolated.any():
        logger.warning('%d of %d grid points lie outside a fitted photon-number range',
                       int(extrapolated.sum()), extrapolated.size)
    return PowerCurve(nbar=nbar_grid, labels=labels, values=np.array(values),
                      sigmas=np.array(sigmas), condition_numbers=np.array(conditions),
                      extrapolated=extrapolated)
