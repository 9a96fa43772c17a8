"""Power-dependent two-level-system loss model."""
import logging
import math

import numpy as np
from scipy.optimize import least_squares

from lossbudget.exceptions import ConfigurationError, InsufficientSpanError, NonPositiveInputError
from lossbudget.models import PowerSweepPoint, Quantity, TlsFit
from lossbudget.resonance import photon_number

logger = logging.getLogger(__name__)

MIN_POINTS = 6
MIN_DECADES = 3.0
# n_c further than this many decades outside the measured range is flagged
NC_RANGE_DECADES = 2.0
NC_BOUND_DECADES = 6.0
BETA_BOUNDS = (1e-3, TlsFit.MAX_BETA)


def eval_tls(params, nbar):
    """Inverse internal Q at photon number ``nbar``: Q0^-1 + Q1^-1 / sqrt(1 + (n/n_c)^beta)."""
    nbar = np.asarray(nbar, dtype=float)
    if np.any(nbar < 0):
        raise NonPositiveInputError('photon number must be non-negative')
    value = params.q0_inverse + params.q1_inverse / np.sqrt(
        1.0 + (nbar / params.n_c) ** params.beta)
    return float(value) if value.ndim == 0 else value


def tls_gradient(params, nbar):
    """d(inverse Q)/d(q0_inverse, q1_inverse, n_c, beta) at ``nbar``."""
    ratio = nbar / params.n_c
    s = ratio ** params.beta
    h = (1.0 + s) ** -0.5
    dn_c = params.q1_inverse * params.beta * s / (2.0 * params.n_c * (1.0 + s) ** 1.5)
    dbeta = 0.0 if nbar == 0 else -0.5 * params.q1_inverse * s * math.log(ratio) / (1.0 + s) ** 1.5
    return np.array([1.0, h, dn_c, dbeta])


def qint_at(params, nbar):
    """Q_int at ``nbar`` with sigma propagated to first order through the fit covariance."""
    inverse = eval_tls(params, nbar)
    grad = tls_gradient(params, nbar)
    sigma_inverse = math.sqrt(max(grad @ params.covariance @ grad, 0.0))
    if inverse == 0:
        return Quantity(math.inf, 0.0)
    return Quantity(1.0 / inverse, sigma_inverse / inverse ** 2)


def qint_at_unity(params):
    return qint_at(params, 1.0)


def _check_span(nbar):
    if nbar.size < MIN_POINTS:
        raise InsufficientSpanError(
            f'sweep has {nbar.size} points, at least {MIN_POINTS} required')
    decades = math.log10(nbar.max() / nbar.min())
    if decades < MIN_DECADES:
        raise InsufficientSpanError(
            f'sweep spans {decades:.2f} decades of photon number, at least {MIN_DECADES} required')


def _initial_guess(nbar, q_int):
    top = nbar >= nbar.max() / 10.0
    bottom = nbar <= nbar.min() * 10.0
    g0 = 1.0 / np.mean(q_int[top])
    g1 = max(1.0 / np.mean(q_int[bottom]) - g0, 0.0)
    n_c = math.sqrt(nbar.min() * nbar.max())
    return g0, g1, n_c, 1.0


def fit_tls(sweep, mode=''):
    """
    Fit the TLS model to a power sweep.

    Residuals live in inverse-Q space and are weighted by sigma_q / Q^2.
    When any point carries no uncertainty the fit is unweighted and the
    covariance is scaled by the residual variance instead.

    Args:
        sweep (list): PowerSweepPoint instances, in any order
        mode (str): label carried into the result and the log

    Returns:
        TlsFit: parameters, covariance and the degenerate flag
    """
    points = sorted(sweep, key=lambda p: p.nbar)
    nbar = np.array([p.nbar for p in points])
    q_int = np.array([p.q_int for p in points])
    sigma_q = np.array([p.sigma_q for p in points])
    _check_span(nbar)

    kappa = 1.0 / q_int
    weighted = bool(np.all(sigma_q > 0))
    scale = kappa.max()
    sigma_kappa = sigma_q / q_int ** 2 if weighted else np.full_like(kappa, scale)

    g0, g1, n_c, beta = _initial_guess(nbar, q_int)
    logger.debug('%s: TLS initial guess Q0^-1 %.3g, Q1^-1 %.3g, n_c %.3g', mode, g0, g1, n_c)
    ln_lo = math.log(nbar.min()) - NC_BOUND_DECADES * math.log(10)
    ln_hi = math.log(nbar.max()) + NC_BOUND_DECADES * math.log(10)
    lower = [0.0, 0.0, ln_lo, BETA_BOUNDS[0]]
    upper = [np.inf, np.inf, ln_hi, BETA_BOUNDS[1]]

    def residual(x):
        model = scale * (x[0] + x[1] / np.sqrt(1.0 + (nbar / math.exp(x[2])) ** x[3]))
        return (model - kappa) / sigma_kappa

    result = least_squares(residual, [g0 / scale, g1 / scale, math.log(n_c), beta],
                           bounds=(lower, upper), method='trf', x_scale='jac',
                           ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=20000)
    x0, x1, ln_nc, beta = result.x
    n_c = math.exp(ln_nc)
    logger.debug('%s: TLS fit finished after %d evaluations (%s)', mode, result.nfev,
                 result.message)

    jac = result.jac
    rank = np.linalg.matrix_rank(jac)
    covariance_x = np.linalg.pinv(jac.T @ jac)
    if not weighted:
        dof = max(nbar.size - 4, 1)
        covariance_x *= float(np.sum(result.fun ** 2)) / dof
    transform = np.diag([scale, scale, n_c, 1.0])
    covariance = transform @ covariance_x @ transform

    fit = TlsFit(q0_inverse=float(x0 * scale), q1_inverse=float(x1 * scale), n_c=n_c,
                 beta=float(beta), covariance=covariance,
                 nbar_range=(float(nbar.min()), float(nbar.max())), mode=mode)

    reasons = []
    if rank < 4:
        reasons.append(f'rank-deficient Jacobian (rank {rank})')
    if fit.q1_inverse <= 2.0 * fit.sigma('q1_inverse'):
        reasons.append('no significant power dependence')
    lo, hi = fit.nbar_range
    if n_c < lo / 10 ** NC_RANGE_DECADES or n_c > hi * 10 ** NC_RANGE_DECADES:
        reasons.append(f'n_c {n_c:.3g} lies far outside the measured range')
    if reasons:
        fit.degenerate = True
        fit.reason = '; '.join(reasons)
        logger.warning('%s: degenerate TLS fit: %s', mode or 'sweep', fit.reason)
    logger.info('%s: Q0 %s, Q1 %s, n_c %.3g, beta %.3g', mode or 'sweep', fit.q0, fit.q1,
                n_c, fit.beta)
    return fit


def tls_sweep_from_fits(fits, powers=None):
    """
    Turn resonance fits at known input powers into power-sweep points.

    Args:
        fits (list): ResonanceFit instances
        powers (list, optional): input powers in W; defaults to each fit's ``input_power``
    """
    powers = [f.input_power for f in fits] if powers is None else list(powers)
    if len(powers) != len(fits):
        raise ConfigurationError('one input power is required per resonance fit')
    points = []
    for fit, power in zip(fits, powers):
        if power is None:
            raise ConfigurationError(f'resonance fit {fit.label or fit.f0} has no input power')
        nbar = photon_number(power, fit.omega, fit.q_tot.value, fit.q_ext.value)
        points.append(PowerSweepPoint(nbar=nbar, q_int=fit.q_int.value, sigma_q=fit.q_int.sigma))
    return points
