"""Hanger-mode S21 fitting, photon-number calibration and T1 decay fits."""
import logging
import math

import numpy as np
from scipy import constants
from scipy.optimize import least_squares, minimize_scalar

from lossbudget.exceptions import (IllConditionedFitError, InvalidTraceError,
                                   NoResonanceError, NonDecayingError,
                                   NonPositiveInputError, SpanTooNarrowError)
from lossbudget.models import DecayFit, Quantity, ResonanceFit

logger = logging.getLogger(__name__)

HBAR = constants.hbar

# share of points at each end of a sweep treated as baseline
EDGE_FRACTION = 0.1
# |2 Q_tot (f/f0 - 1)| above which a sample counts as off resonance
OFF_RESONANCE_DETUNING = 3.0
MIN_DECAY_POINTS = 8


def hanger_s21(frequency, f0, q_tot, q_ext, angle=0.0, amplitude=1.0, phase=0.0, delay=0.0):
    """
    Forward hanger line shape.

    S21(f) = a e^{i alpha} e^{-2 pi i f tau} [1 - (Q_tot/Q_ext) e^{i angle} / (1 + 2i Q_tot (f/f0 - 1))]

    Args:
        frequency (array): frequencies in Hz
        f0 (float): resonance frequency in Hz
        q_tot (float): loaded quality factor
        q_ext (float): magnitude of the coupling quality factor
        angle (float): impedance-mismatch rotation in rad
        amplitude, phase, delay: complex cable baseline and electrical delay (s)

    Returns:
        ndarray: complex transmission
    """
    frequency = np.asarray(frequency, dtype=float)
    x = frequency / f0 - 1.0
    notch = 1.0 - (q_tot / q_ext) * np.exp(1j * angle) / (1.0 + 2j * q_tot * x)
    return amplitude * np.exp(1j * (phase - 2 * np.pi * frequency * delay)) * notch


def q_tot_from(q_int, q_ext, angle=0.0):
    """Loaded Q for a given internal Q, coupling Q and mismatch angle."""
    inverse = 1.0 / q_int + math.cos(angle) / q_ext
    if inverse <= 0:
        raise NonPositiveInputError('parameters imply a non-positive total loss rate')
    return 1.0 / inverse


def photon_number(input_power, omega, q_tot, q_ext):
    """Mean circulating photon number, n = (2 / hbar w^2) (Q_tot^2 / Q_ext) P."""
    if input_power < 0:
        raise NonPositiveInputError(f'input power must be non-negative, got {input_power}')
    for name, value in (('omega', omega), ('q_tot', q_tot), ('q_ext', q_ext)):
        if not value > 0:
            raise NonPositiveInputError(f'{name} must be positive, got {value}')
    return 2.0 * q_tot ** 2 * input_power / (HBAR * omega ** 2 * q_ext)


def input_power_for_photon_number(nbar, omega, q_tot, q_ext):
    """Inverse of :func:`photon_number`: power in W that yields ``nbar`` photons."""
    if nbar < 0:
        raise NonPositiveInputError(f'photon number must be non-negative, got {nbar}')
    for name, value in (('omega', omega), ('q_tot', q_tot), ('q_ext', q_ext)):
        if not value > 0:
            raise NonPositiveInputError(f'{name} must be positive, got {value}')
    return nbar * HBAR * omega ** 2 * q_ext / (2.0 * q_tot ** 2)


def q_from_t1(omega, t1):
    """Internal quality factor of a mode relaxing with time constant ``t1``: Q = w T1."""
    if not omega > 0:
        raise NonPositiveInputError(f'omega must be positive, got {omega}')
    if t1 < 0:
        raise NonPositiveInputError(f't1 must be non-negative, got {t1}')
    return omega * t1


def _edges(n):
    return max(3, int(math.ceil(EDGE_FRACTION * n)))


def _check_dip(s21):
    magnitude = np.abs(s21)
    k = _edges(magnitude.size)
    baseline = np.median(np.concatenate([magnitude[:k], magnitude[-k:]]))
    depth = baseline - magnitude.min()
    noise = math.sqrt(np.mean(np.diff(magnitude) ** 2) / 2.0)
    logger.debug('dip depth %.3g, baseline %.3g, noise %.3g', depth, baseline, noise)
    if depth <= 3.0 * noise or depth <= 1e-9 * baseline:
        raise NoResonanceError(
            f'no significant dip: depth {depth:.3g} against noise {noise:.3g}')


def _fit_circle(z):
    """Algebraic (Kasa) circle fit. Returns centre, radius and rms radial residual."""
    x, y = z.real, z.imag
    design = np.column_stack([x, y, np.ones_like(x)])
    rhs = -(x ** 2 + y ** 2)
    (d, e, f), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    centre = complex(-d / 2.0, -e / 2.0)
    radius = math.sqrt(max(abs(centre) ** 2 - f, 0.0))
    residual = math.sqrt(np.mean((np.abs(z - centre) - radius) ** 2))
    return centre, radius, residual


def _remove_delay(frequency, s21, f_ref, span, t):
    return s21 * np.exp(1j * t * (frequency - f_ref) / span)


def _estimate_delay(frequency, s21, f_ref, span):
    k = _edges(frequency.size)
    phase = np.unwrap(np.angle(s21))
    slopes = [np.polyfit(frequency[:k], phase[:k], 1)[0],
              np.polyfit(frequency[-k:], phase[-k:], 1)[0]]
    t0 = -float(np.mean(slopes)) * span

    def cost(t):
        return _fit_circle(_remove_delay(frequency, s21, f_ref, span, t))[2]

    grid = np.linspace(t0 - np.pi, t0 + np.pi, 41)
    best = grid[int(np.argmin([cost(t) for t in grid]))]
    step = grid[1] - grid[0]
    result = minimize_scalar(cost, bounds=(best - step, best + step), method='bounded',
                             options={'xatol': 1e-10})
    logger.debug('delay estimate %.6g from slopes, %.6g refined', t0, result.x)
    return float(result.x)


def _wrap(angle):
    return np.angle(np.exp(1j * angle))


def _fit_centred_phase(frequency, z, centre):
    """Fit theta(f) = theta0 + 2 atan(2 Q_tot (1 - f/f0)) to the centred circle."""
    centred = z - centre
    theta = np.angle(centred)
    dip = int(np.argmin(np.abs(z)))
    f_guess = frequency[dip]
    theta0 = theta[dip]
    inside = np.abs(_wrap(theta - theta0)) <= np.pi / 2
    width = np.ptp(frequency[inside]) if inside.sum() > 1 else 0.0
    width = max(width, 2.0 * float(np.min(np.diff(frequency))))
    q_guess = f_guess / width
    linewidth = f_guess / q_guess

    def residual(x):
        th0, ln_q, u = x
        f0 = f_guess + u * linewidth
        model = th0 + 2.0 * np.arctan(2.0 * math.exp(ln_q) * (1.0 - frequency / f0))
        return _wrap(theta - model)

    result = least_squares(residual, [theta0, math.log(q_guess), 0.0], method='lm',
                           x_scale='jac')
    th0, ln_q, u = result.x
    logger.debug('centred phase fit: Q_tot %.4g, f0 %.10g (%d evaluations)',
                 math.exp(ln_q), f_guess + u * linewidth, result.nfev)
    return float(th0), math.exp(ln_q), f_guess + u * linewidth


def fit_s21_resonance(trace):
    """
    Fit a hanger-mode S21 trace.

    The cable delay is removed first, an algebraic circle fit and a fit of the
    phase around the centred circle give the starting point, and a full
    Levenberg-Marquardt fit on the complex residuals refines all seven parameters.
    The noise variance is taken from the off-resonant residuals.

    Args:
        trace (S21Trace): the measured sweep

    Returns:
        ResonanceFit: parameters with one-sigma uncertainties
    """
    frequency, s21 = trace.frequency, trace.s21
    _check_dip(s21)

    span = float(trace.span)
    f_ref = 0.5 * (frequency[0] + frequency[-1])
    t_init = _estimate_delay(frequency, s21, f_ref, span)
    z = _remove_delay(frequency, s21, f_ref, span, t_init)
    centre, radius, _ = _fit_circle(z)
    theta0, q_tot_init, f0_init = _fit_centred_phase(frequency, z, centre)

    off_point = centre + radius * np.exp(1j * (theta0 + np.pi))
    if abs(off_point) == 0:
        raise NoResonanceError('off-resonant point of the circle sits at the origin')
    centre_norm = centre / off_point
    diameter = 2.0 * abs(1.0 - centre_norm)
    angle_init = float(np.angle(1.0 - centre_norm))
    if not diameter > 0:
        raise NoResonanceError('circle fit returned a zero diameter')
    q_ext_init = q_tot_init / diameter
    linewidth = f0_init / q_tot_init
    logger.debug('initial guess: Q_tot %.4g, Q_ext %.4g, angle %.3g, f0 %.10g',
                 q_tot_init, q_ext_init, angle_init, f0_init)

    def model(x):
        a, alpha, t, u, ln_qt, ln_qe, angle = x
        f0 = f0_init + u * linewidth
        q_tot = math.exp(ln_qt)
        notch = 1.0 - math.exp(ln_qt - ln_qe) * np.exp(1j * angle) / (
            1.0 + 2j * q_tot * (frequency / f0 - 1.0))
        return a * np.exp(1j * (alpha - t * (frequency - f_ref) / span)) * notch

    def residual(x):
        diff = model(x) - s21
        return np.concatenate([diff.real, diff.imag])

    x0 = [abs(off_point), float(np.angle(off_point)), t_init, 0.0,
          math.log(q_tot_init), math.log(q_ext_init), angle_init]
    result = least_squares(residual, x0, method='lm', x_scale='jac',
                           ftol=1e-12, xtol=1e-12, gtol=1e-12)
    a, alpha, t, u, ln_qt, ln_qe, angle = result.x
    if a < 0:
        a, alpha = -a, alpha + np.pi
    angle = float(_wrap(angle))
    f0 = f0_init + u * linewidth
    q_tot = math.exp(ln_qt)
    q_ext = math.exp(ln_qe)
    inverse_q_int = 1.0 / q_tot - math.cos(angle) / q_ext
    if inverse_q_int <= 0:
        raise IllConditionedFitError('fit implies a non-positive internal loss rate')
    q_int = 1.0 / inverse_q_int

    if f0 / q_tot > span / 2:
        raise SpanTooNarrowError(
            f'linewidth {f0 / q_tot:.4g} Hz exceeds half the sweep span {span:.4g} Hz')
    if not frequency[0] <= f0 <= frequency[-1]:
        raise NoResonanceError(f'fitted f0 {f0:.10g} Hz lies outside the sweep')

    n = frequency.size
    res = result.fun[:n] + 1j * result.fun[n:]
    detuning = np.abs(2.0 * q_tot * (frequency / f0 - 1.0))
    off = detuning > OFF_RESONANCE_DETUNING
    if off.sum() < 8:
        off = np.ones(n, dtype=bool)
    variance = float(np.sum(np.abs(res[off]) ** 2) / (2.0 * off.sum()))

    jac = result.jac
    normal = jac.T @ jac
    try:
        np.linalg.cholesky(normal)
    except np.linalg.LinAlgError:
        raise IllConditionedFitError('fit covariance is not positive definite') from None
    covariance = variance * np.linalg.inv(normal)

    grad = np.zeros(7)
    grad[4] = -1.0 / q_tot
    grad[5] = math.cos(angle) / q_ext
    grad[6] = math.sin(angle) / q_ext
    sigma_q_int = q_int ** 2 * math.sqrt(max(grad @ covariance @ grad, 0.0))
    sigmas = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    delay = t / (2 * np.pi * span)
    fit = ResonanceFit(
        f0=f0,
        q_int=Quantity(q_int, sigma_q_int),
        q_ext=Quantity(q_ext, q_ext * sigmas[5]),
        q_tot=Quantity(q_tot, q_tot * sigmas[4]),
        impedance_mismatch_angle=angle,
        residual_rms=math.sqrt(np.mean(np.abs(res) ** 2)) / a,
        f0_sigma=sigmas[3] * linewidth,
        angle_sigma=sigmas[6],
        amplitude=float(a),
        phase=float(_wrap(alpha + 2 * np.pi * f_ref * delay)),
        delay=float(delay),
        input_power=trace.input_power,
        label=trace.label,
    )
    logger.info('%s: f0 %.9g Hz, Q_int %s, Q_ext %s', trace.label or 'trace', f0,
                fit.q_int, fit.q_ext)
    if fit.coupling_ratio < 1:
        logger.warning('%s is overcoupled (Q_ext/Q_int = %.3g); Q_int is sensitive to '
                       'the mismatch angle', trace.label or 'trace', fit.coupling_ratio)
    return fit


def _profile_amplitudes(delay, population, t1):
    design = np.column_stack([np.exp(-delay / t1), np.ones_like(delay)])
    coef, *_ = np.linalg.lstsq(design, population, rcond=None)
    return coef, design @ coef - population


def fit_t1_decay(trace):
    """
    Fit A exp(-t/T1) + B to a population decay.

    Returns:
        DecayFit: T1, amplitude and offset with one-sigma uncertainties
    """
    delay, population = trace.delay, trace.population
    if delay.size < MIN_DECAY_POINTS:
        raise InvalidTraceError(
            f'decay trace has {delay.size} points, at least {MIN_DECAY_POINTS} required')
    if np.ptp(population) == 0:
        raise NonDecayingError('population is constant')

    span = float(delay[-1] - delay[0])
    spacing = float(np.min(np.diff(delay)))

    def profile(ln_t1):
        return float(np.sum(_profile_amplitudes(delay, population, math.exp(ln_t1))[1] ** 2))

    start = minimize_scalar(profile, bounds=(math.log(spacing / 10), math.log(100 * span)),
                            method='bounded', options={'xatol': 1e-6})
    t1_init = math.exp(start.x)
    (a_init, b_init), _ = _profile_amplitudes(delay, population, t1_init)
    logger.debug('T1 profile start %.4g s', t1_init)

    def residual(x):
        a, b, t1 = x
        return a * np.exp(-delay / t1) + b - population

    result = least_squares(residual, [a_init, b_init, t1_init], method='lm', x_scale='jac',
                           ftol=1e-15, xtol=1e-15, gtol=1e-15)
    a, b, t1 = result.x
    if not t1 > 0 or t1 > 100 * span or a == 0:
        raise NonDecayingError(f'best-fit T1 {t1:.4g} s is not a decay over a {span:.4g} s span')

    dof = delay.size - 3
    variance = float(np.sum(result.fun ** 2) / dof)
    covariance = variance * np.linalg.pinv(result.jac.T @ result.jac)
    sigmas = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    if span < t1:
        logger.warning('decay trace spans %.3g s, shorter than the fitted T1 %.3g s', span, t1)
    logger.info('T1 %.4g s', t1)
    return DecayFit(
        t1=Quantity(float(t1), float(sigmas[2])),
        amplitude=Quantity(float(a), float(sigmas[0])),
        offset=Quantity(float(b), float(sigmas[1])),
        residual_rms=math.sqrt(np.mean(result.fun ** 2)),
    )
