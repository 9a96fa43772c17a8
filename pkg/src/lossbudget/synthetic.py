"""Synthetic S21 traces and power sweeps with known ground truth."""
import logging
import math
import zlib
from dataclasses import replace

import numpy as np

from lossbudget.exceptions import NonPositiveInputError
from lossbudget.models import PowerSweepPoint, S21Trace, TlsFit
from lossbudget.resonance import (fit_s21_resonance, hanger_s21,
                                  input_power_for_photon_number, q_tot_from)
from lossbudget.tls import eval_tls, tls_sweep_from_fits

logger = logging.getLogger(__name__)


def _rng(scenario, index, key):
    return np.random.default_rng([scenario.seed, index, zlib.crc32(key.encode())])


def tls_for_unity(q0, q_int_at_unity, n_c, beta, **kwargs):
    """TLS parameters with high-power limit ``q0`` that pass through ``q_int_at_unity`` at n = 1."""
    q0_inverse = 0.0 if math.isinf(q0) else 1.0 / q0
    excess = 1.0 / q_int_at_unity - q0_inverse
    if excess < 0:
        raise NonPositiveInputError(f'Q_int(1) = {q_int_at_unity:g} exceeds Q0 = {q0:g}')
    q1_inverse = excess * math.sqrt(1.0 + (1.0 / n_c) ** beta)
    return TlsFit(q0_inverse=q0_inverse, q1_inverse=q1_inverse, n_c=n_c, beta=beta, **kwargs)


def sample_frequencies(f0, q_tot, n_points, span_linewidths):
    """Frequencies spaced uniformly in angle around the resonance circle."""
    theta_max = 2.0 * math.atan(span_linewidths)
    theta = np.linspace(-theta_max, theta_max, n_points)
    return f0 * (1.0 + np.tan(theta / 2.0) / (2.0 * q_tot))


def generate_s21(scenario, mode, nbar):
    """
    Hanger S21 trace of ``mode`` driven at ``nbar`` photons.

    Q_int follows the mode's TLS parameters at ``nbar``; the input power is
    the one that produces ``nbar`` for the resulting Q's. Noise is complex
    Gaussian with ``s21_sigma`` per quadrature, seeded from the scenario seed,
    the mode and the photon number.
    """
    index, truth = scenario.mode(mode)
    q_int = 1.0 / eval_tls(truth.tls, nbar)
    q_tot = q_tot_from(q_int, truth.q_ext, truth.angle)
    frequency = sample_frequencies(truth.f0, q_tot, scenario.n_points, scenario.span_linewidths)
    s21 = hanger_s21(frequency, truth.f0, q_tot, truth.q_ext, angle=truth.angle,
                     amplitude=truth.amplitude, phase=truth.phase, delay=truth.delay)
    if scenario.s21_sigma > 0:
        rng = _rng(scenario, index, repr(float(nbar)))
        noise = rng.standard_normal((2, frequency.size))
        s21 = s21 + scenario.s21_sigma * (noise[0] + 1j * noise[1])
    power = input_power_for_photon_number(nbar, 2 * math.pi * truth.f0, q_tot, truth.q_ext)
    return S21Trace(frequency=frequency, s21=s21, input_power=power, label=f'{mode}@{nbar:g}')


def generate_power_sweep(scenario, mode, from_traces=False):
    """
    Power sweep of ``mode`` over the scenario's photon-number grid.

    By default Q_int is evaluated from the TLS model directly, with relative
    Gaussian noise ``q_relative_sigma``. With ``from_traces`` every grid point
    goes through :func:`generate_s21` and :func:`fit_s21_resonance`, so the
    photon numbers are the calibrated ones.
    """
    index, truth = scenario.mode(mode)
    if from_traces:
        fits = [fit_s21_resonance(generate_s21(scenario, mode, float(n)))
                for n in scenario.nbar_grid]
        return tls_sweep_from_fits(fits)

    q_true = 1.0 / eval_tls(truth.tls, scenario.nbar_grid)
    q = np.array(q_true, dtype=float)
    sigma = scenario.q_relative_sigma * q_true
    if scenario.q_relative_sigma > 0:
        q = q + sigma * _rng(scenario, index, 'sweep').standard_normal(q.size)
    logger.debug('%s: %d sweep points, Q_int %.3g to %.3g', mode, q.size, q.min(), q.max())
    return [PowerSweepPoint(nbar=float(n), q_int=float(v), sigma_q=float(s))
            for n, v, s in zip(scenario.nbar_grid, q, sigma)]


def ensemble(scenario, runs):
    """``runs`` copies of ``scenario`` with consecutive seeds."""
    return [replace(scenario, seed=scenario.seed + i) for i in range(runs)]
