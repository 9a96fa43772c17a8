"""Participation definitions, seam admittances, stitching and mesh-convergence extrapolation."""
import logging
import math
from dataclasses import replace

import numpy as np
from scipy import constants
from scipy.integrate import simpson
from scipy.optimize import least_squares
from scipy.stats import linregress

from lossbudget.exceptions import (GridMismatchError, InsufficientPointsError,
                                   KindMismatchError, NonConvergentError,
                                   NonPositiveCorrectionError, NonPositiveInputError,
                                   PositionOutOfRangeError, UnitMismatchError,
                                   ZeroDenominatorError, ZeroLocalFieldError,
                                   ZeroTotalEnergyError)
from lossbudget.models import (ConvergenceResult, ParticipationTable, PowerLawFit, Quantity,
                               StitchResult)

logger = logging.getLogger(__name__)

EPSILON_0 = constants.epsilon_0
MU_0 = constants.mu_0

SURFACE_KINDS = ('metal_air', 'metal_substrate', 'substrate_air')
ELECTRIC_KINDS = SURFACE_KINDS + ('bulk',)
MAGNETIC_KINDS = ('conductor', 'seam')
# starting exponents tried by the power-law convergence fit
POWER_LAW_STARTS = (1 / 3, 2 / 3, 1.0, 2.0)


def participation_from_integrals(fi):
    """
    Participation of one region from its field integrals.

    Surface kinds use the thin-interface approximation with thickness ``t``
    and permittivity ``eps_r``; the metal-air field is integrated in vacuum so
    ``eps_r`` divides instead of multiplying. Bulk is an energy ratio. Conductor
    (1/ohm) and seam (S/m) follow the magnetic-energy definitions.
    """
    if fi.kind in ELECTRIC_KINDS:
        energy = fi.total_electric_energy
        if energy is None:
            raise KindMismatchError(f'{fi.kind} needs the total electric energy')
        if not energy > 0:
            raise ZeroTotalEnergyError(f'total electric energy must be positive, got {energy}')
        if fi.kind == 'bulk':
            return fi.integral / energy
        permittivity = 1.0 / fi.rel_permittivity if fi.kind == 'metal_air' else fi.rel_permittivity
        return permittivity * fi.thickness * EPSILON_0 * fi.integral / energy

    energy = fi.total_magnetic_energy
    if energy is None or fi.omega is None:
        raise KindMismatchError(f'{fi.kind} needs the total magnetic energy and omega')
    if not energy > 0:
        raise ZeroTotalEnergyError(f'total magnetic energy must be positive, got {energy}')
    if not fi.omega > 0:
        raise NonPositiveInputError(f'omega must be positive, got {fi.omega}')
    if fi.kind == 'conductor':
        return fi.integral / (MU_0 * fi.omega * energy)
    return fi.integral / (fi.omega * energy)


def donut_to_edge_factor(edge_energy, donut_energy):
    """Ratio of edge to donut stored energy from a fine 2D solve."""
    if not donut_energy > 0:
        raise ZeroDenominatorError(f'donut energy must be positive, got {donut_energy}')
    if edge_energy < 0:
        raise NonPositiveInputError(f'edge energy must be non-negative, got {edge_energy}')
    return edge_energy / donut_energy


def apply_donut_to_edge(p_donut, factor):
    return p_donut * factor


def integrate_profile(position, density):
    """Simpson integral of an energy density sampled along ``position``."""
    position = np.asarray(position, dtype=float)
    density = np.asarray(density, dtype=float)
    if position.shape != density.shape:
        raise GridMismatchError('position and density must have the same shape')
    return float(simpson(density, x=position))


def _require_positive(**values):
    for name, value in values.items():
        if value is None or not value > 0:
            raise NonPositiveInputError(f'{name} must be positive, got {value}')


def seam_admittance_distributed(g):
    """Admittance per unit length of seams along a half-wave strip: 2/(pi Z w) sum sin^2(pi z/l)."""
    _require_positive(impedance=g.impedance, width=g.width, length=g.length)
    if not g.positions:
        raise NonPositiveInputError('at least one seam position is required')
    z = np.asarray(g.positions, dtype=float)
    if np.any(z < 0) or np.any(z > g.length):
        raise PositionOutOfRangeError(f'seam positions must lie within [0, {g.length}]')
    return 2.0 / (math.pi * g.impedance * g.width) * float(np.sum(np.sin(math.pi * z / g.length) ** 2))


def seam_admittance_lumped(g):
    """Admittance per unit length of a seam in a lumped element of impedance Z: 2/(Z w)."""
    _require_positive(impedance=g.impedance, width=g.width)
    if math.isinf(g.impedance):
        return 0.0
    return 2.0 / (g.impedance * g.width)


def uniform_seam_positions(length, count):
    """``count`` seam positions at the midpoints of equal segments of a strip."""
    return tuple((np.arange(count) + 0.5) * length / count)


def stitch_local_to_global(global_profile, local_profile):
    """
    Average ratio of |E| between a global and a local simulation along a stitching line.

    Args:
        global_profile (tuple): (position, |E|) arrays from the global simulation
        local_profile (tuple): (position, |E|) arrays from the local simulation

    Returns:
        StitchResult: the field-amplitude factor, its standard error and sample count
    """
    g_pos, g_field = (np.asarray(a, dtype=float) for a in global_profile)
    l_pos, l_field = (np.asarray(a, dtype=float) for a in local_profile)
    if g_pos.shape != g_field.shape or l_pos.shape != l_field.shape:
        raise GridMismatchError('each profile needs one field sample per position')
    if g_pos.shape != l_pos.shape or not np.allclose(g_pos, l_pos, rtol=1e-9, atol=0.0):
        raise GridMismatchError('profiles are not sampled on a common position grid')
    if np.any(l_field == 0):
        raise ZeroLocalFieldError('local field vanishes on the stitching line')
    ratio = g_field / l_field
    sigma = float(np.std(ratio, ddof=1) / math.sqrt(ratio.size)) if ratio.size > 1 else 0.0
    result = StitchResult(factor=float(np.mean(ratio)), sigma=sigma, n_samples=ratio.size)
    logger.info('local-to-global factor %.4g (squared %.4g)', result.factor, result.factor_squared)
    return result


def apply_stitching(participations, result, squared=False):
    """Scale local participations by the stitching factor, or by its square."""
    factor = result.factor_squared if squared else result.factor
    if isinstance(participations, dict):
        return {k: v * factor for k, v in participations.items()}
    return np.asarray(participations, dtype=float) * factor


def default_tail_points(n):
    return max(3, math.ceil(n / 3))


def _fit_power_law(n, p, dimension):
    n0 = n[0]
    scale = float(np.max(np.abs(p))) or 1.0
    y = p / scale

    def residual(x):
        return x[0] - x[1] * (n / n0) ** (-math.exp(x[2])) - y

    best = None
    for k in POWER_LAW_STARTS:
        # closed-form start for a fixed exponent
        basis = np.column_stack([np.ones_like(n), -(n / n0) ** (-k)])
        (x0, x1), *_ = np.linalg.lstsq(basis, y, rcond=None)
        try:
            result = least_squares(residual, [x0, x1, math.log(k)], method='lm',
                                   x_scale='jac', ftol=1e-15, xtol=1e-15, gtol=1e-15)
        except ValueError:
            continue
        if not np.all(np.isfinite(result.x)):
            continue
        if best is None or result.cost < best.cost:
            best = result
    if best is None or not best.success:
        return None

    x0, x1, ln_k = best.x
    exponent = math.exp(ln_k)
    if not 1e-3 < exponent < 10:
        logger.debug('power-law fit rejected with exponent %.3g', exponent)
        return None
    dof = n.size - 3
    jac = best.jac
    covariance = np.linalg.pinv(jac.T @ jac) * float(np.sum(best.fun ** 2)) / dof
    sigma = math.sqrt(max(covariance[0, 0], 0.0)) * scale
    amplitude = x1 * scale * n0 ** exponent
    return PowerLawFit(p_infinity=Quantity(x0 * scale, sigma), exponent=exponent,
                       order=exponent * dimension, amplitude=amplitude)


def extrapolate_convergence(series, tail_points=None):
    """
    Extrapolate a participation to infinite mesh density.

    The primary estimate is the intercept of a straight-line fit of p against
    1/n over the last ``tail_points`` passes. A power law p_inf - A n^-(c/d)
    fitted over the whole series is reported alongside when it converges.
    """
    n_points = len(series)
    tail = default_tail_points(n_points) if tail_points is None else tail_points
    if tail < 3 or tail > n_points:
        raise InsufficientPointsError(
            f'tail_points must lie in [3, {n_points}], got {tail}')
    logger.debug('extrapolating over the last %d of %d passes', tail, n_points)
    n = series.n_elements
    p = series.p
    steps = np.diff(p[-tail:])
    if np.any(steps > 0) and np.any(steps < 0):
        raise NonConvergentError('tail of the convergence series is not monotonic')

    fit = linregress(1.0 / n[-tail:], p[-tail:])
    sigma = float(fit.intercept_stderr)
    if not math.isfinite(sigma):
        sigma = 0.0
    power_law = _fit_power_law(n, p, series.dimension)
    result = ConvergenceResult(p_infinity=Quantity(float(fit.intercept), sigma), tail_points=tail,
                               slope=float(fit.slope), power_law=power_law)
    logger.info('p_inf %s from the 1/n intercept%s', result.p_infinity,
                f', {power_law.p_infinity} from the power law' if power_law else '')
    return result


def aggregate_surface(p_ma, p_ms, p_sa):
    """Total surface participation of a film: p_MA + p_MS + p_SA."""
    values = [np.asarray(v, dtype=float) for v in (p_ma, p_ms, p_sa)]
    if any(np.any(v < 0) for v in values):
        raise NonPositiveInputError('surface participations must be non-negative')
    total = values[0] + values[1] + values[2]
    return float(total) if total.ndim == 0 else total


def aggregate_table(table, groups):
    """
    Collapse grouped mechanism columns into single columns.

    Each group replaces its members at the position of its first member. Groups
    of three interfaces are combined with :func:`aggregate_surface`.
    """
    member_of = {}
    for name, members in groups.items():
        units = {table.unit(m) for m in members}
        if len(units) != 1:
            raise UnitMismatchError(f'group {name!r} mixes units {sorted(units)}')
        for m in members:
            member_of[m] = name

    labels, units, columns = [], [], []
    for label in table.mechanism_labels:
        name = member_of.get(label)
        if name is None:
            labels.append(label)
            units.append(table.unit(label))
            columns.append(table.column(label))
        elif name not in labels:
            members = groups[name]
            parts = [table.column(m) for m in members]
            total = aggregate_surface(*parts) if len(parts) == 3 else np.sum(parts, axis=0)
            labels.append(name)
            units.append(table.unit(members[0]))
            columns.append(np.asarray(total, dtype=float))
    return ParticipationTable(mode_labels=table.mode_labels, mechanism_labels=labels,
                              values=np.column_stack(columns), units=units)


def rescale_loss_factor(gamma, participation_ratio_correction):
    """Divide a loss factor and its uncertainty by (1 + correction)."""
    c = participation_ratio_correction
    if c < 0:
        raise NonPositiveCorrectionError(f'correction must be non-negative, got {c}')
    if c == 0:
        return gamma
    divisor = 1.0 + c

    def scaled(v):
        return None if v is None else v / divisor

    return replace(gamma, value=scaled(gamma.value), sigma=gamma.sigma / divisor,
                   upper_bound=scaled(gamma.upper_bound), lower_bound=scaled(gamma.lower_bound),
                   provenance=f'{gamma.provenance};rescaled:{c:g}')
