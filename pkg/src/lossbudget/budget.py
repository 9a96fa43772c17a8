"""Loss budgets: contributions, shares, Q limits and predicted Q_int / T1."""
import logging
import math
from dataclasses import replace

import numpy as np
import pandas as pd

from lossbudget.exceptions import (EmptyInputError, LabelMismatchError, NonPositiveInputError,
                                   NoOverlapError, UnitMismatchError, ZeroParticipationError)
from lossbudget.models import (PARTICIPATION_UNITS, BudgetComparison, BudgetRow, LossBudget,
                               Quantity, normalize_unit)

logger = logging.getLogger(__name__)

SHARE_THRESHOLD = 0.1


def _participations(p_row):
    row = {}
    for label, entry in p_row.items():
        if isinstance(entry, tuple):
            value, unit = entry
        else:
            value, unit = entry, 'dimensionless'
        row[label] = (float(value), normalize_unit(unit))
    return row


def _total_variance(rows, covariance):
    central = [r for r in rows if not r.bounded]
    if covariance is None:
        return sum(r.contribution_sigma ** 2 for r in central)
    labels, matrix = covariance
    labels = list(labels)
    matrix = np.asarray(matrix, dtype=float)
    inside = [r for r in central if r.label in labels]
    variance = sum(r.contribution_sigma ** 2 for r in central if r.label not in labels)
    if inside:
        idx = [labels.index(r.label) for r in inside]
        weights = np.array([r.participation for r in inside])
        variance += float(weights @ matrix[np.ix_(idx, idx)] @ weights)
    return variance


def build_budget(p_row, gammas, omega, mode='', covariance=None):
    """
    Loss budget of one mode.

    Args:
        p_row (dict): ``{mechanism: (p, unit)}`` as returned by ``ParticipationTable.row``
        gammas (list): LossFactorEstimate for every mechanism with p > 0
        omega (float): angular frequency of the mode in rad/s
        mode (str): label of the mode
        covariance (tuple, optional): ``(labels, matrix)`` covariance between some of
            the loss factors; the others are treated as independent

    Returns:
        LossBudget: rows sorted by descending contribution
    """
    if not omega > 0:
        raise NonPositiveInputError(f'omega must be positive, got {omega}')
    participations = _participations(p_row)
    by_label = {}
    for gamma in gammas:
        if gamma.label not in participations:
            raise LabelMismatchError(f'loss factor {gamma.label!r} has no participation')
        by_label[gamma.label] = gamma

    rows = []
    for label, (p, unit) in participations.items():
        if p <= 0:
            continue
        gamma = by_label.get(label)
        if gamma is None:
            raise LabelMismatchError(f'no loss factor for participating mechanism {label!r}')
        if PARTICIPATION_UNITS.get(unit) != gamma.unit:
            raise UnitMismatchError(f'{label!r}: participation in {unit} does not cancel '
                                    f'a loss factor in {gamma.unit}')
        if gamma.bounded:
            contribution = p * gamma.upper_bound
            rows.append(BudgetRow(label=label, participation=p, gamma=gamma.upper_bound,
                                  gamma_sigma=0.0, unit=gamma.unit, contribution=contribution,
                                  contribution_sigma=0.0, share=None,
                                  q_limit=math.inf if contribution == 0 else 1.0 / contribution,
                                  bounded=True, provenance=gamma.provenance))
            continue
        contribution = p * gamma.value
        rows.append(BudgetRow(label=label, participation=p, gamma=gamma.value,
                              gamma_sigma=gamma.sigma, unit=gamma.unit,
                              contribution=contribution, contribution_sigma=p * gamma.sigma,
                              share=None, q_limit=1.0 / contribution if contribution else math.inf,
                              provenance=gamma.provenance))

    total = sum(r.contribution for r in rows if not r.bounded)
    if not total > 0:
        raise ZeroParticipationError(f'mode {mode!r} has no loss with a central value')
    rows = [r if r.bounded else _with_share(r, total) for r in rows]
    rows.sort(key=lambda r: r.contribution, reverse=True)

    sigma_total = math.sqrt(_total_variance(rows, covariance))
    q_int = Quantity(1.0 / total, sigma_total / total ** 2)
    budget = LossBudget(
        mode=mode,
        rows=tuple(rows),
        total_inverse_q=Quantity(total, sigma_total),
        q_int=q_int,
        t1=Quantity(q_int.value / omega, q_int.sigma / omega),
        omega=omega,
        worst_case_inverse_q=total + sum(r.contribution for r in rows if r.bounded),
    )
    logger.info('%s: predicted Q_int %s, T1 %.4g s', mode or 'budget', q_int, budget.t1.value)
    return budget


def _with_share(row, total):
    return replace(row, share=100.0 * row.contribution / total)


def format_share(share, threshold=SHARE_THRESHOLD):
    if share is None:
        return 'bound'
    if share < threshold:
        return f'<{threshold:g}'
    return f'{share:.1f}'


def format_q_limit(q_limit, bounded=False):
    text = f'{q_limit / 1e6:.3g}'
    return f'>{text}' if bounded else text


def render_budget_text(budget, threshold=SHARE_THRESHOLD):
    """Aligned plain-text table of a budget."""
    header = ('Loss', 'p', 'Gamma', 'Relative (%)', '(p*Gamma)^-1 (1e6)')
    lines = []
    for row in budget.rows:
        gamma = f'<{row.gamma:.3g}' if row.bounded else f'{row.gamma:.3g}({row.gamma_sigma:.2g})'
        lines.append((f'{row.label} ({row.unit})' if row.unit != 'dimensionless' else row.label,
                      f'{row.participation:.3g}', gamma, format_share(row.share, threshold),
                      format_q_limit(row.q_limit, row.bounded)))
    widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]
    out = ['  '.join(c.ljust(w) for c, w in zip(header, widths))]
    out.append('  '.join('-' * w for w in widths))
    out.extend('  '.join(c.ljust(w) for c, w in zip(r, widths)) for r in lines)
    out.append('')
    out.append(f'Total inverse Q: {budget.total_inverse_q}')
    out.append(f'Predicted Q_int: {budget.q_int}')
    out.append(f'Predicted T1: {budget.t1.value * 1e6:.1f} ± {budget.t1.sigma * 1e6:.1f} us '
               f'at {budget.omega / (2 * math.pi) / 1e9:.3g} GHz')
    if any(r.bounded for r in budget.rows):
        out.append(f'Worst case Q_int (bounds included): {budget.worst_case_q_int:.4g}')
    return '\n'.join(out) + '\n'


def budget_to_frame(budget):
    """Plot data: one row per mechanism with its share and Q limit."""
    return pd.DataFrame({
        'label': [r.label for r in budget.rows],
        'share': [np.nan if r.share is None else r.share for r in budget.rows],
        'q_limit': [r.q_limit for r in budget.rows],
    }, columns=['label', 'share', 'q_limit'])


def budget_compare(budgets, labels=None):
    """
    Align several budgets mechanism by mechanism.

    Mechanisms missing from a budget are reported as ``None``, not zero.
    """
    budgets = list(budgets)
    if len(budgets) < 2:
        raise EmptyInputError(f'comparison needs at least 2 budgets, got {len(budgets)}')
    if labels is None:
        labels = []
        for b in budgets:
            name = b.mode or 'budget'
            labels.append(name if name not in labels else f'{name}#{len(labels) + 1}')
    labels = tuple(labels)
    if len(labels) != len(budgets) or len(set(labels)) != len(labels):
        raise LabelMismatchError('each budget needs a distinct label')

    common = set(budgets[0].labels)
    for b in budgets[1:]:
        common &= set(b.labels)
    if not common:
        raise NoOverlapError('budgets share no loss mechanism')

    mechanisms = []
    for b in budgets:
        mechanisms.extend(m for m in b.labels if m not in mechanisms)
    shares, q_limits = {}, {}
    for name, b in zip(labels, budgets):
        present = {r.label: r for r in b.rows}
        for m in mechanisms:
            row = present.get(m)
            shares[(m, name)] = None if row is None else row.share
            q_limits[(m, name)] = None if row is None else row.q_limit
    return BudgetComparison(budget_labels=labels, mechanism_labels=tuple(mechanisms),
                            shares=shares, q_limits=q_limits)


def render_comparison_text(comparison, threshold=SHARE_THRESHOLD):
    """Shares and Q limits of every budget side by side; '-' marks an absent mechanism."""
    header = ['Loss']
    for b in comparison.budget_labels:
        header += [f'{b} (%)', f'{b} Q (1e6)']
    lines = []
    for m in comparison.mechanism_labels:
        cells = [m]
        for b in comparison.budget_labels:
            share, q_limit = comparison.share(m, b), comparison.q_limit(m, b)
            if share is None and q_limit is None:
                cells += ['-', '-']
            else:
                cells += [format_share(share, threshold),
                          format_q_limit(q_limit, bounded=share is None)]
        lines.append(cells)
    widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]
    return '\n'.join('  '.join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                     for r in [header] + lines) + '\n'
