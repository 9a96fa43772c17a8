from pathlib import Path

import numpy as np
from rest_framework import serializers

from lossbudget import conf
from lossbudget.exceptions import ConfigurationError, LossAnalysisError
from lossbudget.models import (FIELD_INTEGRAL_KINDS, GAMMA_UNITS, PARTICIPATION_UNITS,
                               AnalysisConfig, DecayFit, FieldIntegrals, LossFactorEstimate,
                               ModeTruth, ParticipationTable, Quantity, ResonanceFit,
                               SyntheticScenario, TlsFit, normalize_unit)
from lossbudget.resonance import photon_number, q_from_t1
from lossbudget.synthetic import tls_for_unity
from lossbudget.tls import qint_at
from lossbudget.utils import FIXTURE_PREFIX, read_json, resolve_path

PROVENANCE_PREFIXES = ('solved', 'remainder', 'transferred:')


def _domain(factory, **kwargs):
    try:
        return factory(**kwargs)
    except LossAnalysisError as e:
        raise serializers.ValidationError(str(e))


class QuantitySerializer(serializers.Serializer):
    value = serializers.FloatField()
    sigma = serializers.FloatField(default=0.0, min_value=0.0)

    def create(self, validated_data):
        return Quantity(**validated_data)


class LossFactorSerializer(serializers.Serializer):
    label = serializers.CharField()
    value = serializers.FloatField(allow_null=True, default=None)
    sigma = serializers.FloatField(default=0.0, min_value=0.0)
    bound = serializers.FloatField(source='upper_bound', allow_null=True, default=None)
    lower_bound = serializers.FloatField(allow_null=True, default=None)
    unit = serializers.CharField(default='dimensionless')
    source = serializers.CharField(source='provenance', default='solved')

    def validate_unit(self, value):
        unit = normalize_unit(value)
        if unit not in GAMMA_UNITS:
            raise serializers.ValidationError(f'unknown loss-factor unit {value!r}')
        return unit

    def validate_source(self, value):
        if value.startswith(PROVENANCE_PREFIXES):
            return value
        return f'transferred:{value}'

    def validate(self, attrs):
        if all(attrs.get(k) is None for k in ('value', 'upper_bound', 'lower_bound')):
            raise serializers.ValidationError('a loss factor needs a value or a bound')
        return attrs

    def create(self, validated_data):
        return _domain(LossFactorEstimate, **validated_data)


class MechanismSerializer(serializers.Serializer):
    label = serializers.CharField()
    unit = serializers.CharField(default='dimensionless')
    values = serializers.ListField(child=serializers.FloatField(min_value=0.0))

    def validate_unit(self, value):
        unit = normalize_unit(value)
        if unit not in PARTICIPATION_UNITS:
            raise serializers.ValidationError(f'unknown participation unit {value!r}')
        return unit


class ParticipationTableSerializer(serializers.Serializer):
    source = serializers.CharField(allow_blank=True, default='')
    modes = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    mechanisms = MechanismSerializer(many=True)
    groups = serializers.DictField(child=serializers.ListField(child=serializers.CharField()),
                                   default=dict)

    def validate(self, attrs):
        n_modes = len(attrs['modes'])
        labels = [m['label'] for m in attrs['mechanisms']]
        for mechanism in attrs['mechanisms']:
            if len(mechanism['values']) != n_modes:
                raise serializers.ValidationError(
                    f"{mechanism['label']}: {len(mechanism['values'])} values for {n_modes} modes")
        for name, members in attrs['groups'].items():
            unknown = [m for m in members if m not in labels]
            if unknown:
                raise serializers.ValidationError(f'group {name!r} names unknown mechanisms {unknown}')
        return attrs

    def create(self, validated_data):
        mechanisms = validated_data['mechanisms']
        return _domain(
            ParticipationTable,
            mode_labels=validated_data['modes'],
            mechanism_labels=[m['label'] for m in mechanisms],
            values=np.array([m['values'] for m in mechanisms], dtype=float).T,
            units=[m['unit'] for m in mechanisms],
            groups={k: tuple(v) for k, v in validated_data['groups'].items()},
        )

    def to_representation(self, table):
        return {
            'modes': list(table.mode_labels),
            'mechanisms': [
                {'label': label, 'unit': unit, 'values': [float(v) for v in table.column(label)]}
                for label, unit in zip(table.mechanism_labels, table.units)
            ],
            'groups': {k: list(v) for k, v in table.groups.items()},
        }


class TlsFitSerializer(serializers.Serializer):
    mode = serializers.CharField(allow_blank=True, default='')
    q0_inverse = serializers.FloatField(min_value=0.0)
    q1_inverse = serializers.FloatField(min_value=0.0)
    n_c = serializers.FloatField()
    beta = serializers.FloatField()
    covariance = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()),
                                       required=False)
    nbar_range = serializers.ListField(child=serializers.FloatField(), min_length=2,
                                       max_length=2, required=False)
    degenerate = serializers.BooleanField(default=False)
    reason = serializers.CharField(allow_blank=True, default='')
    q0 = QuantitySerializer(read_only=True)
    q1 = QuantitySerializer(read_only=True)
    q_int = serializers.SerializerMethodField()

    def get_q_int(self, fit):
        nbar = self.context.get('nbar', 1.0)
        q = qint_at(fit, nbar)
        return {'nbar': nbar, 'value': q.value, 'sigma': q.sigma}

    def create(self, validated_data):
        if 'covariance' in validated_data:
            validated_data['covariance'] = np.array(validated_data['covariance'], dtype=float)
        if 'nbar_range' in validated_data:
            validated_data['nbar_range'] = tuple(validated_data['nbar_range'])
        return _domain(TlsFit, **validated_data)


class ResonanceFitSerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True, default='')
    f0 = serializers.FloatField()
    f0_sigma = serializers.FloatField(default=0.0)
    q_int = QuantitySerializer()
    q_ext = QuantitySerializer()
    q_tot = QuantitySerializer()
    impedance_mismatch_angle = serializers.FloatField()
    angle_sigma = serializers.FloatField(default=0.0)
    residual_rms = serializers.FloatField(default=0.0)
    amplitude = serializers.FloatField(default=1.0)
    phase = serializers.FloatField(default=0.0)
    delay = serializers.FloatField(default=0.0)
    input_power = serializers.FloatField(allow_null=True, default=None)
    coupling_ratio = serializers.FloatField(read_only=True)
    nbar = serializers.SerializerMethodField()

    def get_nbar(self, fit):
        if fit.input_power is None:
            return None
        return photon_number(fit.input_power, fit.omega, fit.q_tot.value, fit.q_ext.value)

    def create(self, validated_data):
        for key in ('q_int', 'q_ext', 'q_tot'):
            validated_data[key] = Quantity(**validated_data[key])
        return ResonanceFit(**validated_data)


class DecayFitSerializer(serializers.Serializer):
    t1 = QuantitySerializer()
    amplitude = QuantitySerializer()
    offset = QuantitySerializer()
    residual_rms = serializers.FloatField()
    q_int = serializers.SerializerMethodField()

    def get_q_int(self, fit):
        omega = self.context.get('omega')
        if omega is None:
            return None
        return {'value': q_from_t1(omega, fit.t1.value), 'sigma': omega * fit.t1.sigma}

    def create(self, validated_data):
        return DecayFit(**{k: Quantity(**v) if isinstance(v, dict) else v
                           for k, v in validated_data.items()})


class SolveReportSerializer(serializers.Serializer):
    method = serializers.CharField()
    nbar = serializers.FloatField()
    condition_number = serializers.FloatField()
    modes = serializers.ListField(source='mode_labels', child=serializers.CharField())
    mechanisms = serializers.ListField(source='labels', child=serializers.CharField())
    covariance = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    loss_factors = LossFactorSerializer(source='estimates', many=True)


class BudgetRowSerializer(serializers.Serializer):
    label = serializers.CharField()
    participation = serializers.FloatField()
    gamma = serializers.FloatField()
    gamma_sigma = serializers.FloatField()
    unit = serializers.CharField()
    contribution = serializers.FloatField()
    contribution_sigma = serializers.FloatField()
    share = serializers.FloatField(allow_null=True)
    q_limit = serializers.FloatField()
    bounded = serializers.BooleanField()
    provenance = serializers.CharField()


class LossBudgetSerializer(serializers.Serializer):
    mode = serializers.CharField()
    omega = serializers.FloatField()
    rows = BudgetRowSerializer(many=True)
    total_inverse_q = QuantitySerializer()
    q_int = QuantitySerializer()
    t1 = QuantitySerializer()
    worst_case_inverse_q = serializers.FloatField()
    worst_case_q_int = serializers.FloatField(read_only=True)


class PowerLawSerializer(serializers.Serializer):
    p_infinity = QuantitySerializer()
    exponent = serializers.FloatField()
    order = serializers.FloatField()
    amplitude = serializers.FloatField()


class ConvergenceResultSerializer(serializers.Serializer):
    p_infinity = QuantitySerializer()
    tail_points = serializers.IntegerField()
    slope = serializers.FloatField()
    power_law = PowerLawSerializer(allow_null=True)


class FieldIntegralsSerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True, default='')
    kind = serializers.ChoiceField(choices=FIELD_INTEGRAL_KINDS)
    integral = serializers.FloatField()
    total_electric_energy = serializers.FloatField(allow_null=True, default=None)
    total_magnetic_energy = serializers.FloatField(allow_null=True, default=None)
    omega = serializers.FloatField(allow_null=True, default=None)
    thickness = serializers.FloatField(default=lambda: conf.get('INTERFACE_THICKNESS'))
    rel_permittivity = serializers.FloatField(default=lambda: conf.get('INTERFACE_PERMITTIVITY'))

    def create(self, validated_data):
        return _domain(FieldIntegrals, **validated_data)


class ModeTruthSerializer(serializers.Serializer):
    label = serializers.CharField()
    f0 = serializers.FloatField(min_value=0.0)
    q_ext = serializers.FloatField(min_value=0.0)
    q0 = serializers.FloatField(allow_null=True, default=None)
    q1 = serializers.FloatField(allow_null=True, default=None)
    q_int_at_unity = serializers.FloatField(allow_null=True, default=None)
    n_c = serializers.FloatField()
    beta = serializers.FloatField()
    angle = serializers.FloatField(default=0.0)
    amplitude = serializers.FloatField(default=1.0)
    phase = serializers.FloatField(default=0.0)
    delay = serializers.FloatField(default=0.0)

    def validate(self, attrs):
        if (attrs['q1'] is None) == (attrs['q_int_at_unity'] is None):
            raise serializers.ValidationError('give exactly one of q1 and q_int_at_unity')
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        q0 = data.pop('q0')
        q0 = float('inf') if q0 is None else q0
        q1 = data.pop('q1')
        at_unity = data.pop('q_int_at_unity')
        n_c, beta = data.pop('n_c'), data.pop('beta')
        try:
            if at_unity is not None:
                tls = tls_for_unity(q0, at_unity, n_c, beta, mode=data['label'])
            else:
                tls = TlsFit.from_quality_factors(q0, q1, n_c, beta, mode=data['label'])
        except LossAnalysisError as e:
            raise serializers.ValidationError(str(e))
        return ModeTruth(tls=tls, **data)


class SyntheticScenarioSerializer(serializers.Serializer):
    label = serializers.CharField(allow_blank=True, default='')
    reconstruction = serializers.BooleanField(default=False)
    seed = serializers.IntegerField(min_value=0, default=lambda: conf.get('SEED'))
    s21_sigma = serializers.FloatField(min_value=0.0, default=0.0)
    q_relative_sigma = serializers.FloatField(min_value=0.0, default=0.0)
    n_points = serializers.IntegerField(min_value=32, default=201)
    span_linewidths = serializers.FloatField(min_value=1.0,
                                             default=lambda: conf.get('SPAN_LINEWIDTHS'))
    nbar_grid = serializers.ListField(child=serializers.FloatField(min_value=0.0),
                                      allow_empty=False)
    modes = ModeTruthSerializer(many=True)

    def create(self, validated_data):
        modes = [ModeTruthSerializer().create(m) for m in validated_data.pop('modes')]
        return _domain(SyntheticScenario, modes=modes, **validated_data)


class ConvergenceEntrySerializer(serializers.Serializer):
    mode = serializers.CharField()
    mechanism = serializers.CharField()
    path = serializers.CharField()
    tail_points = serializers.IntegerField(min_value=3, allow_null=True, default=None)
    dimension = serializers.IntegerField(min_value=1, default=3)


class TraceEntrySerializer(serializers.Serializer):
    path = serializers.CharField()
    power_dbm = serializers.FloatField(allow_null=True, default=None)
    input_power_w = serializers.FloatField(min_value=0.0, allow_null=True, default=None)


class RemainderSerializer(serializers.Serializer):
    mode = serializers.CharField()
    target = serializers.CharField()


class AnalysisConfigSerializer(serializers.Serializer):
    participations = serializers.CharField()
    loss_factors = serializers.CharField(allow_null=True, default=None)
    target_mode = serializers.CharField()
    modes = serializers.ListField(child=serializers.CharField(), default=list)
    q_int = serializers.DictField(child=serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=1, max_length=2), default=dict)
    sweeps = serializers.DictField(child=serializers.CharField(), default=dict)
    traces = serializers.DictField(child=TraceEntrySerializer(many=True), default=dict)
    scenario = serializers.CharField(allow_null=True, default=None)
    solve_for = serializers.ListField(child=serializers.CharField(), default=list)
    remainder = RemainderSerializer(allow_null=True, default=None)
    convergence = ConvergenceEntrySerializer(many=True, default=list)
    surface_correction = serializers.DictField(child=serializers.FloatField(min_value=0.0),
                                               allow_null=True, default=None)
    omega = serializers.FloatField(min_value=0.0, allow_null=True, default=None)
    frequency_hz = serializers.FloatField(min_value=0.0, allow_null=True, default=None)
    nbar = serializers.FloatField(min_value=0.0, default=1.0)
    tail_points = serializers.IntegerField(min_value=3, allow_null=True, default=None)
    mc_samples = serializers.IntegerField(min_value=0, default=lambda: conf.get('MC_SAMPLES'))
    seed = serializers.IntegerField(min_value=0, default=lambda: conf.get('SEED'))

    def _path(self, value):
        path = resolve_path(value, self.context.get('base_dir'))
        if not path.exists():
            raise serializers.ValidationError(f'{path}: file not found')
        return path

    def validate(self, attrs):
        attrs['participations'] = self._path(attrs['participations'])
        for key in ('loss_factors', 'scenario'):
            if attrs[key] is not None:
                attrs[key] = self._path(attrs[key])
        attrs['sweeps'] = {mode: self._path(p) for mode, p in attrs['sweeps'].items()}
        for entries in attrs['traces'].values():
            for entry in entries:
                entry['path'] = str(self._path(entry['path']))
        for entry in attrs['convergence']:
            entry['path'] = str(self._path(entry['path']))
        if attrs['omega'] is None and attrs['frequency_hz'] is not None:
            attrs['omega'] = 2 * np.pi * attrs['frequency_hz']
        attrs.pop('frequency_hz')
        return attrs

    def create(self, validated_data):
        validated_data['convergence'] = [dict(c) for c in validated_data['convergence']]
        validated_data['traces'] = {m: [dict(e) for e in entries]
                                    for m, entries in validated_data['traces'].items()}
        if validated_data['remainder'] is not None:
            validated_data['remainder'] = dict(validated_data['remainder'])
        return AnalysisConfig(source=self.context.get('source'), **validated_data)

    def to_representation(self, config):
        def text(path):
            return None if path is None else str(path)
        return {
            'participations': text(config.participations),
            'loss_factors': text(config.loss_factors),
            'target_mode': config.target_mode,
            'modes': list(config.modes),
            'q_int': {k: list(v) for k, v in config.q_int.items()},
            'sweeps': {k: text(v) for k, v in config.sweeps.items()},
            'traces': config.traces,
            'scenario': text(config.scenario),
            'solve_for': list(config.solve_for),
            'remainder': config.remainder,
            'convergence': config.convergence,
            'surface_correction': config.surface_correction,
            'omega': config.omega,
            'nbar': config.nbar,
            'tail_points': config.tail_points,
            'mc_samples': config.mc_samples,
            'seed': config.seed,
        }


def load(serializer_class, path, many=False, **context):
    """Read ``path``, validate it with ``serializer_class`` and return the domain objects."""
    path = resolve_path(path) if str(path).startswith(FIXTURE_PREFIX) else Path(path)
    data = read_json(path)
    context.setdefault('base_dir', path.parent)
    context.setdefault('source', path)
    return _save(serializer_class(data=data, many=many, context=context), path)


def load_mapping(serializer_class, path, **context):
    """Like :func:`load` for a JSON object mapping labels to entries."""
    path = Path(path)
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f'{path}: expected an object keyed by label')
    return {label: _save(serializer_class(data=entry, context=context), f'{path} [{label}]')
            for label, entry in data.items()}


def _save(serializer, where):
    if not serializer.is_valid():
        raise ConfigurationError(f'{where}: {serializer.errors}')
    try:
        return serializer.save()
    except serializers.ValidationError as e:
        raise ConfigurationError(f'{where}: {e.detail}') from None
