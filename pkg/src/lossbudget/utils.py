import json
import math
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import pandas as pd
from django.core.serializers.json import DjangoJSONEncoder

from lossbudget.exceptions import ConfigurationError
from lossbudget.models import ConvergenceSeries, DecayTrace, PowerSweepPoint, S21Trace

FIXTURES_DIR = Path(__file__).resolve().parent / 'fixtures'
FIXTURE_PREFIX = 'fixture:'

S21_COLUMNS = ['freq_hz', 're', 'im']
SWEEP_COLUMNS = ['nbar', 'q_int', 'sigma_q']
DECAY_COLUMNS = ['delay_s', 'population']
CONVERGENCE_COLUMNS = ['n_elements', 'p']
FLOAT_FORMAT = '%.17g'


def dbm_to_watts(dbm):
    """Convert power in dBm to W: 1e-3 * 10^(dBm/10)."""
    return 1e-3 * 10 ** (dbm / 10.0)


def watts_to_dbm(watts):
    if not watts > 0:
        raise ConfigurationError(f'power must be positive to express in dBm, got {watts}')
    return 10.0 * math.log10(watts / 1e-3)


def fixture_path(name):
    return FIXTURES_DIR / name


def resolve_path(value, base_dir=None):
    """
    Resolve a path from a config file or the command line.

    ``fixture:<name>`` points into the bundled fixtures; relative paths are
    taken relative to ``base_dir`` when given.
    """
    value = str(value)
    if value.startswith(FIXTURE_PREFIX):
        return fixture_path(value[len(FIXTURE_PREFIX):])
    path = Path(value)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def _read_csv(path, columns):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f'{path}: file not found')
    frame = pd.read_csv(path)
    if list(frame.columns) != columns:
        raise ConfigurationError(
            f'{path}: expected header {",".join(columns)}, got {",".join(map(str, frame.columns))}')
    return frame


def _write_csv(path, frame):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f'{path}: file not found')
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f'{path}: invalid JSON ({e})') from None


def dump_json(data):
    return json.dumps(data, cls=DjangoJSONEncoder, indent=2, sort_keys=True) + '\n'


def write_json(path, data):
    with open(path, 'w') as f:
        f.write(dump_json(data))


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def read_input_power(path):
    """Input power in W from the sidecar of a trace CSV, or None when there is none."""
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        return None
    data = read_json(sidecar)
    if 'input_power_w' in data:
        return float(data['input_power_w'])
    if 'power_dbm' in data:
        return dbm_to_watts(float(data['power_dbm']))
    raise ConfigurationError(f'{sidecar}: needs input_power_w or power_dbm')


def read_s21_csv(path, input_power=None, label=None):
    frame = _read_csv(path, S21_COLUMNS)
    if input_power is None:
        input_power = read_input_power(path)
    return S21Trace(frequency=frame['freq_hz'].to_numpy(),
                    s21=frame['re'].to_numpy() + 1j * frame['im'].to_numpy(),
                    input_power=input_power, label=label or Path(path).stem)


def write_s21_csv(path, trace):
    _write_csv(path, pd.DataFrame({'freq_hz': trace.frequency, 're': trace.s21.real,
                                   'im': trace.s21.imag}, columns=S21_COLUMNS))
    if trace.input_power is not None:
        write_json(sidecar_path(path), {'input_power_w': trace.input_power})


def read_sweep_csv(path):
    frame = _read_csv(path, SWEEP_COLUMNS)
    return [PowerSweepPoint(nbar=float(r.nbar), q_int=float(r.q_int), sigma_q=float(r.sigma_q))
            for r in frame.itertuples(index=False)]


def write_sweep_csv(path, points):
    _write_csv(path, pd.DataFrame({
        'nbar': [p.nbar for p in points],
        'q_int': [p.q_int for p in points],
        'sigma_q': [p.sigma_q for p in points],
    }, columns=SWEEP_COLUMNS))


def read_decay_csv(path):
    frame = _read_csv(path, DECAY_COLUMNS)
    return DecayTrace(delay=frame['delay_s'].to_numpy(), population=frame['population'].to_numpy())


def read_convergence_csv(path, dimension=3):
    frame = _read_csv(path, CONVERGENCE_COLUMNS)
    return ConvergenceSeries(n_elements=frame['n_elements'].to_numpy(),
                             p=frame['p'].to_numpy(), dimension=dimension)


def write_frame(path, frame):
    _write_csv(path, frame)


@contextmanager
def atomic_output_dir(out):
    """
    Collect outputs in a scratch directory and move them into ``out`` on success.

    Nothing reaches ``out`` when the block raises.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f'.{out.name}-', dir=out.parent))
    try:
        yield scratch
        out.mkdir(exist_ok=True)
        for entry in sorted(scratch.iterdir()):
            target = out / entry.name
            if target.is_dir():
                shutil.rmtree(target)
            os.replace(entry, target)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
