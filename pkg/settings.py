"""
Experiment Settings
YAML experiment files validated by marshmallow schemas, flag overrides and
resolution of the configured physical systems
"""

import os
import math
import logging
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple

import numpy as np
import yaml
from marshmallow import (
    Schema, fields, validate, validates_schema, pre_load, ValidationError, RAISE
)

from models import (
    EmitterConfig, DisorderSpec, GiantAtomError, ConfigurationError, to_internal
)
from spectral import SearchWindow, SpectralError, dark_state_config
from dfi import BraidedConfig, DFI_GAMMA0, DFI_PHI0, ideal_braided

logger = logging.getLogger(__name__)

TOOLKIT_VERSION = "1.0.0"
OUTPUT_DIR_ENV = "GIANTATOM_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

KINDS = ('emit', 'field', 'poles', 'sweep-dark', 'sweep-dfi', 'phi-sweep', 'fit')
SECTIONS = ('emitter', 'braided', 'disorder', 'grid', 'emission', 'field', 'spectral', 'analysis', 'output')

# caption-style parameters (value / 2pi)
PRESETS = {
    'markovian': {'n_points': 3, 'gamma_tau_2pi': 1.59e-4, 'dark_branch': 1},
    'non-markovian': {'n_points': 3, 'gamma_tau_2pi': 0.13, 'dark_branch': 7},
}

# the disordered curve of the emission figure: Omega tau_m / 2pi per gap, gamma_m tau / 2pi per point
DISORDERED_SEGMENTS = {
    'omega_tau_2pi': [2.231, 2.184],
    'gamma_tau_2pi': [0.1299, 0.1286, 0.1329],
}


class ExperimentConfigError(GiantAtomError):
    """Invalid experiment file or flag, with the offending key and line when known"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line


class AxisSchema(Schema):
    class Meta:
        unknown = RAISE

    min = fields.Float(required=True)
    max = fields.Float(required=True)
    count = fields.Integer(required=True, validate=validate.Range(min=1))
    spacing = fields.String(load_default='linear', validate=validate.OneOf(['linear', 'log']))

    @validates_schema
    def check_bounds(self, data, **kwargs):
        if data['max'] < data['min']:
            raise ValidationError('max must not be below min', 'max')
        if data['spacing'] == 'log' and data['min'] <= 0:
            raise ValidationError('log spacing requires min > 0', 'min')


class SegmentsSchema(Schema):
    class Meta:
        unknown = RAISE

    omega_tau_2pi = fields.List(fields.Float(validate=validate.Range(min=0, min_inclusive=False)), required=True)
    gamma_tau_2pi = fields.List(fields.Float(validate=validate.Range(min=0, min_inclusive=False)), required=True)


class EmitterSchema(Schema):
    class Meta:
        unknown = RAISE

    preset = fields.String(load_default=None, validate=validate.OneOf(list(PRESETS)))
    n_points = fields.Integer(load_default=None, validate=validate.Range(min=1))
    omega_tau_2pi = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    gamma_tau_2pi = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    dark_branch = fields.Integer(load_default=None)
    strengths = fields.List(fields.Float(), load_default=None)
    positions = fields.List(fields.Float(), load_default=None)
    segments = fields.Nested(SegmentsSchema, load_default=None)


class BraidedSchema(Schema):
    class Meta:
        unknown = RAISE

    gamma0 = fields.Float(load_default=DFI_GAMMA0, validate=validate.Range(min=0))
    phi0 = fields.Float(load_default=DFI_PHI0)
    omega_a = fields.Float(load_default=1.0)
    omega_b = fields.Float(load_default=1.0)


class DisorderSchema(Schema):
    class Meta:
        unknown = RAISE

    sigma_g = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    sigma_x = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    min_separation = fields.Float(load_default=1e-6, validate=validate.Range(min=0))


class GridSchema(Schema):
    class Meta:
        unknown = RAISE

    sigma_g = fields.Nested(AxisSchema, load_default=None)
    sigma_x = fields.Nested(AxisSchema, load_default=None)
    phi0 = fields.Nested(AxisSchema, load_default=None)


class EmissionSchema(Schema):
    class Meta:
        unknown = RAISE

    t_max = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    dt = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    t1 = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    t2 = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))


class FieldSchema(Schema):
    class Meta:
        unknown = RAISE

    times = fields.List(fields.Float(validate=validate.Range(min=0)), load_default=None)
    dx = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))


class SpectralSchema(Schema):
    class Meta:
        unknown = RAISE

    re_min = fields.Float(load_default=None)
    re_max = fields.Float(load_default=None)
    im_half_width = fields.Float(load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    grid_re = fields.Integer(load_default=60, validate=validate.Range(min=1))
    grid_im = fields.Integer(load_default=60, validate=validate.Range(min=1))


class AnalysisSchema(Schema):
    class Meta:
        unknown = RAISE

    extractor = fields.String(load_default='poles', validate=validate.OneOf(['poles', 'dde']))
    fit = fields.String(load_default='both', validate=validate.OneOf(['power_law', 'debye2', 'both']))
    data = fields.String(load_default=None)
    axis = fields.String(load_default=None, validate=validate.OneOf(['sigma_g', 'sigma_x']))


class OutputSchema(Schema):
    class Meta:
        unknown = RAISE

    dir = fields.String(load_default=None)
    stem = fields.String(load_default=None, validate=validate.Regexp(r'^[A-Za-z0-9_.-]+$'))


class ExperimentSchema(Schema):
    class Meta:
        unknown = RAISE

    kind = fields.String(required=True, validate=validate.OneOf(KINDS))
    seed = fields.Integer(load_default=0, validate=validate.Range(min=0, max=2 ** 64 - 1))
    samples = fields.Integer(load_default=100, validate=validate.Range(min=1))
    threads = fields.Integer(load_default=1, validate=validate.Range(min=1))
    emitter = fields.Nested(EmitterSchema, required=True)
    braided = fields.Nested(BraidedSchema, required=True)
    disorder = fields.Nested(DisorderSchema, required=True)
    grid = fields.Nested(GridSchema, required=True)
    emission = fields.Nested(EmissionSchema, required=True)
    field = fields.Nested(FieldSchema, required=True)
    spectral = fields.Nested(SpectralSchema, required=True)
    analysis = fields.Nested(AnalysisSchema, required=True)
    output = fields.Nested(OutputSchema, required=True)

    @pre_load
    def fill_sections(self, data, **kwargs):
        if isinstance(data, dict):
            data = dict(data)
            for section in SECTIONS:
                if data.get(section) is None:
                    data[section] = {}
        return data


@dataclass(frozen=True)
class Axis:
    min: float
    max: float
    count: int
    spacing: str = 'linear'

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.min])
        if self.spacing == 'log':
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)


@dataclass
class ExperimentConfig:
    """Validated experiment parameters plus a record of flag overrides"""
    kind: str
    seed: int
    samples: int
    threads: int
    emitter: Dict[str, Any]
    braided: Dict[str, Any]
    disorder: Dict[str, Any]
    grid: Dict[str, Any]
    emission: Dict[str, Any]
    field: Dict[str, Any]
    spectral: Dict[str, Any]
    analysis: Dict[str, Any]
    output: Dict[str, Any]
    overrides: List[Dict[str, Any]] = dataclass_field(default_factory=list)
    source: Optional[str] = None

    def emitter_config(self) -> EmitterConfig:
        """
        Resolve the emitter section.

        Precedence: a preset supplies defaults; an explicit omega_tau_2pi wins over
        the dark branch; segments or explicit strengths/positions replace the
        ideal coupling geometry.
        """
        section = dict(PRESETS['non-markovian'])
        if self.emitter.get('preset'):
            section.update(PRESETS[self.emitter['preset']])
        section.update({k: v for k, v in self.emitter.items() if v is not None and k != 'preset'})
        if self.emitter.get('omega_tau_2pi') is not None and self.emitter.get('dark_branch') is None:
            section.pop('dark_branch', None)

        explicit = section.get('strengths') or section.get('positions')
        if explicit and self.emitter.get('n_points') is None:
            section['n_points'] = len(explicit)
        n_points = section['n_points']
        gamma_tau = to_internal(section['gamma_tau_2pi'])
        try:
            if section.get('omega_tau_2pi') is not None:
                omega_tau = to_internal(section['omega_tau_2pi'])
            else:
                omega_tau = dark_state_config(n_points, gamma_tau, section['dark_branch']).omega_tau

            segments = section.get('segments')
            if segments:
                return EmitterConfig.from_segments(
                    omega_tau, gamma_tau,
                    [to_internal(v) for v in segments['omega_tau_2pi']],
                    [to_internal(v) for v in segments['gamma_tau_2pi']],
                )
            strengths = section.get('strengths') or [1.0] * n_points
            positions = section.get('positions') or [float(m) for m in range(n_points)]
            return EmitterConfig(n_points=n_points, omega_tau=omega_tau, gamma_tau=gamma_tau,
                                 strengths=tuple(strengths), positions=tuple(positions))
        except (ConfigurationError, SpectralError) as e:
            raise ExperimentConfigError(str(e), field='emitter') from e

    def segmented_config(self, base: EmitterConfig) -> EmitterConfig:
        """The disordered comparison curve: configured segments or the figure defaults"""
        segments = self.emitter.get('segments') or DISORDERED_SEGMENTS
        try:
            return EmitterConfig.from_segments(
                base.omega_tau, base.gamma_tau,
                [to_internal(v) for v in segments['omega_tau_2pi']],
                [to_internal(v) for v in segments['gamma_tau_2pi']],
            )
        except ConfigurationError as e:
            raise ExperimentConfigError(str(e), field='emitter.segments') from e

    def braided_config(self) -> BraidedConfig:
        b = self.braided
        return ideal_braided(b['gamma0'], b['phi0'], b['omega_a'], b['omega_b'])

    def disorder_spec(self, sigma_g: Optional[float] = None, sigma_x: Optional[float] = None) -> DisorderSpec:
        try:
            return DisorderSpec(
                sigma_g=self.disorder['sigma_g'] if sigma_g is None else sigma_g,
                sigma_x=self.disorder['sigma_x'] if sigma_x is None else sigma_x,
                samples=self.samples,
                seed=self.seed,
                min_separation=self.disorder['min_separation'],
            )
        except ConfigurationError as e:
            raise ExperimentConfigError(str(e), field='disorder') from e

    def axis(self, name: str, default: Axis) -> Axis:
        section = self.grid.get(name)
        return Axis(**section) if section else default

    def search_window(self, config: EmitterConfig, default: SearchWindow) -> SearchWindow:
        s = self.spectral
        centre = 0.5 * (default.im_min + default.im_max)
        half = s['im_half_width'] if s['im_half_width'] is not None else 0.5 * (default.im_max - default.im_min)
        try:
            return SearchWindow(
                re_min=default.re_min if s['re_min'] is None else s['re_min'],
                re_max=default.re_max if s['re_max'] is None else s['re_max'],
                im_min=centre - half,
                im_max=centre + half,
            )
        except SpectralError as e:
            raise ExperimentConfigError(str(e), field='spectral') from e

    @property
    def seed_grid(self) -> Tuple[int, int]:
        return self.spectral['grid_re'], self.spectral['grid_im']

    def resolved(self) -> Dict[str, Any]:
        """Every parameter after defaults, for the manifest"""
        return {
            'kind': self.kind,
            'seed': self.seed,
            'samples': self.samples,
            'threads': self.threads,
            **{section: getattr(self, section) for section in SECTIONS},
        }


def _key_lines(node, prefix: Tuple[str, ...] = ()) -> Dict[Tuple[str, ...], int]:
    """Map of key paths to 1-based source lines from a composed YAML node tree"""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (str(key.value),)
            lines[path] = key.start_mark.line + 1
            lines.update(_key_lines(value, path))
    return lines


def _first_error(messages, prefix: Tuple[str, ...] = ()) -> Tuple[Tuple[str, ...], str]:
    if isinstance(messages, dict):
        key = sorted(messages, key=str)[0]
        return _first_error(messages[key], prefix + (str(key),))
    if isinstance(messages, list) and messages:
        return _first_error(messages[0], prefix)
    return prefix, str(messages)


def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> Any:
    """Set a dotted key, returning the previous value (None when absent)"""
    parts = dotted.split('.')
    target = data
    for part in parts[:-1]:
        child = target.get(part)
        if not isinstance(child, dict):
            child = {}
            target[part] = child
        target = child
    previous = target.get(parts[-1])
    target[parts[-1]] = value
    return previous


def parse_override(text: str) -> Tuple[str, Any]:
    """'key.path=value' with the value read as a YAML scalar"""
    if '=' not in text:
        raise ExperimentConfigError(f"override {text!r} must look like key=value", field=text)
    key, raw = text.split('=', 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ExperimentConfigError(f"cannot parse value of {key.strip()}: {e}", field=key.strip())


def load_config(path: Optional[str] = None, kind: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read, override and validate an experiment file.

    Flag values replace file values; every replacement is recorded with both
    the file value and the flag value.
    """
    raw: Dict[str, Any] = {}
    lines: Dict[Tuple[str, ...], int] = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ExperimentConfigError(f"cannot read config file {path}: {e}")
        try:
            node = yaml.compose(text)
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            raise ExperimentConfigError(f"malformed YAML: {e}", line=mark.line + 1 if mark else None)
        if not isinstance(raw, dict):
            raise ExperimentConfigError("config file must contain a mapping at the top level", line=1)
        lines = _key_lines(node)

    applied = []
    flags = dict(overrides or {})
    if kind is not None:
        flags = {'kind': kind, **flags}
    for key, value in flags.items():
        if value is None:
            continue
        previous = _set_path(raw, key, value)
        if previous is not None and previous != value:
            applied.append({'key': key, 'file_value': previous, 'flag_value': value})
            logger.info(f"flag overrides {key}: {previous!r} -> {value!r}")
        elif previous is None and key != 'kind':
            applied.append({'key': key, 'file_value': None, 'flag_value': value})

    try:
        data = ExperimentSchema().load(raw)
    except ValidationError as e:
        path_keys, message = _first_error(e.messages)
        dotted = '.'.join(path_keys)
        line = lines.get(path_keys)
        where = f" (line {line})" if line else ""
        raise ExperimentConfigError(f"{dotted}: {message}{where}", field=dotted, line=line)

    return ExperimentConfig(overrides=applied, source=str(path) if path else None, **data)


def resolve_output_dir(flag: Optional[str], config: ExperimentConfig) -> Path:
    """--out flag, then output.dir, then the environment, then ./results"""
    for candidate in (flag, config.output.get('dir'), os.environ.get(OUTPUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT_DIR)
