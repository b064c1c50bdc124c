# core/forms.py
"""
Validation of experiment configs. Each JSON section is bound to one form;
errors are collected under dotted field paths (`model.p`, `folner.sides`).
"""

from django import forms
from django.conf import settings
from django.core.exceptions import NON_FIELD_ERRORS

from core.exceptions import ConfigError, DomainError, InvalidScheduleError
from lattice.boxes import folner_boxes
from operators.ensembles import FIBONACCI, MODELS, PERTURBED_LATTICE, OperatorEnsembleSpec
from dos.exhaustion import NORMALIZATIONS

CONFIG_VERSION = 1

# Tolerances read inside worker processes; they can only change through settings.
PROCESS_TOLERANCES = ('voronoi_face',)


class SectionForm(forms.Form):
    """A config section: unknown keys are errors, absent keys take the field's initial value."""

    def __init__(self, section, path):
        self.path = path
        self.unknown = sorted(set(section) - set(self.base_fields))
        data = {name: field.initial for name, field in self.base_fields.items()}
        data.update({k: v for k, v in section.items() if k in self.base_fields})
        super().__init__(data)

    def field_errors(self):
        errors = {f"{self.path}.{name}": ["unknown field"] for name in self.unknown}
        if not self.is_valid():
            for name, messages in self.errors.items():
                key = self.path if name == NON_FIELD_ERRORS else f"{self.path}.{name}"
                errors.setdefault(key, []).extend(str(m) for m in messages)
        return errors


def _number_list(value, path, length=None, integer=False, positive=False):
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise forms.ValidationError(f"expected a list of numbers at {path}")
    if length is not None and len(value) != length:
        raise forms.ValidationError(f"expected {length} entries, got {len(value)}")
    if integer and any(int(v) != v for v in value):
        raise forms.ValidationError("entries must be integers")
    if positive and any(v <= 0 for v in value):
        raise forms.ValidationError("entries must be positive")
    return [int(v) for v in value] if integer else [float(v) for v in value]


class RunForm(SectionForm):
    version = forms.IntegerField(min_value=CONFIG_VERSION, max_value=CONFIG_VERSION)
    seed = forms.IntegerField(min_value=0, initial=0)
    realizations = forms.IntegerField(min_value=1, initial=20)
    normalization = forms.ChoiceField(choices=[(n, n) for n in NORMALIZATIONS], initial=NORMALIZATIONS[0])
    output_dir = forms.CharField(required=False, initial='')


class EnsembleForm(SectionForm):
    model = forms.ChoiceField(choices=[(m, m) for m in MODELS])
    d = forms.IntegerField(min_value=1, max_value=3, initial=2)
    p = forms.FloatField(min_value=0.0, max_value=1.0, initial=1.0)
    potential_low = forms.FloatField(required=False)
    potential_high = forms.FloatField(required=False)
    hopping = forms.FloatField(initial=1.0)
    amplitude = forms.FloatField(min_value=0.0, initial=0.0)
    delone_kind = forms.ChoiceField(
        choices=[(PERTURBED_LATTICE, PERTURBED_LATTICE), (FIBONACCI, FIBONACCI)], initial=PERTURBED_LATTICE,
    )
    boundary = forms.ChoiceField(choices=[('keep', 'keep'), ('drop', 'drop')], initial='drop')

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        try:
            self.spec = OperatorEnsembleSpec(
                model=cleaned['model'],
                dimension=cleaned['d'],
                p=cleaned['p'],
                potential_low=cleaned.get('potential_low'),
                potential_high=cleaned.get('potential_high'),
                hopping=cleaned['hopping'],
                amplitude=cleaned['amplitude'],
                delone_kind=cleaned['delone_kind'],
                boundary=cleaned['boundary'],
            )
        except DomainError as e:
            raise forms.ValidationError(str(e))
        return cleaned


class FolnerForm(SectionForm):
    sides = forms.JSONField()
    aspect = forms.JSONField(required=False)
    cell = forms.JSONField(required=False)

    def clean_sides(self):
        sides = _number_list(self.cleaned_data['sides'], 'folner.sides', integer=True, positive=True)
        if not sides:
            raise forms.ValidationError("at least one side length is needed")
        return sides

    def clean_aspect(self):
        return _number_list(self.cleaned_data.get('aspect'), 'folner.aspect', integer=True, positive=True)

    def clean_cell(self):
        return _number_list(self.cleaned_data.get('cell'), 'folner.cell', integer=True, positive=True)

    def build(self, d):
        data = self.cleaned_data
        try:
            return folner_boxes(d, len(data['sides']), data['sides'], aspect=data['aspect'], cell=data['cell'])
        except (DomainError, InvalidScheduleError) as e:
            raise ConfigError("invalid Følner schedule", {f"{self.path}.sides": [str(e)]})


class GridForm(SectionForm):
    low = forms.FloatField(required=False)
    high = forms.FloatField(required=False)
    points = forms.IntegerField(min_value=2, initial=512)
    values = forms.JSONField(required=False)

    def clean(self):
        cleaned = super().clean()
        values = cleaned.get('values')
        if values is not None:
            cleaned['values'] = _number_list(values, f"{self.path}.values")
            if any(b <= a for a, b in zip(cleaned['values'], cleaned['values'][1:])):
                raise forms.ValidationError("grid values must be strictly increasing")
        low, high = cleaned.get('low'), cleaned.get('high')
        if (low is None) != (high is None):
            raise forms.ValidationError("low and high must be given together")
        if low is not None and not low < high:
            raise forms.ValidationError(f"low must be below high, got [{low}, {high}]")
        return cleaned


class DosForm(SectionForm):
    domain = forms.JSONField(required=False)
    offset = forms.JSONField(required=False)
    padding = forms.IntegerField(min_value=0, initial=8)
    check_padding = forms.BooleanField(required=False, initial=True)

    def clean_domain(self):
        return _number_list(self.cleaned_data.get('domain'), 'dos.domain', integer=True, positive=True)

    def clean_offset(self):
        return _number_list(self.cleaned_data.get('offset'), 'dos.offset', integer=True)


class ChecksForm(SectionForm):
    t_grid = forms.JSONField(required=False, initial=[0.5, 1.0, 2.0])
    intervals = forms.JSONField(required=False, initial=[])
    boundary_t = forms.FloatField(initial=1.0)
    boundary_padding = forms.IntegerField(min_value=1, initial=10)

    def clean_t_grid(self):
        values = _number_list(self.cleaned_data.get('t_grid') or [], 'checks.t_grid')
        if any(t <= 0 for t in values):
            raise forms.ValidationError("t values must be positive")
        return values

    def clean_intervals(self):
        intervals = self.cleaned_data.get('intervals') or []
        if not isinstance(intervals, list):
            raise forms.ValidationError("expected a list of [a, b] pairs")
        cleaned = []
        for k, pair in enumerate(intervals):
            if not isinstance(pair, list):
                raise forms.ValidationError(f"interval {k} must be an [a, b] pair")
            a, b = _number_list(pair, f"checks.intervals[{k}]", length=2)
            if not a < b:
                raise forms.ValidationError(f"interval {k} needs a < b, got [{a}, {b}]")
            cleaned.append((a, b))
        return cleaned

    def clean_boundary_t(self):
        t = self.cleaned_data['boundary_t']
        if t <= 0:
            raise forms.ValidationError("boundary_t must be positive")
        return t


class AtomsForm(SectionForm):
    s_max = forms.IntegerField(min_value=1, max_value=8, initial=6)


class DeloneForm(SectionForm):
    sides = forms.JSONField(required=False, initial=[30, 30])
    length = forms.IntegerField(min_value=2, initial=200)
    phase = forms.FloatField(min_value=0.0, initial=0.0)

    def clean_sides(self):
        return _number_list(self.cleaned_data.get('sides'), 'delone.sides', length=2, integer=True, positive=True)

    def clean_phase(self):
        phase = self.cleaned_data['phase']
        if phase >= 1.0:
            raise forms.ValidationError("phase must lie in [0, 1)")
        return phase


SECTION_FORMS = {
    'model': EnsembleForm,
    'folner': FolnerForm,
    'lambda_grid': GridForm,
    'dos': DosForm,
    'checks': ChecksForm,
    'atoms': AtomsForm,
    'delone': DeloneForm,
}
REQUIRED_SECTIONS = ('model', 'folner')


def clean_tolerances(overrides):
    """Overrides merged over settings.IDS_TOLERANCES; returns (merged, errors)."""
    defaults = dict(getattr(settings, 'IDS_TOLERANCES', {}))
    errors = {}
    if not isinstance(overrides, dict):
        return defaults, {'tolerances': ["expected an object"]}
    for name, value in overrides.items():
        path = f"tolerances.{name}"
        if name not in defaults:
            errors[path] = ["unknown tolerance"]
        elif name in PROCESS_TOLERANCES:
            errors[path] = ["set through IDS_TOLERANCES in settings; it cannot be overridden per run"]
        elif not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            errors[path] = ["expected a nonnegative number"]
        else:
            defaults[name] = value
    return defaults, errors
