# core/experiments.py
"""
Experiment configs, artifact writing and the pipelines behind each
subcommand. A pipeline takes a validated config, an artifact writer and a
worker count and returns whether every check it ran passed.
"""

from contextlib import contextmanager
import csv
from dataclasses import dataclass, field, replace
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings
from packaging.version import Version

from core import reports
from core.exceptions import ConfigError
from core.forms import (
    REQUIRED_SECTIONS,
    SECTION_FORMS,
    RunForm,
    clean_tolerances,
)
from delone.point_sets import fibonacci_chain, perturbed_lattice, point_density
from delone.voronoi import voronoi_adjacency
from dos.abstract import abstract_dos
from dos.checks import boundary_independence, laplace_route_check, trace_formula_check, uniqueness_check
from dos.clusters import cluster_atom_oracle, ids_jump_compare
from dos.exhaustion import (
    BOUNDED,
    MIN_CONSTANCY_REALIZATIONS,
    MIN_SELF_AVERAGING_REALIZATIONS,
    dichotomy_check,
    empirical_ids,
    self_averaging_report,
    spectrum_constancy_report,
)
from lattice.boxes import FolnerSequence, LatticeBox
from operators.ensembles import FIBONACCI, PERCOLATION_VARIANTS
from operators.matrices import delone_operator

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
BOUNDARY_CHECK_SKIPPED = 'boundary-check-skipped'
BOUNDARY_SCALES_TRUNCATED = 'boundary-scales-truncated'


def canonical_json(record):
    return json.dumps(record, sort_keys=True, separators=(',', ':'))


def config_hash(record):
    """SHA-256 of the canonical JSON of a validated config."""
    return hashlib.sha256(canonical_json(record).encode('utf-8')).hexdigest()


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ExperimentConfig:
    record: dict
    spec: object
    folner: object
    sections: dict = field(repr=False)
    tolerances: dict = field(repr=False)

    @property
    def config_hash(self):
        return config_hash(self.record)

    @property
    def realizations(self):
        return self.record['realizations']

    @property
    def normalization(self):
        return self.record['normalization']

    @property
    def output_dir(self):
        return self.record['output_dir']

    def lambda_grid(self, required=False):
        """The configured grid; None means the model default (refined around jumps) unless `required`."""
        grid = self.sections['lambda_grid']
        if grid['values'] is not None:
            return np.asarray(grid['values'], dtype=np.float64)
        if grid['low'] is not None:
            return np.linspace(grid['low'], grid['high'], grid['points'])
        if not required:
            return None
        return self.spec.default_lambda_grid(grid['points'], self.folner.largest_region, self.realizations)

    def dos_domain(self):
        """The fundamental domain D of the abstract DOS; the Følner cell when not configured."""
        section = self.sections['dos']
        sides = section['domain'] or list(self.folner.cell)
        if len(sides) != self.spec.dimension:
            raise ConfigError("DOS domain does not match the model dimension", {'dos.domain': [str(sides)]})
        if section['offset'] is not None:
            return LatticeBox(sides, section['offset'])
        return LatticeBox.centered(sides)


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    return value


def parse_config(raw, seed_override=None):
    """
    Validate a config object section by section. All field-path errors are
    collected and raised together as one ConfigError.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", {'$': ["expected an object"]})
    raw = dict(raw)
    if seed_override is not None:
        raw['seed'] = seed_override

    errors = {}
    run_keys = set(RunForm.base_fields)
    known = run_keys | set(SECTION_FORMS) | {'tolerances'}
    for key in sorted(set(raw) - known):
        errors[key] = ["unknown field"]
    for name in REQUIRED_SECTIONS:
        if name not in raw:
            errors[name] = ["This field is required."]

    run_form = RunForm({k: v for k, v in raw.items() if k in run_keys}, '')
    for key, messages in run_form.field_errors().items():
        errors[key.lstrip('.')] = messages

    forms_by_section = {}
    for name, form_class in SECTION_FORMS.items():
        section = raw.get(name, {})
        if section is None:
            section = {}
        if not isinstance(section, dict):
            errors[name] = ["expected an object"]
            continue
        form = form_class(section, name)
        errors.update(form.field_errors())
        forms_by_section[name] = form

    tolerances, tolerance_errors = clean_tolerances(raw.get('tolerances') or {})
    errors.update(tolerance_errors)
    if errors:
        raise ConfigError("invalid experiment config", errors)

    sections = {name: form.cleaned_data for name, form in forms_by_section.items()}
    spec_form = forms_by_section['model']
    run = run_form.cleaned_data
    spec = replace(spec_form.spec, base_seed=run['seed'])
    folner = forms_by_section['folner'].build(spec.dimension)

    record = {
        'version': run['version'],
        'seed': run['seed'],
        'realizations': run['realizations'],
        'normalization': run['normalization'],
        'output_dir': run['output_dir'] or '',
        'tolerances': {k: v for k, v in sorted((raw.get('tolerances') or {}).items())},
    }
    for name, cleaned in sections.items():
        record[name] = {k: _jsonable(v) for k, v in cleaned.items()}
    return ExperimentConfig(record=record, spec=spec, folner=folner, sections=sections, tolerances=tolerances)


def load_config(path, seed_override=None):
    try:
        with open(path, encoding='utf-8') as handle:
            raw = json.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}", {'$': [str(e)]})
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON", {'$': [f"line {e.lineno}: {e.msg}"]})
    return parse_config(raw, seed_override=seed_override)


@contextmanager
def applied_tolerances(tolerances):
    """Run with IDS_TOLERANCES replaced by the config's merged tolerances."""
    previous = getattr(settings, 'IDS_TOLERANCES', {})
    settings.IDS_TOLERANCES = tolerances
    try:
        yield
    finally:
        settings.IDS_TOLERANCES = previous


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


class ArtifactWriter:
    """
    Single writer for every file of a run. CSV artifacts start with a
    `# config_hash=` line; JSON reports carry a `config_hash` key.
    """

    def __init__(self, out_dir, config_hash, formats=('csv',)):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.formats = tuple(formats)
        self.files = {}

    def record_file(self, path):
        self.files[path.name] = file_hash(path)
        return path

    def write_csv(self, name, columns, rows):
        path = self.out_dir / name
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            handle.write(f"{reports.HASH_PREFIX}{self.config_hash}\n")
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(columns)
            writer.writerows(rows)
        self.record_file(path)
        if 'json' in self.formats:
            self.write_json(path.with_suffix('.json').name, {
                'columns': list(columns), 'rows': [list(r) for r in rows],
            })
        if 'xlsx' in self.formats:
            book = reports.write_workbook(
                path.with_suffix('.xlsx'), path.stem, list(columns), [list(r) for r in rows], self.config_hash,
            )
            self.record_file(book)
        return path

    def write_json(self, name, payload):
        path = self.out_dir / name
        document = {'config_hash': self.config_hash, **payload}
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(document, handle, indent=2, sort_keys=True, default=_json_default)
            handle.write('\n')
        return self.record_file(path)

    def write_manifest(self, subcommand, config, workers):
        manifest = {
            'artifact_version': getattr(settings, 'IDS_ARTIFACT_VERSION', '1.0'),
            'subcommand': subcommand,
            'config': config.record,
            'config_hash': config.config_hash,
            'workers': workers,
            'files': dict(sorted(self.files.items())),
        }
        with open(self.out_dir / MANIFEST_NAME, 'w', encoding='utf-8') as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write('\n')
        return manifest


@dataclass
class PipelineResult:
    passed: bool
    summary: dict
    flags: list = field(default_factory=list)


def _exhaustion(config, workers, lambda_grid=None):
    grid = config.lambda_grid() if lambda_grid is None else lambda_grid
    return empirical_ids(
        config.spec, config.folner, config.realizations,
        normalization=config.normalization, lambda_grid=grid, workers=workers,
    )


def run_ids(config, writer, workers):
    ids = _exhaustion(config, workers)
    writer.write_csv('ids.csv', ['scale', 'volume', 'lambda', 'mean', 'std'], ids.csv_rows())
    summary = ids.summary()
    passed = True
    if ids.realizations >= MIN_SELF_AVERAGING_REALIZATIONS and ids.scales > 1:
        report = self_averaging_report(ids, slack=config.tolerances['self_averaging_ratio'])
        summary['self_averaging'] = report.as_dict()
        passed = report.passed
    else:
        summary['self_averaging'] = 'skipped'
    writer.write_json('ids_summary.json', summary)
    return PipelineResult(passed=passed, summary=summary)


def _dos(config, workers, grid):
    section = config.sections['dos']
    return abstract_dos(
        config.spec, grid, section['padding'], config.dos_domain(), config.realizations,
        workers=workers, check_padding=section['check_padding'],
    )


def run_dos(config, writer, workers):
    dos = _dos(config, workers, config.lambda_grid(required=True))
    writer.write_csv('dos.csv', ['lambda', 'rho', 'stderr'], dos.csv_rows())
    summary = dos.summary()
    writer.write_json('dos_summary.json', summary)
    return PipelineResult(passed=True, summary=summary, flags=list(dos.flags))


def _boundary_folner(folner, padding):
    """The leading scales whose padded operator fits under the dense threshold."""
    threshold = getattr(settings, 'IDS_DENSE_THRESHOLD', 4096)
    fitting = [b for b, r in zip(folner.boxes, folner.regions) if r.grown(padding).site_count <= threshold]
    if not fitting:
        logger.warning(f"Boundary check skipped: no scale fits under {threshold} sites with padding {padding}")
        return None
    if len(fitting) < len(folner):
        logger.warning(f"Boundary check limited to the {len(fitting)} smallest scales")
    return FolnerSequence(dimension=folner.dimension, boxes=tuple(fitting), cell=folner.cell)


def run_check(config, writer, workers):
    checks = config.sections['checks']
    tolerances = config.tolerances
    ids = _exhaustion(config, workers)
    dos = _dos(config, workers, ids.lambda_grid)
    summary = {'ids': ids.summary(), 'dos': dos.summary()}
    passed = True

    trace = trace_formula_check(ids, dos, tol=tolerances['trace_formula'])
    writer.write_csv(
        'trace_formula.csv', ['lambda', 'ids', 'dos', 'gap', 'stderr', 'admitted'], trace.csv_rows(),
    )
    summary['trace_formula'] = trace.as_dict()
    passed &= trace.passed

    if checks['t_grid']:
        laplace = laplace_route_check(ids, dos, checks['t_grid'], tol=tolerances['laplace_route'])
        writer.write_csv('laplace.csv', ['t', 'ids', 'dos', 'gap'], list(zip(
            laplace.t_grid, laplace.ids_transforms, laplace.dos_transforms, laplace.gaps,
        )))
        summary['laplace_route'] = laplace.as_dict()
        passed &= laplace.passed

    if len(config.folner) > 1:
        uniqueness = uniqueness_check(
            [ids.mean_function(n) for n in range(len(config.folner))], ids.lambda_grid,
            agreement=tolerances['laplace_agreement'], tol=tolerances['cdf_distance'],
        )
        summary['uniqueness'] = uniqueness.as_dict()
        passed &= uniqueness.passed
    else:
        summary['uniqueness'] = 'skipped'

    flags = list(dos.flags)
    folner = _boundary_folner(config.folner, checks['boundary_padding'])
    if folner is None:
        flags.append(BOUNDARY_CHECK_SKIPPED)
        summary['boundary_independence'] = 'skipped'
    else:
        if len(folner) < len(config.folner):
            flags.append(BOUNDARY_SCALES_TRUNCATED)
        boundary = boundary_independence(
            config.spec, folner, checks['boundary_t'], config.realizations,
            padding=checks['boundary_padding'], workers=workers, factor=tolerances['boundary_decay_factor'],
        )
        writer.write_csv('boundary.csv', ['scale', 'volume', 'deviation'], [
            (n, v, d) for n, (v, d) in enumerate(zip(boundary.volumes, boundary.deviations))
        ])
        summary['boundary_independence'] = boundary.as_dict()
        passed &= boundary.passed

    dichotomy_rows, dichotomy = [], []
    for interval in checks['intervals']:
        report = dichotomy_check(ids, interval)
        dichotomy.append(report.as_dict())
        dichotomy_rows.extend(
            (report.interval[0], report.interval[1], n, v, c)
            for n, (v, c) in enumerate(zip(report.volumes, report.mean_counts))
        )
        passed &= report.classification != BOUNDED
    if dichotomy:
        writer.write_csv('dichotomy.csv', ['a', 'b', 'scale', 'volume', 'mean_count'], dichotomy_rows)
    summary['dichotomy'] = dichotomy

    if config.realizations >= MIN_CONSTANCY_REALIZATIONS:
        summary['spectrum_constancy'] = spectrum_constancy_report(ids).as_dict()
    else:
        summary['spectrum_constancy'] = 'skipped'
    summary['passed'] = bool(passed)
    summary['flags'] = flags
    writer.write_json('check_report.json', summary)
    return PipelineResult(passed=bool(passed), summary=summary, flags=flags)


def run_atoms(config, writer, workers):
    spec = config.spec
    if not spec.is_percolation:
        raise ConfigError("the atoms pipeline needs a percolation model", {'model.model': [spec.model]})
    oracle = cluster_atom_oracle(
        config.sections['atoms']['s_max'], spec.p, d=spec.dimension,
        variant=PERCOLATION_VARIANTS[spec.model], hopping=spec.hopping,
    )
    writer.write_csv('oracle_atoms.csv', ['location', 'weight'], oracle.csv_rows())
    ids = _exhaustion(config, workers)
    comparison = ids_jump_compare(
        ids, oracle, tol=config.tolerances['jump_compare'], slack=config.tolerances['jump_upper_slack'],
    )
    writer.write_csv('atoms.csv', ['location', 'predicted', 'upper', 'empirical', 'stderr', 'passed'], [
        (r['location'], r['predicted'], r['upper'], r['empirical'], r['stderr'], r['passed']) for r in comparison.rows
    ])
    summary = {
        'ids': ids.summary(),
        'oracle': {k: v for k, v in oracle.as_dict().items() if k != 'atoms'},
        **comparison.as_dict(),
    }
    writer.write_json('atoms_report.json', summary)
    return PipelineResult(passed=comparison.passed, summary=summary)


def run_delone(config, writer, workers):
    spec = config.spec
    if not spec.is_delone:
        raise ConfigError("the delone pipeline needs the delone-voronoi model", {'model.model': [spec.model]})
    section = config.sections['delone']
    seed = spec.realization_seed(0)
    if spec.delone_kind == FIBONACCI:
        delone = fibonacci_chain(section['length'], phase=section['phase'])
        labels = np.arange(len(delone))[:, None]
    else:
        box = LatticeBox.centered(section['sides'])
        delone = perturbed_lattice(box, spec.amplitude, seed)
        labels = box.coordinates
    adjacency = voronoi_adjacency(delone)
    op = delone_operator(
        adjacency, delone, labels, boundary=spec.boundary, potential=spec.potential,
        seed=seed, hopping=spec.hopping,
    )

    columns = ['x', 'y'][:delone.dimension]
    writer.write_csv('points.csv', columns, [tuple(float(v) for v in row) for row in delone.points])
    writer.write_csv('edges.csv', ['i', 'j'], sorted(adjacency.pairs))
    operator_path = writer.out_dir / 'operator.txt'
    op.write_coordinate_format(operator_path, extra={'config_hash': writer.config_hash})
    writer.record_file(operator_path)

    summary = {
        'points': len(delone),
        'window': delone.window.as_dict(),
        'r_packing': delone.r_packing,
        'R_covering': delone.R_covering,
        'covering_bound': delone.covering_bound,
        'density': point_density(delone),
        'edges': len(adjacency.pairs),
        'boundary_cells': int(adjacency.boundary.sum()),
        'operator_dimension': op.dimension,
    }
    if delone.dimension == 2:
        summary['mean_interior_degree'] = adjacency.mean_interior_degree()
    writer.write_json('delone_report.json', summary)
    return PipelineResult(passed=True, summary=summary)


PIPELINES = {
    'ids': run_ids,
    'dos': run_dos,
    'check': run_check,
    'atoms': run_atoms,
    'delone': run_delone,
}


def run_pipeline(subcommand, config, out_dir, workers, formats=('csv',)):
    """Run one pipeline under the config's tolerances; returns (result, manifest)."""
    writer = ArtifactWriter(out_dir, config.config_hash, formats)
    logger.info(f"Running {subcommand} for config {config.config_hash[:12]} into {out_dir}")
    with applied_tolerances(config.tolerances):
        result = PIPELINES[subcommand](config, writer, workers)
    manifest = writer.write_manifest(subcommand, config, workers)
    return result, manifest


@dataclass
class ReplayResult:
    subcommand: str
    identical: bool
    altered_config: bool
    differing: list
    manifest: dict = field(repr=False)

    @property
    def expected_divergence(self):
        return self.altered_config and not self.identical


def load_manifest(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read manifest {path}", {'manifest': [str(e)]})


def check_artifact_version(manifest):
    current = Version(getattr(settings, 'IDS_ARTIFACT_VERSION', '1.0'))
    recorded = Version(str(manifest.get('artifact_version', '0')))
    if recorded != current:
        raise ConfigError(
            f"manifest was written by artifact version {recorded}, this is {current}; "
            "outputs are only reproducible within one version",
            {'artifact_version': [f"{recorded} != {current}"]},
        )


def replay(manifest_path, out_dir=None, workers=None):
    """
    Rerun the pipeline recorded in a manifest and compare the CSV hashes.
    A config whose hash no longer matches the manifest is reported as an
    expected divergence.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    check_artifact_version(manifest)
    subcommand = manifest.get('subcommand')
    if subcommand not in PIPELINES:
        raise ConfigError(f"manifest names unknown subcommand {subcommand!r}", {'subcommand': [str(subcommand)]})

    config = parse_config(manifest.get('config', {}))
    altered = config.config_hash != manifest.get('config_hash')
    if altered:
        logger.warning("Manifest config no longer matches its hash; outputs are expected to diverge")
    out_dir = Path(out_dir) if out_dir else manifest_path.parent / 'replay'
    _, rerun = run_pipeline(subcommand, config, out_dir, workers or manifest.get('workers') or 1)

    recorded = {n: h for n, h in manifest.get('files', {}).items() if n.endswith('.csv')}
    produced = {n: h for n, h in rerun['files'].items() if n.endswith('.csv')}
    differing = sorted(n for n in set(recorded) | set(produced) if recorded.get(n) != produced.get(n))
    return ReplayResult(
        subcommand=subcommand, identical=not differing, altered_config=altered,
        differing=differing, manifest=rerun,
    )
