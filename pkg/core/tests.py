import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from openpyxl import load_workbook

from core.exceptions import ConfigError
from core.experiments import MANIFEST_NAME, _boundary_folner, config_hash, parse_config
from core.models import ExperimentRun
from core.reports import HASH_PREFIX, read_artifact_csv


def free_chain_config(**overrides):
    config = {
        'version': 1,
        'seed': 3,
        'realizations': 1,
        'model': {'model': 'percolation-adjacency', 'd': 1, 'p': 1.0},
        'folner': {'sides': [10, 20]},
        'lambda_grid': {'values': [-1.0, 0.0, 1.0]},
    }
    config.update(overrides)
    return config


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def write_config(self, config, name='config.json'):
        path = self.tmp / name
        path.write_text(json.dumps(config), encoding='utf-8')
        return str(path)

    def run_command(self, name, *args, **options):
        return call_command(name, *args, stdout=StringIO(), stderr=StringIO(), **options)


class IdsCommandTests(CommandTestCase):
    def test_free_chain_median(self):
        out = self.tmp / 'ids'
        self.run_command('ids', config=self.write_config(free_chain_config()), out=str(out))

        digest, columns, rows = read_artifact_csv(out / 'ids.csv')
        self.assertEqual(columns, ['scale', 'volume', 'lambda', 'mean', 'std'])
        at_zero = [r for r in rows if r['lambda'] == 0.0]
        self.assertEqual([r['mean'] for r in at_zero], [0.5, 0.5])
        self.assertEqual([r['std'] for r in at_zero], [0.0, 0.0])

        manifest = json.loads((out / MANIFEST_NAME).read_text())
        self.assertEqual(manifest['config_hash'], digest)
        self.assertIn('ids.csv', manifest['files'])
        run = ExperimentRun.objects.get(subcommand='ids')
        self.assertEqual(run.status, 'passed')
        self.assertEqual(run.config_hash, digest)
        self.assertFalse(run.status_flags['ids_error'])

    def test_deterministic_ensemble_passes_self_averaging(self):
        out = self.tmp / 'ids20'
        self.run_command('ids', config=self.write_config(free_chain_config(realizations=20)), out=str(out))
        _, _, rows = read_artifact_csv(out / 'ids.csv')
        self.assertTrue(all(r['std'] == 0.0 for r in rows))
        self.assertEqual(ExperimentRun.objects.get().status, 'passed')

    def test_csv_starts_with_config_hash(self):
        out = self.tmp / 'ids'
        self.run_command('ids', config=self.write_config(free_chain_config()), out=str(out))
        first = (out / 'ids.csv').read_text().splitlines()[0]
        self.assertTrue(first.startswith(HASH_PREFIX))
        self.assertEqual(len(first) - len(HASH_PREFIX), 64)

    def test_probability_out_of_range(self):
        config = free_chain_config(model={'model': 'percolation-adjacency', 'd': 1, 'p': 1.5})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('ids', config=self.write_config(config), out=str(self.tmp / 'bad'))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('model.p', str(ctx.exception))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_unknown_fields_are_rejected(self):
        config = free_chain_config(colour='blue')
        config['model']['q'] = 0.5
        with self.assertRaises(CommandError) as ctx:
            self.run_command('ids', config=self.write_config(config))
        self.assertIn('model.q', str(ctx.exception))
        self.assertIn('colour', str(ctx.exception))

    def test_malformed_json(self):
        path = self.tmp / 'broken.json'
        path.write_text('{"version": 1,', encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.run_command('ids', config=str(path))
        self.assertEqual(ctx.exception.returncode, 1)

    @override_settings(IDS_DENSE_THRESHOLD=15)
    def test_size_error_is_an_error_exit(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('ids', config=self.write_config(free_chain_config()), out=str(self.tmp / 'big'))
        self.assertEqual(ctx.exception.returncode, 1)
        run = ExperimentRun.objects.get(subcommand='ids')
        self.assertEqual(run.status, 'error')
        self.assertTrue(run.status_flags['ids_error'])

    def test_xlsx_export(self):
        out = self.tmp / 'xlsx'
        self.run_command('ids', config=self.write_config(free_chain_config()), out=str(out), format='xlsx')
        book = load_workbook(out / 'ids.xlsx')
        self.assertEqual(book.sheetnames, ['ids', 'Dictionary'])
        self.assertEqual([c.value for c in book['Dictionary']['A']][:6], ['variable', 'scale', 'volume', 'lambda', 'mean', 'std'])

    def test_seed_override_changes_the_hash(self):
        path = self.write_config(free_chain_config())
        self.run_command('ids', config=path, out=str(self.tmp / 'a'))
        self.run_command('ids', config=path, out=str(self.tmp / 'b'), seed_override=99)
        hashes = set(ExperimentRun.objects.values_list('config_hash', flat=True))
        self.assertEqual(len(hashes), 2)


class CheckCommandTests(CommandTestCase):
    def test_empty_model_passes(self):
        config = {
            'version': 1,
            'realizations': 2,
            'model': {'model': 'percolation-adjacency', 'd': 2, 'p': 0.0},
            'folner': {'sides': [4, 8]},
            'lambda_grid': {'low': -4.0, 'high': 4.0, 'points': 33},
            'dos': {'padding': 2, 'check_padding': False},
            'checks': {'t_grid': [0.5, 1.0, 2.0], 'intervals': [[-0.5, 0.5]], 'boundary_padding': 2},
        }
        out = self.tmp / 'check'
        self.run_command('checks', config=self.write_config(config), out=str(out))
        report = json.loads((out / 'check_report.json').read_text())
        self.assertTrue(report['passed'])
        self.assertEqual(report['trace_formula']['max_gap'], 0.0)
        self.assertEqual(report['laplace_route']['max_gap'], 0.0)
        self.assertEqual([p['binding'] for p in report['uniqueness']['pairs']], [True])
        self.assertEqual(report['uniqueness']['pairs'][0]['cdf_distance'], 0.0)
        self.assertEqual(report['dichotomy'][0]['classification'], 'empty')
        self.assertEqual(ExperimentRun.objects.get().status, 'passed')

    def test_failed_check_exits_with_two(self):
        config = free_chain_config(
            dos={'domain': [2], 'offset': [-1], 'padding': 20, 'check_padding': False},
            checks={'t_grid': [1.0], 'boundary_padding': 4},
            tolerances={'trace_formula': 0.0, 'laplace_route': 0.0},
        )
        config['lambda_grid'] = {'values': [-0.9, 0.3, 1.1]}
        with self.assertRaises(CommandError) as ctx:
            self.run_command('checks', config=self.write_config(config), out=str(self.tmp / 'strict'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(ExperimentRun.objects.get().status, 'failed')


class DosCommandTests(CommandTestCase):
    def test_free_chain_half_filling(self):
        config = free_chain_config(dos={'domain': [2], 'offset': [-1], 'padding': 20, 'check_padding': False})
        config['lambda_grid'] = {'values': [0.0, 3.0]}
        out = self.tmp / 'dos'
        self.run_command('dos', config=self.write_config(config), out=str(out))
        _, _, rows = read_artifact_csv(out / 'dos.csv')
        self.assertAlmostEqual(rows[0]['rho'], 1.0, places=10)
        self.assertAlmostEqual(rows[1]['rho'], 2.0, places=10)


class AtomsCommandTests(CommandTestCase):
    def test_low_density_jumps(self):
        config = {
            'version': 1,
            'seed': 12,
            'realizations': 20,
            'model': {'model': 'percolation-adjacency', 'd': 2, 'p': 0.3},
            'folner': {'sides': [32]},
            'atoms': {'s_max': 8},
        }
        out = self.tmp / 'atoms'
        self.run_command('atoms', config=self.write_config(config), out=str(out))
        _, _, rows = read_artifact_csv(out / 'atoms.csv')
        self.assertTrue({-1.0, 0.0, 1.0} <= {r['location'] for r in rows})
        zero = next(r for r in rows if r['location'] == 0.0)
        self.assertAlmostEqual(zero['upper'], zero['predicted'] + 0.01)
        self.assertTrue(all(r['upper'] == '' for r in rows if r['location'] != 0.0))
        self.assertTrue((out / 'oracle_atoms.csv').exists())

    def test_needs_percolation(self):
        config = free_chain_config(model={'model': 'anderson', 'd': 1, 'potential_low': -1, 'potential_high': 1})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('atoms', config=self.write_config(config), out=str(self.tmp / 'x'))
        self.assertIn('model.model', str(ctx.exception))


class DeloneCommandTests(CommandTestCase):
    def test_fibonacci_export(self):
        config = free_chain_config(
            model={'model': 'delone-voronoi', 'd': 1, 'delone_kind': 'fibonacci'},
            delone={'length': 40, 'phase': 0.25},
        )
        out = self.tmp / 'delone'
        self.run_command('delone', config=self.write_config(config), out=str(out))
        report = json.loads((out / 'delone_report.json').read_text())
        self.assertEqual(report['points'], 40)
        self.assertEqual(report['edges'], 39)
        self.assertAlmostEqual(report['r_packing'], 1.0, places=12)
        header = json.loads((out / 'operator.txt').read_text().splitlines()[0][2:])
        self.assertEqual(header['config_hash'], report['config_hash'])

    def test_perturbed_lattice_degree(self):
        config = free_chain_config(
            model={'model': 'delone-voronoi', 'd': 2, 'amplitude': 0.2},
            folner={'sides': [4]},
            delone={'sides': [12, 12]},
        )
        out = self.tmp / 'delone2'
        self.run_command('delone', config=self.write_config(config), out=str(out))
        report = json.loads((out / 'delone_report.json').read_text())
        self.assertEqual(report['points'], 144)
        self.assertGreaterEqual(report['r_packing'], 0.6)


class PlotCommandTests(CommandTestCase):
    def test_plots_from_csv(self):
        out = self.tmp / 'ids'
        self.run_command('ids', config=self.write_config(free_chain_config()), out=str(out))
        self.run_command('plot', str(out))
        svg = (out / 'ids.svg').read_text()
        self.assertIn('<svg', svg)
        first = svg

        self.run_command('plot', str(out))
        self.assertEqual((out / 'ids.svg').read_text(), first)

    def test_missing_directory(self):
        with self.assertRaises(CommandError):
            self.run_command('plot', str(self.tmp / 'nowhere'))


class ReplayCommandTests(CommandTestCase):
    def record(self, config=None, workers=1):
        out = self.tmp / 'original'
        self.run_command('ids', config=self.write_config(config or free_chain_config()), out=str(out), workers=workers)
        return out / MANIFEST_NAME

    def test_identical_replay(self):
        manifest = self.record()
        self.run_command('replay', str(manifest), out=str(self.tmp / 'again'))
        original = (self.tmp / 'original' / 'ids.csv').read_bytes()
        self.assertEqual((self.tmp / 'again' / 'ids.csv').read_bytes(), original)
        self.assertEqual(ExperimentRun.objects.get(subcommand='replay').status, 'passed')

    def test_worker_count_does_not_matter(self):
        config = free_chain_config(
            realizations=8,
            model={'model': 'anderson', 'd': 2, 'potential_low': -2.0, 'potential_high': 2.0},
            folner={'sides': [8, 16]},
        )
        config['lambda_grid'] = {'low': -6.0, 'high': 6.0, 'points': 65}
        manifest = self.record(config, workers=1)
        self.run_command('replay', str(manifest), out=str(self.tmp / 'pooled'), workers=8)
        self.assertEqual(
            (self.tmp / 'pooled' / 'ids.csv').read_bytes(),
            (self.tmp / 'original' / 'ids.csv').read_bytes(),
        )
        self.assertEqual(ExperimentRun.objects.get(subcommand='replay').status, 'passed')

    def test_altered_seed_is_expected_divergence(self):
        manifest_path = self.record()
        manifest = json.loads(manifest_path.read_text())
        manifest['config']['seed'] = 4
        manifest_path.write_text(json.dumps(manifest))
        self.run_command('replay', str(manifest_path), out=str(self.tmp / 'altered'))
        run = ExperimentRun.objects.get(subcommand='replay')
        self.assertEqual(run.status, 'passed')
        self.assertTrue(run.status_flags['expected_divergence'])

    def test_version_mismatch_is_refused(self):
        manifest_path = self.record()
        manifest = json.loads(manifest_path.read_text())
        manifest['artifact_version'] = '0.9'
        manifest_path.write_text(json.dumps(manifest))
        with self.assertRaises(CommandError) as ctx:
            self.run_command('replay', str(manifest_path))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('artifact_version', str(ctx.exception))


class LedgerTests(TestCase):
    def test_status_flag_set_and_clear(self):
        run = ExperimentRun.objects.create(subcommand='ids')
        run.log_status_flag('numerical_failure', 'eigh did not converge')
        run.refresh_from_db()
        self.assertTrue(run.status_flags['numerical_failure'])
        self.assertEqual(run.status_flags['numerical_failure_last_error'], 'eigh did not converge')
        self.assertIn('numerical_failure_last_error_time', run.status_flags)

        run.log_status_flag('numerical_failure')
        run.refresh_from_db()
        self.assertEqual(run.status_flags, {'numerical_failure': False})

    def test_finish(self):
        run = ExperimentRun.objects.create(subcommand='dos')
        run.finish('failed', {'files': {}})
        run.refresh_from_db()
        self.assertEqual(run.status, 'failed')
        self.assertIsNotNone(run.finished)
        self.assertIn('failed', str(run).lower())


class ConfigTests(SimpleTestCase):
    def test_defaults_are_filled(self):
        config = parse_config(free_chain_config())
        self.assertEqual(config.normalization, 'volume')
        self.assertEqual(config.record['checks']['boundary_padding'], 10)
        self.assertEqual(config.spec.base_seed, 3)
        self.assertEqual(config.folner.volume(1), 20)

    def test_hash_is_stable_across_reparsing(self):
        first = parse_config(free_chain_config())
        second = parse_config(json.loads(json.dumps(first.record)))
        self.assertEqual(first.config_hash, second.config_hash)
        self.assertEqual(first.config_hash, config_hash(first.record))

    def test_collects_every_error(self):
        config = free_chain_config(version=2, realizations=0)
        config['folner'] = {'sides': [20, 10]}
        with self.assertRaises(ConfigError) as ctx:
            parse_config(config)
        self.assertIn('version', ctx.exception.errors)
        self.assertIn('realizations', ctx.exception.errors)

    def test_schedule_errors_name_the_field(self):
        config = free_chain_config(folner={'sides': [20, 10]})
        with self.assertRaises(ConfigError) as ctx:
            parse_config(config)
        self.assertIn('folner.sides', ctx.exception.errors)

    def test_tolerances(self):
        config = parse_config(free_chain_config(tolerances={'trace_formula': 0.05}))
        self.assertEqual(config.tolerances['trace_formula'], 0.05)
        self.assertEqual(config.tolerances['laplace_route'], 0.02)
        for bad in ({'voronoi_face': 1e-6}, {'no_such': 1}, {'trace_formula': -1}):
            with self.assertRaises(ConfigError):
                parse_config(free_chain_config(tolerances=bad))

    def test_model_domain_errors(self):
        config = free_chain_config(model={'model': 'anderson', 'd': 1, 'potential_low': 1, 'potential_high': -1})
        with self.assertRaises(ConfigError) as ctx:
            parse_config(config)
        self.assertIn('model', ctx.exception.errors)

    def test_boundary_scales_fit_the_dense_threshold(self):
        folner = parse_config(free_chain_config()).folner
        with override_settings(IDS_DENSE_THRESHOLD=35):
            kept = _boundary_folner(folner, 10)
        self.assertEqual(len(kept), 1)
        self.assertEqual(kept.region(0).site_count, 10)
        with override_settings(IDS_DENSE_THRESHOLD=20):
            self.assertIsNone(_boundary_folner(folner, 10))
        self.assertEqual(len(_boundary_folner(folner, 10)), 2)
