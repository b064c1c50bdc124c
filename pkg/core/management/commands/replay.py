# core/management/commands/replay.py
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from core.exceptions import ConfigError, IdsError
from core.experiments import replay
from core.management.base import EXIT_ERROR, EXIT_FAILED_CHECK, config_error
from core.models import ExperimentRun


class Command(BaseCommand):
    help = 'Rerun a recorded run from its manifest and compare the CSV artifacts byte for byte'

    def add_arguments(self, parser):
        parser.add_argument('manifest', help='manifest.json of a previous run')
        parser.add_argument('--out', help='Output directory (default: <run>/replay)')
        parser.add_argument('--workers', type=int, help='Worker processes (default: as recorded)')

    def handle(self, *args, **options):
        start_time = timezone.now()
        run = ExperimentRun.objects.create(subcommand='replay', output_dir=options['out'] or '')
        try:
            result = replay(options['manifest'], out_dir=options['out'], workers=options['workers'])
        except ConfigError as e:
            run.log_status_flag('replay_refused', '; '.join(e.diagnostics()) or str(e))
            run.finish('error')
            raise config_error(e)
        except IdsError as e:
            run.log_status_flag('replay_error', str(e))
            run.finish('error')
            raise CommandError(str(e), returncode=EXIT_ERROR)

        run.config = result.manifest['config']
        run.config_hash = result.manifest['config_hash']
        run.workers = result.manifest['workers']
        run.save(update_fields=['config', 'config_hash', 'workers'])
        if result.expected_divergence:
            run.log_status_flag('expected_divergence', f"config altered; differing: {', '.join(result.differing)}")
        run.finish('passed' if result.identical or result.expected_divergence else 'failed', result.manifest)

        duration = (timezone.now() - start_time).total_seconds()
        self.stdout.write("\n" + "=" * 70)
        self.stdout.write(f"Replayed {result.subcommand} in {duration:.1f} seconds")
        if result.identical:
            self.stdout.write(self.style.SUCCESS("  ✓ CSV artifacts are byte-identical"))
        elif result.expected_divergence:
            self.stdout.write(self.style.WARNING(
                f"  ⚠  Expected divergence (config altered): {', '.join(result.differing)}"
            ))
        else:
            self.stdout.write(self.style.ERROR(f"  ✗ Differing artifacts: {', '.join(result.differing)}"))
        self.stdout.write("=" * 70)

        if not (result.identical or result.expected_divergence):
            raise CommandError("replay produced different CSV artifacts", returncode=EXIT_FAILED_CHECK)
