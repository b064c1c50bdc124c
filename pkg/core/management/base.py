# core/management/base.py
import logging

from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from core.exceptions import ConfigError, IdsError, NumericalError
from core.experiments import load_config, run_pipeline
from core.models import ExperimentRun
from dos.parallel import default_workers

logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_FAILED_CHECK = 2


def config_error(error):
    """CommandError carrying every field-path diagnostic of a ConfigError."""
    diagnostics = error.diagnostics()
    details = '; '.join(diagnostics) if diagnostics else ''
    return CommandError(f"{error}: {details}" if details else str(error), returncode=EXIT_ERROR)


class PipelineCommand(BaseCommand):
    """Runs one pipeline from a JSON config and records it in the ledger."""

    subcommand = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the experiment config (JSON)')
        parser.add_argument('--out', help='Output directory (default: output_dir from the config)')
        parser.add_argument('--workers', type=int, help='Worker processes (default: IDS_WORKERS)')
        parser.add_argument('--seed-override', type=int, help='Replace the base seed of the config')
        parser.add_argument(
            '--format',
            choices=['csv', 'json', 'xlsx'],
            default='csv',
            help='Extra table format written next to the CSV artifacts',
        )

    def handle(self, *args, **options):
        start_time = timezone.now()
        try:
            config = load_config(options['config'], seed_override=options['seed_override'])
        except ConfigError as e:
            for line in e.diagnostics():
                self.stderr.write(self.style.ERROR(f"  {line}"))
            raise config_error(e)

        workers = options['workers'] or default_workers()
        if workers < 1:
            raise CommandError(f"--workers must be at least 1, got {workers}", returncode=EXIT_ERROR)
        out_dir = options['out'] or config.output_dir or f"runs/{self.subcommand}-{config.config_hash[:12]}"
        formats = ('csv',) if options['format'] == 'csv' else ('csv', options['format'])

        self.stdout.write(f"Running {self.subcommand} at {start_time.strftime('%Y-%m-%d %H:%M:%S')}")
        self.stdout.write(f"Config hash: {config.config_hash}")
        self.stdout.write(f"Model: {config.spec.model}, {workers} worker(s), output in {out_dir}\n")

        run = ExperimentRun.objects.create(
            subcommand=self.subcommand,
            config=config.record,
            config_hash=config.config_hash,
            output_dir=str(out_dir),
            workers=workers,
        )
        try:
            result, manifest = run_pipeline(self.subcommand, config, out_dir, workers, formats)
        except NumericalError as e:
            logger.exception(f"Numerical failure in {self.subcommand}")
            run.log_status_flag('numerical_failure', f"{e} (matrix dumped to {e.dump_path})")
            run.finish('error')
            raise CommandError(f"{e}; matrix dumped to {e.dump_path}", returncode=EXIT_ERROR)
        except ConfigError as e:
            run.log_status_flag('config_error', '; '.join(e.diagnostics()) or str(e))
            run.finish('error')
            raise config_error(e)
        except IdsError as e:
            logger.error(f"{self.subcommand} failed: {e}")
            run.log_status_flag(f"{self.subcommand}_error", str(e))
            run.finish('error')
            raise CommandError(str(e), returncode=EXIT_ERROR)

        run.log_status_flag(f"{self.subcommand}_error")
        for flag in result.flags:
            run.log_status_flag(flag, f"{self.subcommand} raised {flag}")
        run.finish('passed' if result.passed else 'failed', manifest)

        duration = (timezone.now() - start_time).total_seconds()
        self.stdout.write("\n" + "=" * 70)
        self.stdout.write(f"Completed in {duration:.1f} seconds")
        self.stdout.write(f"  Artifacts: {len(manifest['files'])} file(s) in {out_dir}")
        for flag in result.flags:
            self.stdout.write(self.style.WARNING(f"  ⚠  {flag}"))
        if result.passed:
            self.stdout.write(self.style.SUCCESS("  ✓ All checks passed"))
        else:
            self.stdout.write(self.style.ERROR("  ✗ At least one check failed"))
        self.stdout.write("=" * 70)

        if not result.passed:
            raise CommandError(f"{self.subcommand}: a check failed, see {out_dir}", returncode=EXIT_FAILED_CHECK)
