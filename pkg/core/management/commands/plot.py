# core/management/commands/plot.py
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.management.base import EXIT_ERROR
from core.models import ExperimentRun
from core.reports import plot_directory


class Command(BaseCommand):
    help = 'Render SVG plots from the CSV artifacts of a run (no recomputation)'

    def add_arguments(self, parser):
        parser.add_argument('directory', help='Run output directory holding the CSV artifacts')
        parser.add_argument('--out', help='Where to write the SVGs (default: the run directory)')

    def handle(self, *args, **options):
        directory = Path(options['directory'])
        if not directory.is_dir():
            raise CommandError(f"{directory} is not a directory", returncode=EXIT_ERROR)

        run = ExperimentRun.objects.create(subcommand='plot', output_dir=str(options['out'] or directory))
        try:
            written = plot_directory(directory, options['out'])
        except (OSError, KeyError, ValueError) as e:
            run.log_status_flag('plot_error', str(e))
            run.finish('error')
            raise CommandError(f"cannot plot {directory}: {e}", returncode=EXIT_ERROR)

        run.finish('passed', {'files': [str(p) for p in written]})
        if not written:
            self.stdout.write(self.style.WARNING(f"No known CSV artifacts in {directory}"))
            return
        for path in written:
            self.stdout.write(self.style.SUCCESS(f"  ✓ {path}"))
