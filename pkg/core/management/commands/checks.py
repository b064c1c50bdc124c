# core/management/commands/checks.py
from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Trace formula, Laplace route, boundary independence, dichotomy and spectrum constancy checks'
    subcommand = 'check'
