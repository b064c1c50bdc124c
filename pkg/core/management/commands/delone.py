# core/management/commands/delone.py
from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Generate and validate a Delone set and export its Voronoi operator'
    subcommand = 'delone'
