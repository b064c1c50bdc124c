# core/management/commands/ids.py
from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Empirical IDS over a Følner sequence, with the self-averaging report'
    subcommand = 'ids'
