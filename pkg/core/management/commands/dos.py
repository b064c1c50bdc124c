# core/management/commands/dos.py
from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Monte-Carlo estimate of the abstract density of states on a padded fundamental domain'
    subcommand = 'dos'
