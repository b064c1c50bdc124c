# core/management/commands/atoms.py
from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Finite-cluster atom oracle compared with the empirical IDS jumps (planar percolation)'
    subcommand = 'atoms'
