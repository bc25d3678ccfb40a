"""
Command-Line Interface Module

One module per tpaws-qc subcommand; cli.main dispatches.
"""

__all__ = ['main', 'calibrate', 'assess', 'inject', 'evaluate', 'report', 'experiment']
