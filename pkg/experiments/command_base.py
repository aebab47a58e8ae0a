"""
Shared plumbing for the experiment management commands
"""
import json
import logging
import math
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone

from core.exceptions import GupError

from .artifacts import ArtifactWriter
from .exceptions import ConfigError
from .models import ExperimentRun
from .run_config import load_run_config

logger = logging.getLogger(__name__)


def parse_float_list(text):
    """'0.5,0.7' -> [0.5, 0.7]; 'start:stop:step' -> inclusive arithmetic range"""
    text = text.strip()
    try:
        if ':' in text:
            start, stop, step = (float(part) for part in text.split(':'))
            if step <= 0 or stop < start:
                raise ConfigError(f'Invalid range {text!r}: need start <= stop and a positive step')
            count = math.floor((stop - start) / step + 1e-9) + 1
            return [start + i * step for i in range(count)]
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError as exc:
        raise ConfigError(f'Cannot parse number list {text!r}: {exc}') from exc


class ExperimentCommand(BaseCommand):
    """
    Base class: loads the run config, records the run in the ledger, writes
    artifacts through an ArtifactWriter and turns toolkit errors into a JSON
    error report on stderr plus a non-zero exit.

    Subclasses implement ``add_command_arguments``, ``config_overrides`` and
    ``run(config, writer, options)``; ``run`` returns a short summary line.
    """
    stochastic = False

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON run-config file')
        parser.add_argument('--output-dir', help='Directory for artifacts (defaults to GUP_OUTPUT_DIR/<command>)')
        parser.add_argument('--seed', type=int, help='Master seed')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options):
        return {}

    def requires_seed(self, options):
        return self.stochastic

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        run = None
        try:
            if self.requires_seed(options) and options.get('seed') is None:
                raise ConfigError(f'{self.command_name} is stochastic: --seed is required')
            config = load_run_config(options.get('config'), self.config_overrides(options))
            directory = Path(options.get('output_dir') or Path(config.output_dir) / self.command_name)
            run = self._start_run(options, config, directory)
            writer = ArtifactWriter(directory)
            summary = self.run(config, writer, options)
            writer.manifest(
                self.command_name,
                _arguments(options),
                config_hash=config.config_hash,
                seed=options.get('seed'),
            )
        except GupError as exc:
            self._finish_run(run, 'failed', str(exc))
            report = {'error': type(exc).__name__, 'message': str(exc), 'details': exc.details()}
            self.stderr.write(json.dumps(report, sort_keys=True, default=str))
            logger.error(f'{self.command_name} failed: {exc}')
            raise CommandError(str(exc), returncode=2) from exc
        self._finish_run(run, 'succeeded')
        logger.info(f'{self.command_name} wrote artifacts to {directory}')
        if summary:
            self.stdout.write(self.style.SUCCESS(summary))

    def run(self, config, writer, options):
        raise NotImplementedError

    def _start_run(self, options, config, directory):
        try:
            return ExperimentRun.objects.create(
                command=self.command_name,
                seed=options.get('seed'),
                config_hash=config.config_hash,
                output_dir=str(directory),
                arguments=_arguments(options),
            )
        except DatabaseError as exc:
            logger.warning(f'Run ledger unavailable, continuing without it: {exc}')
            return None

    def _finish_run(self, run, status, error=''):
        if run is None:
            return
        run.status = status
        run.error = error
        run.finished_at = timezone.now()
        try:
            run.save(update_fields=['status', 'error', 'finished_at'])
        except DatabaseError as exc:
            logger.warning(f'Could not update run {run.pk}: {exc}')


def _arguments(options):
    """Command options that affect results, JSON-ready"""
    ignored = {
        'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color', 'skip_checks',
        'stdout', 'stderr',
    }
    return {
        key: str(value) if isinstance(value, Path) else value
        for key, value in sorted(options.items())
        if key not in ignored
    }
