"""
Trace the hierarchical task scheduler over a loss history
"""
import csv
from pathlib import Path

from core.htl import HTLState, epoch_totals, run_schedule, synthetic_loss_curves
from experiments.command_base import ExperimentCommand
from experiments.exceptions import ConfigError

TRACE_HEADER = ('epoch', 'task', 'loss', 'ls', 'alpha', 'weight')
TOTALS_HEADER = ('epoch', 'total_sum', 'total_htl')


def read_loss_csv(path, tasks):
    """Per-task loss curves from a CSV with an ``epoch`` column and one column per task"""
    try:
        with open(path, encoding='utf-8', newline='') as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise ConfigError(f'Cannot read loss file {path}: {exc}') from exc
    if not rows:
        raise ConfigError(f'Loss file {path} has no rows')
    missing = set(tasks) - set(rows[0])
    if missing:
        raise ConfigError(f'Loss file {path} lacks columns for tasks {sorted(missing)}')
    rows.sort(key=lambda row: int(row.get('epoch') or 0))
    try:
        return {task: [float(row[task]) for row in rows] for task in tasks}
    except ValueError as exc:
        raise ConfigError(f'Loss file {path} holds a non-numeric loss: {exc}') from exc


class Command(ExperimentCommand):
    help = 'Run the hierarchical task-learning scheduler and emit per-epoch weights'

    def add_command_arguments(self, parser):
        parser.add_argument('--losses', help='CSV of per-epoch task losses; synthetic curves when omitted')
        parser.add_argument('--epochs', type=int, help='Total epochs T')
        parser.add_argument('--window', type=int, help='Trend window K')
        parser.add_argument('--noise', type=float, default=0.01, help='Relative noise of synthetic curves')

    def requires_seed(self, options):
        return not options['losses']

    def config_overrides(self, options):
        return {'htl': {'total_epochs': options['epochs'], 'window': options['window']}}

    def run(self, config, writer, options):
        state = HTLState(config.htl.task_graph(), config.htl.total_epochs, config.htl.window)
        if options['losses']:
            curves = read_loss_csv(Path(options['losses']), state.order)
        else:
            curves = synthetic_loss_curves(state.order, state.total_epochs, options['seed'], noise=options['noise'])
        records = run_schedule(state, curves)
        totals = epoch_totals(records)

        rows = [[getattr(record, name) for name in TRACE_HEADER] for record in records]
        writer.csv('htl_trace.csv', TRACE_HEADER, rows)
        writer.csv('htl_totals.csv', TOTALS_HEADER, [[getattr(total, name) for name in TOTALS_HEADER] for total in totals])
        writer.json('htl_trace.json', {
            'order': list(state.order),
            'graph': {task: sorted(pre) for task, pre in sorted(state.graph.items())},
            'total_epochs': state.total_epochs,
            'window': state.window,
            'records': [{name: getattr(record, name) for name in TRACE_HEADER} for record in records],
            'totals': [{name: getattr(total, name) for name in TOTALS_HEADER} for total in totals],
        })
        final = {record.task: record.weight for record in records if record.epoch == state.epoch}
        for task in state.order:
            self.stdout.write(f'{task:<10} final weight {final[task]:.4f}')
        last = totals[-1]
        self.stdout.write(f'total loss sum={last.total_sum:.4f} htl={last.total_htl:.4f}')
        return f'Traced {state.epoch + 1} epochs for {len(state.order)} tasks'
