"""
Depth shift caused by a 3D height error, tabulated over depth
"""
from core.simulator import amplification_study
from experiments.command_base import ExperimentCommand, parse_float_list

COLUMNS = ('depth', 'h2d', 'shift_plus', 'shift_minus', 'shift_minus_inverse')


class Command(ExperimentCommand):
    help = 'Tabulate the depth shift produced by a +-jitter 3D height error at each depth'

    def add_command_arguments(self, parser):
        parser.add_argument('--h3d', type=float, default=1.5, help='3D object height (m)')
        parser.add_argument('--jitter', type=float, default=0.1, help='3D height error (m)')
        parser.add_argument('--depths', default='10:80:10', help='start:stop:step or comma list (m)')
        parser.add_argument('--f', type=float, help='Focal length (px); defaults to the configured camera')

    def run(self, config, writer, options):
        depths = parse_float_list(options['depths'])
        f = options['f'] or config.scene.camera.f
        rows = amplification_study(depths, options['h3d'], options['jitter'], f)

        writer.json('amplification.json', {
            'h3d': options['h3d'],
            'jitter': options['jitter'],
            'f': f,
            'rows': [{name: getattr(row, name) for name in COLUMNS} for row in rows],
        })
        writer.csv('amplification.csv', COLUMNS, [[getattr(row, name) for name in COLUMNS] for row in rows])

        self.stdout.write(f'{"depth":>8} {"h2d":>10} {"shift+":>9} {"shift-":>9} {"inverse":>9}')
        for row in rows:
            self.stdout.write(
                f'{row.depth:8.2f} {row.h2d:10.3f} {row.shift_plus:+9.3f} '
                f'{row.shift_minus:+9.3f} {row.shift_minus_inverse:+9.3f}'
            )
        return f'Wrote {len(rows)} amplification rows'
