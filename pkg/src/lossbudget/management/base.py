from django.core.management.base import BaseCommand, CommandError

from lossbudget.exceptions import LossAnalysisError
from lossbudget.utils import resolve_path


class AnalysisCommand(BaseCommand):
    """
    Base class of the lossbudget commands.

    Subclasses implement ``run``; analysis errors become ``CommandError`` so
    the process exits non-zero with the offending file or label in the message.
    """

    def run(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except LossAnalysisError as e:
            raise CommandError(f'{type(e).__name__}: {e}') from e

    def add_out_argument(self, parser, required=True):
        parser.add_argument(
            '--out',
            type=str,
            required=required,
            help='Output directory; files are written atomically'
        )

    def path(self, value):
        """A command-line path, with ``fixture:<name>`` pointing into the bundled datasets."""
        path = resolve_path(value)
        if not path.exists():
            raise CommandError(f'{path}: file not found')
        return path

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warn(self, message):
        self.stdout.write(self.style.WARNING(message))


def parse_pairs(values, option):
    """``['A=1', 'B=2:0.1']`` -> ``{'A': '1', 'B': '2:0.1'}``."""
    pairs = {}
    for value in values or ():
        key, sep, rest = value.partition('=')
        if not sep or not key:
            raise CommandError(f'{option} expects KEY=VALUE, got {value!r}')
        pairs[key] = rest
    return pairs


def parse_labels(values):
    """Repeated or comma-separated labels, in order and without duplicates."""
    if isinstance(values, str):
        values = [values]
    labels = []
    for value in values or ():
        for label in value.split(','):
            label = label.strip()
            if label and label not in labels:
                labels.append(label)
    return labels
