import argparse

from django.core.management.base import BaseCommand

from memstate import cli


class Command(BaseCommand):
    help = 'Run a memstate pipeline subcommand: synth, preprocess, fit, estimate, eval or drift.'

    def add_arguments(self, parser):
        parser.add_argument('argv', nargs=argparse.REMAINDER)

    def handle(self, *args, **options):
        status = cli.run(options['argv'], stdout=self.stdout, stderr=self.stderr)
        if status:
            raise SystemExit(status)
