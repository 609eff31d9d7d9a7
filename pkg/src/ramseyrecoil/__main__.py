"""Run the command-line interface with ``python -m ramseyrecoil``."""

import sys

from ramseyrecoil.cli import main

sys.exit(main())
