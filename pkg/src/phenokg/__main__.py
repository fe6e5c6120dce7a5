"""Entry point for ``python3 -m phenokg``."""

import sys

from .cli import main

sys.exit(main())
