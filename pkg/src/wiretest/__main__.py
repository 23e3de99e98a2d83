"""Allow ``python3 -m wiretest``."""

import sys

from .cli import main

sys.exit(main())
