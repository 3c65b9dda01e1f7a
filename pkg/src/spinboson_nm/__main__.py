import sys

from .toolcli.cli import main

sys.exit(main())
