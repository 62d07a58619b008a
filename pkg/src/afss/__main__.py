import sys

from afss.cli import main

sys.exit(main())
