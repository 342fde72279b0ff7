import sys

from filtereval.cli import main

sys.exit(main())
