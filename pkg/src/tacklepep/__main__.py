import sys

from tacklepep.cli import main

sys.exit(main())
