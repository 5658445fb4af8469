import sys

from miw.cli import main

sys.exit(main())
