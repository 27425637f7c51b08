import sys

from uagnn.cli import main

sys.exit(main())
