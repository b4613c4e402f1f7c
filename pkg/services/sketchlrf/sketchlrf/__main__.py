import sys

from sketchlrf.cli import main

sys.exit(main())
