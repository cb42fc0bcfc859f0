import sys

from polariscope.cli import main

sys.exit(main())
