import sys

from reconlab.harness.cli import main

sys.exit(main())
