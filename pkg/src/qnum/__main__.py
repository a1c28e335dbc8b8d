import sys

from qnum.cli import main

sys.exit(main())
