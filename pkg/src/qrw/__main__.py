import sys

from qrw.cli import main

sys.exit(main())
