import sys

from gaussnet.cli import main

sys.exit(main())
