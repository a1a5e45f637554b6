import sys

from maskbench.cli import main

sys.exit(main())
