import sys

from platoonlab.cli import main

sys.exit(main())
