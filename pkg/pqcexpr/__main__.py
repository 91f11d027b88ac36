import sys

from pqcexpr.cli import main

sys.exit(main())
