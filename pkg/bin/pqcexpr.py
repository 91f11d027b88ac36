import sys
sys.path.append(".")
from pqcexpr.cli import main

if __name__ == '__main__':
    sys.exit(main())
