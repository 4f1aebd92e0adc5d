import sys

from risemi.cli import main

sys.exit(main())
