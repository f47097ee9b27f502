import sys

from twowall.cli import main

sys.exit(main())
