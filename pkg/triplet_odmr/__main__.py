import sys

from .master import main

sys.exit(main())
