import sys

from scrom.main import main

sys.exit(main())
