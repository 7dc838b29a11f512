import sys

from regimekit.cli import main

sys.exit(main())
