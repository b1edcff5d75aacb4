import sys

from sindycp.cli import main

sys.exit(main())
