import sys

from metarev.cli import main

sys.exit(main())
