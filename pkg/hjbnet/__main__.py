import sys

from hjbnet.cli import main


sys.exit(main())
