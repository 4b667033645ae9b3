import sys

from crackSeg.cli import main

sys.exit(main())
