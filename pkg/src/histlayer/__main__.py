import sys

from histlayer.cli import main

sys.exit(main())
