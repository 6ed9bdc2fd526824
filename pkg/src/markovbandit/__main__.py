import sys

from markovbandit.cli import main

sys.exit(main())
