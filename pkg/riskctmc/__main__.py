import sys

from riskctmc.main import main

sys.exit(main())
