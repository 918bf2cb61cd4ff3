import sys

from taro_lab.main import main

sys.exit(main())
