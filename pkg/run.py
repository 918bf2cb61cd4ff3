"""
Simple startup script for the taro-lab command line
Handles Python path configuration automatically
"""
import os
import sys

# Add project root to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

if __name__ == "__main__":
    from taro_lab.main import main

    sys.exit(main())
