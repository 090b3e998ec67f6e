#!/usr/bin/env python3
"""
pushfilter - interactive visuo-tactile perception of object shape and physics

Usage:
    python app.py <command> [options]
    python app.py --help
"""

import sys
from src.main import main

if __name__ == '__main__':
    sys.exit(main())
