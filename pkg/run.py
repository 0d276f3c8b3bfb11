"""Script for interfacing with the library from the commandline. Any
pipeline of rieszEL can be run from here, with settings from flags or
from a json file passed with --load_config

Example:
    python run.py minimize --alpha 2 --lambda 0 --method grid --out runs/semicircle
"""
import sys

from rieszEL.cli import main

if __name__ == '__main__':
    sys.exit(main())
