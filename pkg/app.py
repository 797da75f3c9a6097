"""
Command-line entry point for the continuum Pólya walk toolkit

    python app.py simulate scenarios/ehrenfest.cfg
    python app.py --format json analyze scenarios/hill.cfg --u-grid "0.1,0.05;0,0.2"
    python app.py verify canonical
"""
import sys

from polya.cli import main

if __name__ == '__main__':
    sys.exit(main())
