"""
Main entry point for the missing-mass risk command line.
Run this file with a subcommand, e.g. `python main.py optimize --target gt-uniform`.
"""
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

if __name__ == "__main__":
    from app.cli import main

    main()
