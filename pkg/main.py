#!/usr/bin/env python3
"""
rgnet
Keypoint localization with hierarchical rectified Gaussian models:
layer-wise QP inference unrolled into a trainable network.
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))


def main():
    """Main entry point"""
    from cli.app import main as run_cli
    run_cli()


if __name__ == "__main__":
    main()
