"""
IM-DCL command-line launcher.

Same commands as ``python -m src.cli``; runnable from a checkout without
installing the package.

Usage:
    python scripts/imdcl.py adapt --config configs/near.cfg --set episodes=100
    python scripts/imdcl.py ablate --config configs/distant.cfg --jobs 4
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from src.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
