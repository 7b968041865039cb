import sys
from pathlib import Path

# let test modules import the shared generators in tests/gen.py
sys.path.insert(0, str(Path(__file__).resolve().parent))
